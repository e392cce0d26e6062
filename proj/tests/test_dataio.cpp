#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "fclsim/dataset.hpp"
#include "fclsim/error.hpp"
#include "oracles.hpp"

using namespace fclsim;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string &name) {
  auto dir = fs::temp_directory_path() / "fclsim_test_dataio";
  fs::create_directories(dir);
  return dir / name;
}

std::string header() {
  std::string h;
  for (const auto &c : default_feature_columns()) h += c + ",";
  for (std::size_t i = 0; i < label_columns().size(); ++i)
    h += label_columns()[i] + (i + 1 < label_columns().size() ? "," : "");
  return h;
}

std::string row(double flag, double base, double label) {
  std::string r = std::to_string(flag);
  for (int f = 1; f < 29; ++f) r += "," + std::to_string(base + f * 0.01);
  for (int a = 0; a < 8; ++a) r += "," + std::to_string(label);
  return r;
}

Dataset numbered(std::size_t n) {
  Dataset ds;
  ds.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.samples[i].features[1] = static_cast<double>(i);
    ds.samples[i].features[0] = i % 2 ? 1.0 : 0.0;
    ds.samples[i].labels.fill(3.0);
  }
  return ds;
}

std::multiset<double> ids(const Dataset &ds) {
  std::multiset<double> s;
  for (const auto &x : ds.samples) s.insert(x.features[1]);
  return s;
}

}  // namespace

TEST_CASE("load_csv: well-formed rows in file order") {
  const auto p = temp_file("three.csv");
  {
    std::ofstream f(p);
    f << header() << "\n" << row(1, 0.1, 1.0) << "\n" << row(0, 0.2, 2.5) << "\n"
      << row(1, 0.3, 5.0) << "\n";
  }
  const Dataset ds = load_csv(p);
  REQUIRE(ds.size() == 3);
  CHECK(ds.samples[0].features[0] == 1.0);
  CHECK(ds.samples[1].features[0] == 0.0);
  CHECK(ds.samples[1].labels[3] == 2.5);
  CHECK(ds.samples[2].labels[7] == 5.0);
  CHECK(ds.samples[2].features[28] == doctest::Approx(0.58));
}

TEST_CASE("load_csv: columns are matched by header name") {
  const auto p = temp_file("shuffled.csv");
  auto cols = default_feature_columns();
  std::vector<std::string> all(cols.begin(), cols.end());
  for (const auto &l : label_columns()) all.push_back(l);
  std::reverse(all.begin(), all.end());
  {
    std::ofstream f(p);
    for (std::size_t i = 0; i < all.size(); ++i) f << all[i] << (i + 1 < all.size() ? "," : "\n");
    for (std::size_t i = 0; i < all.size(); ++i) {
      const double v = all[i] == "f_within_circle" ? 1.0
                       : all[i].rfind("label_", 0) == 0 ? 2.0
                                                         : 0.5;
      f << v << (i + 1 < all.size() ? "," : "\n");
    }
  }
  const Dataset ds = load_csv(p);
  REQUIRE(ds.size() == 1);
  CHECK(ds.samples[0].features[0] == 1.0);
  CHECK(ds.samples[0].features[5] == 0.5);
  CHECK(ds.samples[0].labels[0] == 2.0);
}

TEST_CASE("load_csv: errors name the offending column or row") {
  const auto p = temp_file("bad.csv");
  auto expect_error = [&](const std::string &content, const std::string &needle) {
    { std::ofstream f(p); f << content; }
    try {
      load_csv(p);
      FAIL("expected DataError");
    } catch (const DataError &e) {
      const std::string msg = e.what();
      CHECK_MESSAGE(msg.find(needle) != std::string::npos, msg);
    }
  };
  std::string h = header();
  const std::string missing = h.substr(0, h.rfind(",label_vacuum_cleaning")) +
                              h.substr(h.find(",label_mopping_floor"));
  std::string short_row = row(1, 0.1, 3.0);
  short_row = short_row.substr(0, short_row.rfind(','));
  expect_error(missing + "\n" + short_row + "\n", "label_vacuum_cleaning");

  std::string bad = row(1, 0.1, 3.0);
  const auto first = bad.find(',') + 1;
  bad.replace(first, bad.find(',', first) - first, "abc");
  // Line numbers count the header as row 1.
  expect_error(h + "\n" + row(1, 0.1, 3.0) + "\n" + bad + "\n", "row 3, column f_01");
  expect_error(h + "\n" + row(1, 0.1, 6.0) + "\n", "label_");
  CHECK_THROWS_AS(load_csv(temp_file("does_not_exist.csv")), DataError);
}

TEST_CASE("save_csv / load_csv round trip on 1000 rows") {
  const auto syn = synthetic_generate(1000, 5, 0.3);
  const auto p = temp_file("thousand.csv");
  save_csv(syn.data, p);
  Dataset back = load_csv(p);
  REQUIRE(back.size() == 1000);
  back.provenance = syn.data.provenance;
  CHECK(back == syn.data);
  const auto p2 = temp_file("thousand2.csv");
  save_csv(back, p2);
  std::ifstream a(p, std::ios::binary), b(p2, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
}

TEST_CASE("train_test_split sizes, disjointness, determinism") {
  const Dataset ds = numbered(1000);
  const auto s = train_test_split(ds, 0.75, 1);
  CHECK(s.train.size() == 750);
  CHECK(s.test.size() == 250);
  auto all = ids(s.train);
  for (double v : ids(s.test)) all.insert(v);
  CHECK(all == ids(ds));
  CHECK(std::set<double>(all.begin(), all.end()).size() == 1000);

  const auto again = train_test_split(ds, 0.75, 1);
  CHECK(again.train == s.train);
  CHECK(again.test == s.test);
  CHECK_FALSE(train_test_split(ds, 0.75, 2).train == s.train);

  const auto odd = train_test_split(numbered(999), 0.75, 1);
  CHECK(odd.train.size() == 749);
  CHECK(odd.test.size() == 250);

  CHECK_THROWS_AS(train_test_split(Dataset{}, 0.75, 1), DataError);
  CHECK_THROWS_AS(train_test_split(ds, 1.0, 1), DataError);
  CHECK_THROWS_AS(train_test_split(ds, 0.0, 1), DataError);
}

TEST_CASE("partition_clients sizes and disjointness") {
  const Dataset ds = numbered(750);
  const auto ten = partition_clients(ds, 10, 3);
  REQUIRE(ten.size() == 10);
  std::multiset<double> all;
  for (std::size_t i = 0; i < ten.size(); ++i) {
    CHECK(ten[i].client_id == static_cast<int>(i));
    CHECK(ten[i].shard.size() == 75);
    for (double v : ids(ten[i].shard)) all.insert(v);
  }
  CHECK(all == ids(ds));

  const auto two = partition_clients(ds, 2, 3);
  CHECK(two[0].shard.size() == 375);
  CHECK(two[1].shard.size() == 375);

  const auto seven = partition_clients(numbered(7), 2, 3);
  CHECK(seven[0].shard.size() == 4);
  CHECK(seven[1].shard.size() == 3);

  for (std::size_t n : {1u, 3u, 7u, 9u}) {
    const auto parts = partition_clients(numbered(23), n, 4);
    std::size_t lo = 1000, hi = 0, total = 0;
    for (const auto &p : parts) {
      lo = std::min(lo, p.shard.size());
      hi = std::max(hi, p.shard.size());
      total += p.shard.size();
    }
    CHECK(hi - lo <= 1);
    CHECK(total == 23);
  }
  CHECK_THROWS_AS(partition_clients(numbered(3), 4, 1), DataError);
  CHECK_THROWS_AS(partition_clients(numbered(3), 0, 1), DataError);
}

TEST_CASE("split_tasks by indicator flag") {
  Dataset circles = numbered(10);
  for (auto &s : circles.samples) s.features[0] = 1.0;
  const auto c = split_tasks(circles);
  CHECK(c.task1.size() == 10);
  CHECK(c.task2.empty());

  Dataset mixed = numbered(100);
  for (std::size_t i = 0; i < 100; ++i) mixed.samples[i].features[0] = i < 60 ? 1.0 : 0.0;
  const auto m = split_tasks(mixed);
  CHECK(m.task1.size() == 60);
  CHECK(m.task2.size() == 40);
  auto u = ids(m.task1);
  for (double v : ids(m.task2)) u.insert(v);
  CHECK(u == ids(mixed));

  const auto syn = synthetic_generate(1000, 11, 0.1);
  const auto t = split_tasks(syn.data);
  const double sigma = std::sqrt(1000 * 0.25);
  CHECK(std::abs(static_cast<double>(t.task1.size()) - 500.0) <= 3 * sigma);
  CHECK(t.task1.size() + t.task2.size() == 1000);

  mixed.samples[5].features[0] = 0.5;
  CHECK_THROWS_AS(split_tasks(mixed), DataError);
}

TEST_CASE("augment doubles the dataset and leaves labels alone") {
  const auto syn = synthetic_generate(200, 2, 0.1);
  const Dataset zero = augment(syn.data, 0.0, 1);
  REQUIRE(zero.size() == 400);
  for (std::size_t i = 0; i < 200; ++i) {
    CHECK(zero.samples[i] == syn.data.samples[i]);
    CHECK(zero.samples[200 + i] == syn.data.samples[i]);
  }
  CHECK(zero.provenance == Provenance::augmented);

  const Dataset noisy = augment(syn.data, 0.01, 1);
  for (std::size_t i = 0; i < 200; ++i) {
    CHECK(noisy.samples[200 + i].labels == syn.data.samples[i].labels);
    CHECK(noisy.samples[200 + i].features[0] == syn.data.samples[i].features[0]);
  }
  CHECK(augment(syn.data, 0.01, 1) == noisy);
  CHECK_THROWS_AS(augment(syn.data, -1.0, 1), DataError);
  CHECK_THROWS_AS(augment(Dataset{}, 0.01, 1), DataError);
}

TEST_CASE("augment noise magnitude matches E|N(0, sigma)|") {
  // 3600 samples x 28 perturbed features > 1e5 draws.
  const auto syn = synthetic_generate(3600, 3, 0.1);
  const Dataset aug = augment(syn.data, 0.01, 9);
  long double sum = 0;
  std::size_t draws = 0;
  for (std::size_t i = 0; i < syn.data.size(); ++i)
    for (std::size_t f = 1; f < kFeatureCount; ++f) {
      sum += std::abs(aug.samples[syn.data.size() + i].features[f] - syn.data.samples[i].features[f]);
      ++draws;
    }
  CHECK(draws >= 100000);
  const double expected = 0.01 * std::sqrt(2.0 / M_PI);
  CHECK(std::abs(static_cast<double>(sum / draws) - expected) <= 0.05 * expected);
}

TEST_CASE("synthetic_generate determinism and exactness") {
  const auto a = synthetic_generate(500, 17, 0.2);
  const auto b = synthetic_generate(500, 17, 0.2);
  CHECK(a.data == b.data);
  CHECK(a.circle_map.weight == b.circle_map.weight);
  CHECK_FALSE(synthetic_generate(500, 18, 0.2).data == a.data);

  const auto clean = synthetic_generate(500, 17, 0.0);
  std::size_t checked = 0;
  for (const auto &s : clean.data.samples) {
    const auto y = clean.circle_map.apply(s.features);
    for (std::size_t k = 0; k < kActionCount; ++k) {
      CHECK(s.labels[k] >= 1.0);
      CHECK(s.labels[k] <= 5.0);
      if (y[k] > 1.0 && y[k] < 5.0) {
        CHECK(s.labels[k] == y[k]);
        ++checked;
      }
    }
  }
  CHECK(checked > 3500);
  CHECK_THROWS_AS(synthetic_generate(0, 1, 0.1), DataError);
}

TEST_CASE("least squares recovers the synthetic map") {
  const auto syn = synthetic_generate(10000, 21, 0.1);
  const auto coef = oracle::least_squares(syn.data);
  double worst = 0;
  for (std::size_t a = 0; a < kActionCount; ++a)
    for (std::size_t f = 0; f < kFeatureCount; ++f)
      worst = std::max(worst, std::abs(coef(a, f) - syn.circle_map.weight(a, f)));
  CHECK(worst <= 0.05);
}

TEST_CASE("task shift gives a distinct arrow map") {
  const auto syn = synthetic_generate(100, 4, 0.1, 0.2);
  CHECK_FALSE(syn.arrow_map.weight == syn.circle_map.weight);
  const auto none = synthetic_generate(100, 4, 0.1);
  CHECK(none.arrow_map.weight == none.circle_map.weight);
}

TEST_CASE("minibatch sizes and coverage") {
  auto sizes = [](std::size_t n, std::size_t b) {
    std::vector<std::size_t> out;
    for (const auto &batch : minibatch_indices(n, b, 1, 0)) out.push_back(batch.size());
    return out;
  };
  CHECK(sizes(10, 4) == std::vector<std::size_t>{4, 4, 2});
  CHECK(sizes(9, 4) == std::vector<std::size_t>{4, 4});
  CHECK(sizes(8, 4) == std::vector<std::size_t>{4, 4});

  std::set<std::size_t> seen;
  for (const auto &b : minibatch_indices(10, 4, 1, 0))
    for (auto i : b) CHECK(seen.insert(i).second);
  CHECK(seen.size() == 10);

  CHECK(minibatch_indices(50, 4, 7, 3) == minibatch_indices(50, 4, 7, 3));
  CHECK_FALSE(minibatch_indices(50, 4, 7, 3) == minibatch_indices(50, 4, 7, 4));

  CHECK_THROWS_AS(minibatch_indices(3, 4, 1, 0), DataError);
  CHECK_THROWS_AS(minibatch_indices(10, 1, 1, 0), DataError);

  const auto syn = synthetic_generate(10, 1, 0.1);
  const auto batches = minibatches(syn.data, 4, 1, 0);
  REQUIRE(batches.size() == 3);
  const auto idx = minibatch_indices(10, 4, 1, 0);
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t r = 0; r < idx[b].size(); ++r)
      CHECK(batches[b].features(r, 5) == syn.data.samples[idx[b][r]].features[5]);
}
