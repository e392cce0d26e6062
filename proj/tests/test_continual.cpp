#include <doctest.h>

#include <fstream>
#include <map>

#include "fclsim/continual.hpp"
#include "fclsim/optimizer.hpp"
#include "fclsim/training.hpp"
#include "oracles.hpp"

using namespace fclsim;

namespace {

ParameterVector vec(std::vector<double> v) { return ParameterVector(std::move(v), nullptr); }

// Model whose output is the constant c for every input: zero head weights.
Mlp constant_model(std::mt19937_64 &rng, double c) {
  Mlp m = oracle::random_model(rng);
  auto &head = m.linear(m.hidden_count());
  std::fill(head.weight.data().begin(), head.weight.data().end(), 0.0);
  std::fill(head.bias.begin(), head.bias.end(), c);
  return m;
}

}  // namespace

TEST_CASE("fisher vanishes at an exact optimum") {
  std::mt19937_64 rng(1);
  const Mlp m = constant_model(rng, 3.0);
  Dataset shard = synthetic_generate(50, 2, 0.0).data;
  for (auto &s : shard.samples) s.labels.fill(3.0);
  const auto f = compute_fisher(m, shard, 200, 1);
  double worst = 0;
  for (double v : f.values) worst = std::max(worst, v);
  CHECK(worst <= 1e-10);
}

TEST_CASE("fisher is nonnegative and finite") {
  std::mt19937_64 rng(2);
  const auto shard = synthetic_generate(30, 3, 0.1).data;
  for (int t = 0; t < 50; ++t) {
    const Mlp m = oracle::random_model(rng);
    const auto f = compute_fisher(m, shard, 10, static_cast<std::uint64_t>(t));
    REQUIRE(f.values.size() == m.layout()->size());
    for (double v : f.values) {
      CHECK(v >= 0.0);
      CHECK(std::isfinite(v));
    }
  }
}

TEST_CASE("fisher on one sample is the squared gradient") {
  std::mt19937_64 rng(3);
  const Mlp m = oracle::random_model(rng);
  const auto shard = synthetic_generate(1, 4, 0.1).data;
  const auto f = compute_fisher(m, shard, 200, 1);
  // Per-sample gradient via finite differences of the eval-mode loss.
  const Batch b = make_batch(shard);
  const auto g = compute_gradients(m, b.features, b.labels, nullptr, Mode::eval).grad;
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(f.values[i] - g[i] * g[i]) <= 1e-12);
  const auto fd = oracle::finite_diff(
      [&](const std::vector<double> &v) {
        Mlp c = m;
        c.inject_params(ParameterVector(v, m.layout()));
        return mse_loss(c.predict(b.features), b.labels).value;
      },
      m.extract_params().values);
  const auto &trainable = m.layout()->trainable_mask();
  for (std::size_t i = 0; i < fd.size(); ++i)
    if (trainable[i]) CHECK(std::abs(std::sqrt(f.values[i]) - std::abs(fd[i])) <= 1e-6 * std::max(1.0, std::abs(fd[i])));
}

TEST_CASE("fisher subsampling is seeded") {
  std::mt19937_64 rng(4);
  const Mlp m = oracle::random_model(rng);
  const auto shard = synthetic_generate(100, 5, 0.1).data;
  CHECK(compute_fisher(m, shard, 20, 7).values == compute_fisher(m, shard, 20, 7).values);
  CHECK_FALSE(compute_fisher(m, shard, 20, 7).values == compute_fisher(m, shard, 20, 8).values);
  CHECK_THROWS_AS(compute_fisher(m, Dataset{}, 20, 1), DataError);
}

TEST_CASE("ewc penalty examples") {
  std::vector<AnchorParams> anchors{{vec({1}), 0}};
  std::vector<ImportanceMap> imps{{{2.0}, ImportanceKind::fisher}};
  const auto p = ewc_penalty(vec({3}), anchors, imps, 1.0);
  CHECK(p.value == 4.0);
  CHECK(p.grad[0] == 4.0);

  const auto zero = ewc_penalty(vec({1}), anchors, imps, 1.0);
  CHECK(zero.value == 0.0);
  CHECK(zero.grad[0] == 0.0);

  // Two anchors accumulate.
  anchors.push_back({vec({0}), 1});
  imps.push_back({{1.0}, ImportanceKind::fisher});
  const auto two = ewc_penalty(vec({3}), anchors, imps, 1.0);
  CHECK(two.value == 4.0 + 4.5);
  CHECK(two.grad[0] == 4.0 + 3.0);

  CHECK_THROWS_AS(ewc_penalty(vec({3, 1}), anchors, imps, 1.0), ShapeError);
  std::vector<ImportanceMap> one_imp{imps[0]};
  CHECK_THROWS_AS(ewc_penalty(vec({3}), anchors, one_imp, 1.0), ShapeError);
}

TEST_CASE("penalty gradients match finite differences and vanish at the anchor") {
  std::mt19937_64 rng(5);
  const auto theta = oracle::random_model(rng).extract_params();
  std::vector<AnchorParams> anchors;
  std::vector<ImportanceMap> imps;
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int t = 0; t < 2; ++t) {
    anchors.push_back({oracle::random_model(rng).extract_params(), t});
    ImportanceMap imp{std::vector<double>(theta.size())};
    for (double &v : imp.values) v = u(rng);
    imps.push_back(imp);
  }
  const auto p = ewc_penalty(theta, anchors, imps, 3.0);
  const auto fd = oracle::finite_diff(
      [&](const std::vector<double> &v) {
        return ewc_penalty(ParameterVector(v, theta.layout), anchors, imps, 3.0).value;
      },
      theta.values, 1e-4);
  const auto &trainable = theta.layout->trainable_mask();
  for (std::size_t i = 0; i < fd.size(); ++i) {
    if (!trainable[i]) CHECK(p.grad[i] == 0.0);
    CHECK(oracle::rel_err(p.grad[i], fd[i], 1e-6) <= 1e-6);
  }
  std::vector<AnchorParams> self{{theta, 0}};
  std::vector<ImportanceMap> one{imps[0]};
  const auto at = ewc_penalty(theta, self, one, 3.0);
  CHECK(at.value == 0.0);
  for (double g : at.grad.values) CHECK(g == 0.0);
}

TEST_CASE("ewc online running sum") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImportanceMap f1{std::vector<double>(20)}, f2{std::vector<double>(20)};
  for (double &v : f1.values) v = u(rng);
  for (double &v : f2.values) v = u(rng);

  const ImportanceMap zeros{std::vector<double>(20, 0.0)};
  CHECK(ewc_online_update(zeros, f1, 1.0).values == f1.values);
  CHECK(ewc_online_update({}, f1, 1.0).values == f1.values);

  const auto r1 = ewc_online_update({}, f1, 1.0);
  const auto r2 = ewc_online_update(r1, f2, 1.0);
  for (std::size_t i = 0; i < 20; ++i) CHECK(r2.values[i] == f1.values[i] + f2.values[i]);
  CHECK(r2.kind == ImportanceKind::fisher_running);

  CHECK(ewc_online_update(r1, f2, 0.0).values == f2.values);
  CHECK_THROWS_AS(ewc_online_update(r1, ImportanceMap{{1.0}}, 1.0), ShapeError);
}

TEST_CASE("si accumulate and consolidate examples") {
  SiAccumulator acc(vec({0.0}), 0.1);
  GradientVector zero({0.0}, nullptr);
  std::vector<double> step{0.5};
  si_accumulate(acc, zero, step);
  CHECK(acc.omega_running[0] == 0.0);

  // One SGD step: delta = -lr*g, so w gains lr*g^2.
  SiAccumulator sgd(vec({1.0, 2.0}), 0.1);
  GradientVector g({0.5, -2.0}, nullptr);
  std::vector<double> delta{-0.1 * 0.5, 0.1 * 2.0};
  si_accumulate(sgd, g, delta);
  CHECK(sgd.omega_running[0] == doctest::Approx(0.1 * 0.25));
  CHECK(sgd.omega_running[1] == doctest::Approx(0.1 * 4.0));

  SiAccumulator unit(vec({0.0}), 0.1);
  unit.omega_running = {1.0};
  const auto omega = si_consolidate(unit, vec({1.0}));
  CHECK(omega.values[0] == doctest::Approx(1.0 / 1.1).epsilon(1e-15));
  CHECK(unit.omega_running[0] == 0.0);
  CHECK(unit.theta_at_task_start.values == std::vector<double>{1.0});

  SiAccumulator idle(vec({0.3, -0.2}), 0.1);
  const auto none = si_consolidate(idle, vec({0.3, -0.2}));
  CHECK(none.values == std::vector<double>{0.0, 0.0});

  SiAccumulator neg(vec({0.0}), 0.1);
  neg.omega_running = {-5.0};
  CHECK(si_consolidate(neg, vec({1.0})).values[0] == 0.0);
  CHECK_THROWS_AS(SiAccumulator(vec({0.0}), 0.0), ConfigError);
}

TEST_CASE("si path integral over a training run matches a step log replay") {
  const auto shard = synthetic_generate(64, 7, 0.1).data;
  std::mt19937_64 rng(7);
  Mlp m = Mlp::initialized({}, rng);
  Optimizer opt;
  SiAccumulator acc(m.extract_params(), 0.1);
  std::vector<std::pair<std::vector<double>, std::vector<double>>> log;
  TrainHooks hooks;
  hooks.after_step = [&](const GradientVector &g, const ParameterVector &before,
                         const ParameterVector &after) {
    std::vector<double> d(after.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = after[i] - before[i];
    si_accumulate(acc, g, d);
    log.emplace_back(g.values, d);
  };
  train_local(m, opt, shard, TrainContext{16, 3, 5}, hooks);
  REQUIRE(log.size() == 12);
  std::vector<long double> w(acc.omega_running.size(), 0.0L);
  for (const auto &[g, d] : log)
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += -static_cast<long double>(g[i]) * d[i];
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(std::abs(acc.omega_running[i] - static_cast<double>(w[i])) <= 1e-12);

  const auto omega = si_consolidate(acc, m.extract_params());
  for (double v : omega.values) {
    CHECK(v >= 0.0);
    CHECK(std::isfinite(v));
  }
}

TEST_CASE("mas importance") {
  std::mt19937_64 rng(8);
  SUBCASE("zero output layer gives zero importance on head weights") {
    const Mlp m = constant_model(rng, 0.0);
    const Matrix x = oracle::random_matrix(10, kFeatureCount, rng, 0, 1);
    const auto omega = mas_importance(m, x, 0, 1);
    const auto &w = m.layout()->find(4, TensorRole::weight);
    for (std::size_t i = w.offset; i < w.offset + w.size; ++i) CHECK(omega.values[i] == 0.0);
  }
  SUBCASE("nonnegative") {
    const Mlp m = oracle::random_model(rng);
    const Matrix x = oracle::random_matrix(10, kFeatureCount, rng, 0, 1);
    for (double v : mas_importance(m, x, 0, 1).values) CHECK(v >= 0.0);
  }
  SUBCASE("single sample equals |finite difference of squared output norm|") {
    const Mlp m = oracle::random_model(rng);
    const Matrix x = oracle::random_matrix(1, kFeatureCount, rng, 0, 1);
    const auto omega = mas_importance(m, x, 0, 1);
    const auto fd = oracle::finite_diff(
        [&](const std::vector<double> &v) {
          Mlp c = m;
          c.inject_params(ParameterVector(v, m.layout()));
          const Matrix y = oracle::forward(c, x, Mode::eval);
          double s = 0;
          for (double e : y.data()) s += e * e;
          return s;
        },
        m.extract_params().values);
    const auto &trainable = m.layout()->trainable_mask();
    for (std::size_t i = 0; i < fd.size(); ++i)
      if (trainable[i]) CHECK(oracle::rel_err(omega.values[i], std::abs(fd[i])) <= 1e-6);
  }
}

TEST_CASE("importance map csv export") {
  std::mt19937_64 rng(9);
  const Mlp m = oracle::random_model(rng);
  const auto f = compute_fisher(m, synthetic_generate(10, 1, 0.1).data, 0, 1);
  const auto path = std::filesystem::temp_directory_path() / "fclsim_importance.csv";
  save_importance_csv(f, *m.layout(), path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "layer,role,index,value");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == m.layout()->size());
}

TEST_CASE("reservoir buffer") {
  const auto task = synthetic_generate(375, 10, 0.1).data;
  const auto full = nr_store(ReplayBuffer(1000), task, 1);
  CHECK(full.stored().size() == 375);
  CHECK(full.stored() == task.samples);

  const auto empty = nr_store(ReplayBuffer(10), Dataset{}, 1);
  CHECK(empty.stored().empty());
  CHECK(empty.seen() == 0);

  Dataset stream = synthetic_generate(100, 11, 0.1).data;
  for (std::size_t i = 0; i < 100; ++i) stream.samples[i].features[1] = static_cast<double>(i);
  std::vector<int> hits(100, 0);
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    const auto b = nr_store(ReplayBuffer(10), stream, static_cast<std::uint64_t>(t));
    REQUIRE(b.stored().size() == 10);
    for (const auto &s : b.stored()) ++hits[static_cast<std::size_t>(s.features[1])];
  }
  for (int h : hits) CHECK(std::abs(h / static_cast<double>(trials) - 0.1) <= 0.02);

  CHECK_THROWS_AS(ReplayBuffer(0), ConfigError);
}

TEST_CASE("mixed batches") {
  const auto old_task = synthetic_generate(50, 12, 0.1).data;
  Dataset fresh = synthetic_generate(96, 13, 0.1).data;
  for (std::size_t i = 0; i < fresh.size(); ++i) fresh.samples[i].features[1] = 1000.0 + i;
  const auto buf = nr_store(ReplayBuffer(1000), old_task, 1);

  const auto batches = nr_mixed_batches(buf, fresh, 32, 0.5, 3, 0);
  REQUIRE(batches.size() == 6);
  std::map<double, int> seen;
  for (const auto &b : batches) {
    REQUIRE(b.features.rows() == 32);
    int from_new = 0;
    for (std::size_t r = 0; r < 32; ++r)
      if (b.features(r, 1) >= 1000.0) {
        ++from_new;
        ++seen[b.features(r, 1)];
      }
    CHECK(from_new == 16);
  }
  CHECK(seen.size() == 96);
  for (const auto &[k, v] : seen) CHECK(v == 1);

  const auto plain = nr_mixed_batches(ReplayBuffer(10), fresh, 32, 0.5, 3, 0);
  const auto ref = minibatches(fresh, 32, 3, 0);
  REQUIRE(plain.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(plain[i].features == ref[i].features);
    CHECK(plain[i].labels == ref[i].labels);
  }
  CHECK_THROWS_AS(nr_mixed_batches(ReplayBuffer(10), fresh, 200, 0.5, 3, 0), DataError);
}
