#include "fclsim/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "fclsim/rng.hpp"

namespace fclsim {

namespace {

std::vector<std::string> split_line(const std::string &line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    auto b = cell.find_first_not_of(" \t\r\"");
    auto e = cell.find_last_not_of(" \t\r\"");
    cells.push_back(b == std::string::npos ? std::string{}
                                           : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(const std::string &s, double &out) {
  if (s.empty()) return false;
  const char *first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng &rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

}  // namespace

const std::array<std::string, kActionCount> &label_columns() {
  static const std::array<std::string, kActionCount> names{
      "label_vacuum_cleaning",    "label_mopping_floor",
      "label_carry_warm_food",    "label_carry_cold_food",
      "label_carry_drinks",       "label_carry_small_objects",
      "label_carry_big_objects",  "label_cleaning"};
  return names;
}

std::vector<std::string> default_feature_columns() {
  std::vector<std::string> names{kTaskFlagColumn};
  for (std::size_t i = 1; i < kFeatureCount; ++i)
    names.push_back(fmt::format("f_{:02}", i));
  return names;
}

Batch make_batch(std::span<const SceneSample> samples) {
  Batch b{Matrix(samples.size(), kFeatureCount),
          Matrix(samples.size(), kActionCount)};
  for (std::size_t r = 0; r < samples.size(); ++r) {
    std::copy(samples[r].features.begin(), samples[r].features.end(),
              b.features.row(r).begin());
    std::copy(samples[r].labels.begin(), samples[r].labels.end(),
              b.labels.row(r).begin());
  }
  return b;
}

Batch make_batch(const Dataset &ds) { return make_batch(ds.samples); }

Batch make_batch(const Dataset &ds, std::span<const std::size_t> indices) {
  Batch b{Matrix(indices.size(), kFeatureCount),
          Matrix(indices.size(), kActionCount)};
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto &s = ds.samples.at(indices[r]);
    std::copy(s.features.begin(), s.features.end(), b.features.row(r).begin());
    std::copy(s.labels.begin(), s.labels.end(), b.labels.row(r).begin());
  }
  return b;
}

Dataset load_csv(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file", path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("missing header row", path.string());
  const auto header = split_line(line);

  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!column.emplace(header[i], i).second)
      throw DataError("duplicate column", "column " + header[i]);
  }
  if (!column.count(kTaskFlagColumn))
    throw DataError("missing feature column", std::string("column ") +
                                                  kTaskFlagColumn);
  std::vector<std::size_t> feature_cols{column.at(kTaskFlagColumn)};
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i].rfind("f_", 0) == 0 && header[i] != kTaskFlagColumn)
      feature_cols.push_back(i);
  if (feature_cols.size() != kFeatureCount)
    throw DataError("expected " + std::to_string(kFeatureCount) +
                        " feature columns (prefix f_), found " +
                        std::to_string(feature_cols.size()),
                    path.string());
  std::vector<std::size_t> label_cols;
  for (const auto &name : label_columns()) {
    auto it = column.find(name);
    if (it == column.end())
      throw DataError("missing label column", "column " + name);
    label_cols.push_back(it->second);
  }

  Dataset ds;
  ds.provenance = Provenance::real;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size())
      throw DataError("expected " + std::to_string(header.size()) +
                          " cells, found " + std::to_string(cells.size()),
                      "row " + std::to_string(row));
    SceneSample s;
    auto read = [&](std::size_t col, double &out) {
      if (!parse_double(cells[col], out))
        throw DataError("non-numeric cell '" + cells[col] + "'",
                        "row " + std::to_string(row) + ", column " +
                            header[col]);
    };
    for (std::size_t f = 0; f < kFeatureCount; ++f)
      read(feature_cols[f], s.features[f]);
    for (std::size_t a = 0; a < kActionCount; ++a) {
      read(label_cols[a], s.labels[a]);
      if (s.labels[a] < kLabelMin || s.labels[a] > kLabelMax)
        throw DataError("label outside [1,5]",
                        "row " + std::to_string(row) + ", column " +
                            header[label_cols[a]]);
    }
    ds.samples.push_back(s);
  }
  return ds;
}

void save_csv(const Dataset &ds, const std::filesystem::path &path,
              const std::vector<std::string> &feature_columns) {
  if (feature_columns.size() != kFeatureCount ||
      feature_columns.front() != kTaskFlagColumn)
    throw DataError("feature column list must have 29 names starting with " +
                    std::string(kTaskFlagColumn));
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file", path.string());
  std::string line;
  for (const auto &n : feature_columns) line += n + ",";
  for (std::size_t a = 0; a < kActionCount; ++a)
    line += label_columns()[a] + (a + 1 < kActionCount ? "," : "\n");
  out << line;
  for (const auto &s : ds.samples) {
    line.clear();
    for (double f : s.features) line += fmt::format("{},", f);
    for (std::size_t a = 0; a < kActionCount; ++a)
      line += fmt::format("{}{}", s.labels[a], a + 1 < kActionCount ? "," : "\n");
    out << line;
  }
}

SplitResult train_test_split(const Dataset &ds, double ratio,
                             std::uint64_t seed) {
  if (ds.empty()) throw DataError("train_test_split: empty dataset");
  if (!(ratio > 0.0 && ratio < 1.0))
    throw DataError("train_test_split: ratio must be in (0,1)");
  auto rng = make_rng(seed, {key(Stream::split)});
  const auto idx = shuffled_indices(ds.size(), rng);
  const auto cut = static_cast<std::size_t>(
      std::floor(ratio * static_cast<double>(ds.size())));
  SplitResult r;
  r.train.provenance = r.test.provenance = ds.provenance;
  for (std::size_t i = 0; i < idx.size(); ++i)
    (i < cut ? r.train : r.test).samples.push_back(ds.samples[idx[i]]);
  return r;
}

std::vector<ClientPartition> partition_clients(const Dataset &train,
                                               int n_clients,
                                               std::uint64_t seed) {
  if (n_clients < 1)
    throw DataError("partition_clients: need at least one client");
  const auto k = static_cast<std::size_t>(n_clients);
  if (k > train.size())
    throw DataError("partition_clients: " + std::to_string(n_clients) +
                    " clients for " + std::to_string(train.size()) +
                    " samples");
  auto rng = make_rng(seed, {key(Stream::partition)});
  const auto idx = shuffled_indices(train.size(), rng);
  const std::size_t base = train.size() / k;
  const std::size_t extra = train.size() % k;
  std::vector<ClientPartition> parts(k);
  std::size_t pos = 0;
  for (std::size_t c = 0; c < k; ++c) {
    parts[c].client_id = static_cast<int>(c);
    parts[c].shard.provenance = train.provenance;
    const std::size_t len = base + (c < extra ? 1 : 0);
    for (std::size_t i = 0; i < len; ++i)
      parts[c].shard.samples.push_back(train.samples[idx[pos++]]);
  }
  return parts;
}

TaskSplit split_tasks(const Dataset &ds) {
  TaskSplit t;
  t.task1.provenance = t.task2.provenance = ds.provenance;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const double flag = ds.samples[i].features[kTaskFlagIndex];
    if (flag == 1.0)
      t.task1.samples.push_back(ds.samples[i]);
    else if (flag == 0.0)
      t.task2.samples.push_back(ds.samples[i]);
    else
      throw DataError("task indicator must be 0 or 1, got " +
                          fmt::format("{}", flag),
                      "sample " + std::to_string(i));
  }
  return t;
}

Dataset augment(const Dataset &ds, double sigma, std::uint64_t seed) {
  if (ds.empty()) throw DataError("augment: empty dataset");
  if (!(sigma >= 0.0)) throw DataError("augment: sigma must be >= 0");
  Dataset out;
  out.provenance = Provenance::augmented;
  out.samples = ds.samples;
  out.samples.reserve(2 * ds.size());
  auto rng = make_rng(seed, {key(Stream::augment)});
  for (const auto &s : ds.samples) {
    SceneSample copy = s;
    if (sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, sigma);
      for (std::size_t f = 0; f < kFeatureCount; ++f)
        if (f != kTaskFlagIndex) copy.features[f] += noise(rng);
    }
    out.samples.push_back(copy);
  }
  return out;
}

std::array<double, kActionCount> LinearMap::apply(
    std::span<const double, kFeatureCount> x) const {
  std::array<double, kActionCount> y{};
  for (std::size_t a = 0; a < kActionCount; ++a) {
    double acc = bias[a];
    for (std::size_t f = 0; f < kFeatureCount; ++f) acc += weight(a, f) * x[f];
    y[a] = acc;
  }
  return y;
}

SyntheticData synthetic_generate(std::size_t n, std::uint64_t seed,
                                 double noise_std, double task_shift) {
  if (n == 0) throw DataError("synthetic_generate: n must be >= 1");
  if (!(noise_std >= 0.0))
    throw DataError("synthetic_generate: noise_std must be >= 0");
  auto map_rng = make_rng(seed, {key(Stream::synth), 0});
  auto data_rng = make_rng(seed, {key(Stream::synth), 1});

  // Labels land near the middle of [1,5]; the clip rarely binds.
  std::uniform_real_distribution<double> w(-0.25, 0.25);
  std::uniform_real_distribution<double> centre(2.5, 3.5);
  auto make_map = [&]() {
    LinearMap m{Matrix(kActionCount, kFeatureCount),
                std::vector<double>(kActionCount)};
    for (double &v : m.weight.data()) v = w(map_rng);
    for (std::size_t a = 0; a < kActionCount; ++a) {
      double half_sum = 0.0;
      for (std::size_t f = 0; f < kFeatureCount; ++f)
        half_sum += 0.5 * m.weight(a, f);
      m.bias[a] = centre(map_rng) - half_sum;
    }
    return m;
  };
  SyntheticData out;
  out.circle_map = make_map();
  out.arrow_map = out.circle_map;
  if (task_shift != 0.0) {
    std::bernoulli_distribution sign(0.5);
    for (std::size_t a = 0; a < kActionCount; ++a) {
      double half_sum = 0.0;
      for (std::size_t f = 0; f < kFeatureCount; ++f) {
        const double d = sign(map_rng) ? task_shift : -task_shift;
        out.arrow_map.weight(a, f) += d;
        half_sum += 0.5 * d;
      }
      out.arrow_map.bias[a] -= half_sum;
    }
  }

  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::normal_distribution<double> noise(0.0, noise_std > 0.0 ? noise_std : 1.0);
  out.data.provenance = Provenance::synthetic;
  out.data.samples.resize(n);
  for (auto &s : out.data.samples) {
    s.features[kTaskFlagIndex] = coin(data_rng) ? 1.0 : 0.0;
    for (std::size_t f = 1; f < kFeatureCount; ++f) s.features[f] = u(data_rng);
    const auto &map =
        s.features[kTaskFlagIndex] == 1.0 ? out.circle_map : out.arrow_map;
    const auto clean = map.apply(s.features);
    for (std::size_t a = 0; a < kActionCount; ++a) {
      const double eps = noise_std > 0.0 ? noise(data_rng) : 0.0;
      s.labels[a] = std::clamp(clean[a] + eps, kLabelMin, kLabelMax);
    }
  }
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     std::uint64_t epoch) {
  auto rng = make_rng(seed, {key(Stream::minibatch), epoch});
  return shuffled_indices(n, rng);
}

std::vector<std::vector<std::size_t>> minibatch_indices(std::size_t n,
                                                        std::size_t batch_size,
                                                        std::uint64_t seed,
                                                        std::uint64_t epoch) {
  if (batch_size < 2)
    throw DataError("minibatches: batch size must be >= 2");
  if (batch_size > n)
    throw DataError("minibatches: batch size " + std::to_string(batch_size) +
                    " exceeds dataset size " + std::to_string(n));
  const auto idx = epoch_order(n, seed, epoch);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t pos = 0; pos < n; pos += batch_size) {
    const std::size_t end = std::min(n, pos + batch_size);
    if (end - pos < 2) break;
    out.emplace_back(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                     idx.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<Batch> minibatches(const Dataset &ds, std::size_t batch_size,
                               std::uint64_t seed, std::uint64_t epoch) {
  std::vector<Batch> out;
  for (const auto &ix : minibatch_indices(ds.size(), batch_size, seed, epoch))
    out.push_back(make_batch(ds, ix));
  return out;
}

}  // namespace fclsim
