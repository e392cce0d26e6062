#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fclsim/matrix.hpp"
#include "fclsim/mlp.hpp"

namespace fclsim {

// One scene: 29 descriptor features and 8 Likert appropriateness ratings.
// Feature 0 is the circle (1) / arrow (0) indicator.
struct SceneSample {
  std::array<double, kFeatureCount> features{};
  std::array<double, kActionCount> labels{};

  friend bool operator==(const SceneSample &, const SceneSample &) = default;
};

inline constexpr std::size_t kTaskFlagIndex = 0;
inline constexpr double kLabelMin = 1.0;
inline constexpr double kLabelMax = 5.0;

enum class Provenance { real, synthetic, augmented };

struct Dataset {
  std::vector<SceneSample> samples;
  Provenance provenance = Provenance::real;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  friend bool operator==(const Dataset &, const Dataset &) = default;
};

struct Batch {
  Matrix features;  // B x 29
  Matrix labels;    // B x 8
};

Batch make_batch(const Dataset &ds);
Batch make_batch(const Dataset &ds, std::span<const std::size_t> indices);
Batch make_batch(std::span<const SceneSample> samples);

struct ClientPartition {
  int client_id = 0;
  Dataset shard;
};

struct TaskSplit {
  Dataset task1;  // circle
  Dataset task2;  // arrow
};

// CSV column names. Feature columns start with "f_", label columns with
// "label_"; the indicator column is always stored at feature index 0.
inline constexpr const char *kTaskFlagColumn = "f_within_circle";
const std::array<std::string, kActionCount> &label_columns();
std::vector<std::string> default_feature_columns();

Dataset load_csv(const std::filesystem::path &path);
void save_csv(const Dataset &ds, const std::filesystem::path &path,
              const std::vector<std::string> &feature_columns =
                  default_feature_columns());

struct SplitResult {
  Dataset train;
  Dataset test;
};

SplitResult train_test_split(const Dataset &ds, double ratio,
                             std::uint64_t seed);

std::vector<ClientPartition> partition_clients(const Dataset &train,
                                               int n_clients,
                                               std::uint64_t seed);

TaskSplit split_tasks(const Dataset &ds);

// Originals followed by one copy each with N(0, sigma) noise on every
// feature except the task indicator. Labels are copied untouched.
Dataset augment(const Dataset &ds, double sigma, std::uint64_t seed);

// Affine map features(29) -> labels(8).
struct LinearMap {
  Matrix weight;  // 8 x 29
  std::vector<double> bias;

  std::array<double, kActionCount> apply(
      std::span<const double, kFeatureCount> x) const;
};

struct SyntheticData {
  Dataset data;
  LinearMap circle_map;
  LinearMap arrow_map;  // equals circle_map when task_shift == 0
};

// Features ~ U(0,1) with a fair-coin indicator at index 0; labels are
// clip(map(x) + N(0, noise_std), 1, 5), where arrow samples use a map whose
// weights are offset by task_shift * (random +-1 matrix).
SyntheticData synthetic_generate(std::size_t n, std::uint64_t seed,
                                 double noise_std, double task_shift = 0.0);

// Seeded permutation of [0, n) for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                     std::uint64_t epoch);

// Sample indices per batch, seeded per (seed, epoch). A trailing batch of a
// single sample is dropped.
std::vector<std::vector<std::size_t>> minibatch_indices(std::size_t n,
                                                        std::size_t batch_size,
                                                        std::uint64_t seed,
                                                        std::uint64_t epoch);

std::vector<Batch> minibatches(const Dataset &ds, std::size_t batch_size,
                               std::uint64_t seed, std::uint64_t epoch);

}  // namespace fclsim
