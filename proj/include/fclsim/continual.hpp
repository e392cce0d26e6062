#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fclsim/dataset.hpp"
#include "fclsim/loss.hpp"
#include "fclsim/mlp.hpp"
#include "fclsim/params.hpp"
#include "fclsim/rng.hpp"

namespace fclsim {

enum class ClMethod { none, ewc, ewc_online, si, mas, nr };

const char *to_string(ClMethod m) noexcept;
const char *display_name(ClMethod m) noexcept;
ClMethod parse_cl_method(const std::string &s);

enum class ImportanceKind { fisher, fisher_running, si_omega, mas_omega };

// Per-parameter nonnegative weights aligned with a ParameterVector layout.
struct ImportanceMap {
  std::vector<double> values;
  ImportanceKind kind = ImportanceKind::fisher;
};

struct AnchorParams {
  ParameterVector theta_star;
  int task_id = 0;
};

struct PenaltyConfig {
  double lambda = 100.0;
  double gamma_online = 1.0;
  double si_xi = 0.1;
  std::size_t fisher_samples = 200;
  std::size_t replay_capacity = 1000;
  double mix_ratio = 0.5;

  friend bool operator==(const PenaltyConfig &, const PenaltyConfig &) =
      default;
};

// Default penalty strength for each regularizer.
double default_lambda(ClMethod m) noexcept;

// Empirical Fisher diagonal: mean over up to `max_samples` shard samples
// (drawn without replacement) of the squared per-sample MSE gradient, with
// the model in eval mode.
ImportanceMap compute_fisher(const Mlp &model, const Dataset &shard,
                             std::size_t max_samples, std::uint64_t seed);

// sum over anchors of (lambda/2) * sum_i F_i (theta_i - theta*_i)^2 on
// trainable slots.
Penalty ewc_penalty(const ParameterVector &theta,
                    std::span<const AnchorParams> anchors,
                    std::span<const ImportanceMap> importances, double lambda);

ImportanceMap ewc_online_update(const ImportanceMap &running,
                                const ImportanceMap &new_fisher,
                                double gamma_online);

// One row per slot: layer,role,index,value.
void save_importance_csv(const ImportanceMap &map, const ParamLayout &layout,
                         const std::filesystem::path &path);

// Path-integral bookkeeping for synaptic intelligence.
struct SiAccumulator {
  std::vector<double> omega_running;
  ParameterVector theta_at_task_start;
  double xi = 0.1;

  SiAccumulator() = default;
  SiAccumulator(const ParameterVector &task_start, double xi_);
};

// w_i += -g_i * delta_i
void si_accumulate(SiAccumulator &acc, const GradientVector &grad_before_step,
                   std::span<const double> delta_theta);

// Omega_i = max(0, w_i) / ((theta_end_i - theta_start_i)^2 + xi), then the
// accumulator restarts from theta_end.
ImportanceMap si_consolidate(SiAccumulator &acc,
                             const ParameterVector &theta_end);

// Mean over samples of |d ||f(x)||^2 / d theta| with the model in eval mode.
// Takes features only; labels never reach this computation.
ImportanceMap mas_importance(const Mlp &model, const Matrix &features,
                             std::size_t max_samples, std::uint64_t seed);

// Reservoir-sampled memory of past training samples.
class ReplayBuffer {
 public:
  ReplayBuffer() = default;
  explicit ReplayBuffer(std::size_t capacity);

  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t seen() const noexcept { return seen_; }
  const std::vector<SceneSample> &stored() const noexcept { return stored_; }
  bool empty() const noexcept { return stored_.empty(); }

  void offer(const SceneSample &s, Rng &rng);

 private:
  std::size_t capacity_ = 0;
  std::size_t seen_ = 0;
  std::vector<SceneSample> stored_;
};

ReplayBuffer nr_store(ReplayBuffer buffer, const Dataset &task_samples,
                      std::uint64_t seed);

// Each batch holds floor(mix_ratio * batch_size) buffer samples drawn with
// replacement and the rest from the epoch-shuffled new shard. An empty
// buffer gives exactly minibatches(new_shard, batch_size, seed, epoch).
std::vector<Batch> nr_mixed_batches(const ReplayBuffer &buffer,
                                    const Dataset &new_shard,
                                    std::size_t batch_size, double mix_ratio,
                                    std::uint64_t seed, std::uint64_t epoch);

// Shard indices used for the "new" part of each mixed batch, in order.
std::vector<std::vector<std::size_t>> nr_new_indices(std::size_t shard_size,
                                                     std::size_t batch_size,
                                                     double mix_ratio,
                                                     std::uint64_t seed,
                                                     std::uint64_t epoch);

}  // namespace fclsim
