#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "fclsim/continual.hpp"
#include "fclsim/dataset.hpp"
#include "fclsim/metrics.hpp"
#include "fclsim/mlp.hpp"
#include "fclsim/optimizer.hpp"
#include "fclsim/strategies.hpp"

namespace fclsim {

enum class DataKind { synthetic, csv };

struct DataSource {
  DataKind kind = DataKind::synthetic;
  std::filesystem::path path;  // csv
  std::size_t synthetic_samples = 1000;
  double synthetic_noise = 0.1;
  double synthetic_task_shift = 0.0;
  double split_ratio = 0.75;

  friend bool operator==(const DataSource &, const DataSource &) = default;
};

struct ExperimentConfig {
  int n_clients = 2;
  int n_rounds = 10;  // per task for continual runs
  int local_epochs = 1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  OptimizerSpec client_optimizer{OptimizerKind::adam, 1e-2};
  bool reset_optimizer_each_round = false;
  bool reset_optimizer_at_task = true;
  StrategyConfig strategy;
  ClMethod cl_method = ClMethod::none;
  // Two-task schedule without a continual method: the sequential baseline.
  bool sequential_tasks = false;
  PenaltyConfig penalty;
  bool augmentation = false;
  double augment_sigma = 0.01;
  ModelShape model;
  DataSource data;
  int workers = 1;

  bool continual() const noexcept {
    return sequential_tasks || cl_method != ClMethod::none;
  }
  void validate() const;

  friend bool operator==(const ExperimentConfig &, const ExperimentConfig &) =
      default;
};

struct ExperimentData {
  Dataset train;
  Dataset test;
};

// Loads or generates the dataset and applies the train/test split.
ExperimentData prepare_data(const DataSource &source, std::uint64_t seed);

struct RoundLog {
  int round = 0;
  int task = 0;
  MetricsReport global;
  std::vector<double> client_loss;
  double wall_seconds = 0.0;
};

// Ordering record for tests: who did what, when.
struct Event {
  enum class Kind { broadcast, local_train, importance, replay_store, aggregate, evaluate };
  Kind kind;
  int task = 0;
  int round = 0;
  int client = -1;  // -1 for server-side events
};

class EventLog {
 public:
  void record(Event e);
  std::vector<Event> events() const;

 private:
  mutable std::mutex mu_;
  std::vector<Event> events_;
};

// Test double hook: every read of a client shard reports (reader, owner).
class AccessAudit {
 public:
  virtual ~AccessAudit() = default;
  virtual void on_shard_read(int reader, int owner) = 0;
};

struct RunOptions {
  EventLog *events = nullptr;
  AccessAudit *audit = nullptr;
};

struct ExperimentResult {
  std::vector<RoundLog> rounds;
  MetricsReport final_report;  // last round; full test set
  // Continual runs only.
  std::optional<MetricsReport> after_task1;        // circle test subset
  std::optional<MetricsReport> after_task2;        // full test set
  std::optional<MetricsReport> task1_after_task2;  // circle test subset
  ParameterVector final_global;
};

std::uint64_t client_stream_seed(std::uint64_t seed, int client, int task,
                                 int round);

// Shared round-0 model every client starts from.
Mlp initial_model(const ExperimentConfig &config);

MetricsReport evaluate(const ParameterVector &params, const Dataset &test,
                       const ModelShape &shape);

ExperimentResult run_fl(const ExperimentConfig &config,
                        const ExperimentData &data, RunOptions options = {});

struct FclSchedule {
  int rounds_per_task = 10;
};

ExperimentResult run_fcl(const ExperimentConfig &config,
                         const ExperimentData &data, FclSchedule schedule,
                         RunOptions options = {});

// Dispatches to run_fl or run_fcl (rounds_per_task = n_rounds).
ExperimentResult run_experiment(const ExperimentConfig &config,
                                const ExperimentData &data,
                                RunOptions options = {});

}  // namespace fclsim
