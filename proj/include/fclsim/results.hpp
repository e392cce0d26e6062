#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "fclsim/config.hpp"
#include "fclsim/orchestrator.hpp"

namespace fclsim {

inline constexpr const char *kSoftwareVersion = "0.1.0";

struct RunRecord {
  std::string run_id;
  ExperimentConfig config;
  std::string status = "ok";  // ok | failed
  std::string error;
  std::vector<RoundLog> rounds;
  // Stage name -> report: "final" always; continual runs also "task1",
  // "task2" and "task1_after_task2".
  std::vector<std::pair<std::string, MetricsReport>> reports;
  std::string version = kSoftwareVersion;
  std::string timestamp;

  const MetricsReport *report(const std::string &stage) const;
};

RunRecord make_record(const ExperimentConfig &config,
                      const ExperimentResult &result);

// Exact comparison of every stored report.
bool same_metrics(const RunRecord &a, const RunRecord &b);

class ReproducibilityError : public Error {
 public:
  using Error::Error;
};

// One directory per run id under `root`:
//   config.yaml   canonical config snapshot
//   rounds.csv    one row per round
//   reports.csv   one row per evaluation stage
//   meta.txt      status, error, version, timestamp
// Numbers are written in shortest round-trip form, so reading back gives
// bit-identical values.
class ResultsStore {
 public:
  explicit ResultsStore(std::filesystem::path root);

  const std::filesystem::path &root() const noexcept { return root_; }

  bool contains(const std::string &run_id) const;

  // Appends a record. If a successful record with the same id exists, the
  // new one must match it bit for bit; otherwise ReproducibilityError.
  // Returns false when the run was already present (nothing written).
  bool write(const RunRecord &record);

  std::optional<RunRecord> read(const std::string &run_id) const;
  std::vector<RunRecord> read_all() const;  // sorted by run id

 private:
  void write_files(const RunRecord &record) const;

  std::filesystem::path root_;
  mutable std::mutex mu_;
};

struct SuiteOutcome {
  std::vector<RunRecord> records;
  int failed = 0;
  int reproducibility_violations = 0;
};

struct SuiteOptions {
  int workers = 1;  // overrides per-experiment worker counts when > 1
  // Optional dataset override (--data); replaces each experiment's source.
  std::optional<std::filesystem::path> data_path;
};

// Runs every experiment, persisting each record. Failures are recorded in
// the store and counted; they never stop the suite.
SuiteOutcome run_suite(const BenchmarkSuite &suite, ResultsStore &store,
                       const SuiteOptions &options = {});

}  // namespace fclsim
