// Benchmark driver: runs config-defined experiment grids, persists results
// and prints comparison tables.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdlib>
#include <iostream>

#include "fclsim/config.hpp"
#include "fclsim/results.hpp"
#include "fclsim/tables.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitBadConfig = 2;

std::filesystem::path output_dir(const std::string &flag,
                                 const std::filesystem::path &from_config) {
  if (!flag.empty()) return flag;
  if (const char *env = std::getenv("FCLSIM_OUT_DIR"); env && *env) return env;
  return from_config;
}

fclsim::BenchmarkSuite load_suite(const std::string &path,
                                  const std::optional<std::uint64_t> &seed) {
  auto suite = fclsim::parse_config(path);
  if (seed)
    for (auto &e : suite.experiments) e.seed = *seed;
  return suite;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Federated (continual) learning benchmark harness"};
  app.require_subcommand(1);

  std::string config_path, data_path, out_flag, format = "markdown";
  std::optional<std::uint64_t> seed;
  int workers = 1;

  auto *run = app.add_subcommand("run", "Run every experiment of a config");
  run->add_option("--config", config_path, "Benchmark config (YAML)")->required();
  run->add_option("--data", data_path, "Dataset CSV replacing the config's source");
  run->add_option("--out", out_flag, "Results directory");
  run->add_option("--seed", seed, "Seed applied to every experiment");
  run->add_option("--workers", workers, "Client worker threads")->check(CLI::PositiveNumber);
  run->add_option("--format", format, "Table format printed at the end (csv|markdown)");

  auto *table = app.add_subcommand("table", "Print the comparison table of a results directory");
  table->add_option("--out", out_flag, "Results directory");
  table->add_option("--format", format, "csv|markdown");

  auto *verify = app.add_subcommand("verify", "Re-run a config and compare against stored results");
  verify->add_option("--config", config_path, "Benchmark config (YAML)")->required();
  verify->add_option("--data", data_path, "Dataset CSV replacing the config's source");
  verify->add_option("--out", out_flag, "Results directory");
  verify->add_option("--seed", seed, "Seed applied to every experiment");
  verify->add_option("--workers", workers, "Client worker threads")->check(CLI::PositiveNumber);

  std::size_t samples = 1000;
  double noise = 0.1, task_shift = 0.0;
  std::uint64_t synth_seed = 0;
  auto *synth = app.add_subcommand("synth", "Write a synthetic dataset CSV");
  synth->add_option("--out", out_flag, "Output CSV path")->required();
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--samples", samples, "Number of scenes");
  synth->add_option("--noise", noise, "Label noise standard deviation");
  synth->add_option("--task-shift", task_shift, "Weight offset of the arrow task map");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed() || verify->parsed()) {
      fclsim::BenchmarkSuite suite;
      try {
        suite = load_suite(config_path, seed);
      } catch (const fclsim::ConfigError &e) {
        std::cerr << "invalid config: " << e.what() << "\n";
        return kExitBadConfig;
      }
      fclsim::SuiteOptions opts;
      opts.workers = workers;
      if (!data_path.empty()) opts.data_path = data_path;
      fclsim::ResultsStore store(output_dir(out_flag, suite.output_dir));

      if (run->parsed()) {
        const auto outcome = fclsim::run_suite(suite, store, opts);
        for (const auto &r : outcome.records)
          std::cerr << fmt::format("{} {:<22} clients={:<3} {}{}\n", r.run_id,
                                   fclsim::method_label(r.config),
                                   r.config.n_clients, r.status,
                                   r.error.empty() ? "" : ": " + r.error);
        std::cout << fclsim::emit_table(outcome.records,
                                        fclsim::parse_table_format(format));
        return outcome.failed ? kExitFailed : kExitOk;
      }

      int mismatches = 0;
      for (auto config : suite.experiments) {
        if (workers > 1) config.workers = workers;
        if (opts.data_path) {
          config.data.kind = fclsim::DataKind::csv;
          config.data.path = *opts.data_path;
        }
        const auto id = fclsim::run_id(config);
        const auto stored = store.read(id);
        if (!stored || stored->status != "ok") {
          std::cerr << id << " missing from store\n";
          ++mismatches;
          continue;
        }
        const auto fresh = fclsim::make_record(
            config, fclsim::run_experiment(
                        config, fclsim::prepare_data(config.data, config.seed)));
        const bool same = fclsim::same_metrics(*stored, fresh);
        std::cerr << id << (same ? " reproduced\n" : " REPRODUCIBILITY VIOLATION\n");
        mismatches += same ? 0 : 1;
      }
      return mismatches ? kExitFailed : kExitOk;
    }

    if (table->parsed()) {
      fclsim::ResultsStore store(output_dir(out_flag, "results"));
      const auto records = store.read_all();
      std::cout << fclsim::emit_table(records, fclsim::parse_table_format(format));
      return kExitOk;
    }

    if (synth->parsed()) {
      const auto data =
          fclsim::synthetic_generate(samples, synth_seed, noise, task_shift);
      fclsim::save_csv(data.data, out_flag);
      std::cerr << "wrote " << data.data.size() << " scenes to " << out_flag << "\n";
      return kExitOk;
    }
  } catch (const fclsim::ConfigError &e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitBadConfig;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailed;
  }
  return kExitOk;
}
