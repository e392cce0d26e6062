#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fclsim/orchestrator.hpp"

namespace fclsim {

// A parsed benchmark file: one experiment per point of the sweep grid.
struct BenchmarkSuite {
  std::string name;
  std::filesystem::path output_dir = "results";
  std::vector<ExperimentConfig> experiments;
};

// Parses the YAML benchmark schema described in README.md.
// Unknown keys, missing required keys and type errors raise ConfigError whose
// where() is the dotted key path.
BenchmarkSuite parse_config_text(const std::string &text);
BenchmarkSuite parse_config(const std::filesystem::path &path);

// Canonical, fully resolved single-experiment document. Parsing it back with
// parse_config_text yields one experiment equal to `config` apart from the
// worker count, which never affects results and is left out.
std::string canonical_config(const ExperimentConfig &config);

// Hex digest of canonical_config; equal configs give equal ids.
std::string run_id(const ExperimentConfig &config);

// Row label as used in result tables, e.g. "FedAvg", "FedProx_Aug",
// "FedAvg_EWC".
std::string method_label(const ExperimentConfig &config);

}  // namespace fclsim
