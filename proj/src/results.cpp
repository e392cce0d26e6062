#include "fclsim/results.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <sstream>

namespace fclsim {

namespace fs = std::filesystem;

const MetricsReport *RunRecord::report(const std::string &stage) const {
  for (const auto &[name, r] : reports)
    if (name == stage) return &r;
  return nullptr;
}

RunRecord make_record(const ExperimentConfig &config,
                      const ExperimentResult &result) {
  RunRecord r;
  r.run_id = run_id(config);
  r.config = config;
  r.rounds = result.rounds;
  r.reports.emplace_back("final", result.final_report);
  if (result.after_task1) r.reports.emplace_back("task1", *result.after_task1);
  if (result.after_task2) r.reports.emplace_back("task2", *result.after_task2);
  if (result.task1_after_task2)
    r.reports.emplace_back("task1_after_task2", *result.task1_after_task2);
  r.timestamp = fmt::format("{:%Y-%m-%dT%H:%M:%SZ}",
                            fmt::gmtime(std::chrono::system_clock::to_time_t(
                                std::chrono::system_clock::now())));
  return r;
}

bool same_metrics(const RunRecord &a, const RunRecord &b) {
  if (a.reports.size() != b.reports.size()) return false;
  for (std::size_t i = 0; i < a.reports.size(); ++i)
    if (a.reports[i].first != b.reports[i].first ||
        !bitwise_equal(a.reports[i].second, b.reports[i].second))
      return false;
  return true;
}

namespace {

std::vector<std::string> split(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(s);
  while (std::getline(in, cell, sep)) out.push_back(cell);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double to_double(const std::string &s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw DataError("malformed number '" + s + "' in results store");
  return v;
}

std::string report_header(std::size_t actions) {
  std::string h = "loss,rmse,mean_action_rmse,pcc";
  for (std::size_t a = 0; a < actions; ++a) h += fmt::format(",mse_{}", a);
  for (std::size_t a = 0; a < actions; ++a) h += fmt::format(",pcc_{}", a);
  return h;
}

std::string report_cells(const MetricsReport &r) {
  std::string s = fmt::format("{},{},{},{}", r.avg_mse, r.avg_rmse,
                              r.mean_action_rmse, r.avg_pcc);
  for (double v : r.per_action_mse) s += fmt::format(",{}", v);
  for (const auto &p : r.per_action_pcc)
    s += p ? fmt::format(",{}", *p) : std::string(",");
  return s;
}

// Parses the cells written by report_cells starting at `pos`.
MetricsReport parse_report(const std::vector<std::string> &cells,
                           std::size_t pos, std::size_t actions) {
  if (cells.size() < pos + 4 + 2 * actions)
    throw DataError("truncated metrics row in results store");
  MetricsReport r;
  r.avg_mse = to_double(cells[pos]);
  r.avg_rmse = to_double(cells[pos + 1]);
  r.mean_action_rmse = to_double(cells[pos + 2]);
  r.avg_pcc = to_double(cells[pos + 3]);
  for (std::size_t a = 0; a < actions; ++a)
    r.per_action_mse.push_back(to_double(cells[pos + 4 + a]));
  for (std::size_t a = 0; a < actions; ++a) {
    const auto &c = cells[pos + 4 + actions + a];
    if (c.empty()) {
      r.per_action_pcc.emplace_back();
      r.degenerate_actions.push_back(a);
    } else {
      r.per_action_pcc.emplace_back(to_double(c));
    }
  }
  return r;
}

std::size_t actions_in_header(const std::string &header) {
  std::size_t n = 0;
  for (const auto &h : split(header, ','))
    if (h.rfind("mse_", 0) == 0) ++n;
  return n;
}

std::string read_file(const fs::path &p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot read", p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ResultsStore::ResultsStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
}

bool ResultsStore::contains(const std::string &id) const {
  return fs::exists(root_ / id / "meta.txt");
}

bool ResultsStore::write(const RunRecord &record) {
  std::lock_guard lock(mu_);
  if (contains(record.run_id)) {
    auto existing = read(record.run_id);
    if (existing && existing->status == "ok" && record.status == "ok") {
      if (!same_metrics(*existing, record))
        throw ReproducibilityError(
            "re-run produced different final metrics than the stored run",
            "run " + record.run_id);
      return false;
    }
    if (existing && existing->status == "ok") return false;
    fs::remove_all(root_ / record.run_id);
  }
  write_files(record);
  return true;
}

void ResultsStore::write_files(const RunRecord &r) const {
  const fs::path dir = root_ / r.run_id;
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "config.yaml");
    out << canonical_config(r.config);
  }
  const std::size_t actions =
      r.reports.empty() ? kActionCount : r.reports.front().second.per_action_mse.size();
  {
    std::ofstream out(dir / "rounds.csv");
    out << "task,round," << report_header(actions)
        << ",client_losses,wall_seconds\n";
    for (const auto &log : r.rounds) {
      std::string losses;
      for (std::size_t i = 0; i < log.client_loss.size(); ++i)
        losses += fmt::format("{}{}", i ? ";" : "", log.client_loss[i]);
      out << fmt::format("{},{},{},{},{}\n", log.task, log.round,
                         report_cells(log.global), losses, log.wall_seconds);
    }
  }
  {
    std::ofstream out(dir / "reports.csv");
    out << "stage," << report_header(actions) << "\n";
    for (const auto &[stage, rep] : r.reports)
      out << stage << "," << report_cells(rep) << "\n";
  }
  {
    // meta.txt last: its presence marks a complete record.
    std::ofstream out(dir / "meta.txt");
    std::string err = r.error;
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << "status=" << r.status << "\nerror=" << err
        << "\nversion=" << r.version << "\ntimestamp=" << r.timestamp << "\n";
  }
}

std::optional<RunRecord> ResultsStore::read(const std::string &id) const {
  const fs::path dir = root_ / id;
  if (!fs::exists(dir / "meta.txt")) return std::nullopt;
  RunRecord r;
  r.run_id = id;
  const auto suite = parse_config_text(read_file(dir / "config.yaml"));
  r.config = suite.experiments.at(0);

  for (const auto &line : split(read_file(dir / "meta.txt"), '\n')) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto k = line.substr(0, eq);
    const auto v = line.substr(eq + 1);
    if (k == "status") r.status = v;
    else if (k == "error") r.error = v;
    else if (k == "version") r.version = v;
    else if (k == "timestamp") r.timestamp = v;
  }

  auto lines = split(read_file(dir / "rounds.csv"), '\n');
  if (!lines.empty()) {
    const std::size_t actions = actions_in_header(lines.front());
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto cells = split(lines[i], ',');
      RoundLog log;
      log.task = static_cast<int>(to_double(cells.at(0)));
      log.round = static_cast<int>(to_double(cells.at(1)));
      log.global = parse_report(cells, 2, actions);
      const std::size_t tail = 2 + 4 + 2 * actions;
      for (const auto &v : split(cells.at(tail), ';'))
        if (!v.empty()) log.client_loss.push_back(to_double(v));
      log.wall_seconds = to_double(cells.at(tail + 1));
      r.rounds.push_back(std::move(log));
    }
  }
  lines = split(read_file(dir / "reports.csv"), '\n');
  if (!lines.empty()) {
    const std::size_t actions = actions_in_header(lines.front());
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      const auto cells = split(lines[i], ',');
      r.reports.emplace_back(cells.at(0), parse_report(cells, 1, actions));
    }
  }
  return r;
}

std::vector<RunRecord> ResultsStore::read_all() const {
  std::vector<std::string> ids;
  if (fs::exists(root_))
    for (const auto &e : fs::directory_iterator(root_))
      if (e.is_directory() && fs::exists(e.path() / "meta.txt"))
        ids.push_back(e.path().filename().string());
  std::sort(ids.begin(), ids.end());
  std::vector<RunRecord> out;
  for (const auto &id : ids) out.push_back(*read(id));
  return out;
}

SuiteOutcome run_suite(const BenchmarkSuite &suite, ResultsStore &store,
                       const SuiteOptions &options) {
  SuiteOutcome outcome;
  for (ExperimentConfig config : suite.experiments) {
    if (options.workers > 1) config.workers = options.workers;
    if (options.data_path) {
      config.data.kind = DataKind::csv;
      config.data.path = *options.data_path;
    }
    RunRecord record;
    try {
      const ExperimentData data = prepare_data(config.data, config.seed);
      record = make_record(config, run_experiment(config, data));
    } catch (const std::exception &e) {
      record = RunRecord{};
      record.run_id = run_id(config);
      record.config = config;
      record.status = "failed";
      record.error = e.what();
      ++outcome.failed;
    }
    try {
      store.write(record);
    } catch (const ReproducibilityError &e) {
      record.status = "failed";
      record.error = e.what();
      ++outcome.failed;
      ++outcome.reproducibility_violations;
    }
    outcome.records.push_back(std::move(record));
  }
  return outcome;
}

}  // namespace fclsim
