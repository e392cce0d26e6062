#include "fclsim/tables.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace fclsim {

TableFormat parse_table_format(const std::string &s) {
  if (s == "csv") return TableFormat::csv;
  if (s == "markdown" || s == "md") return TableFormat::markdown;
  throw ConfigError("unknown table format '" + s + "' (expected csv|markdown)",
                    "format");
}

namespace {

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

std::string fmt3(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.3f}", round3(v));
}

// Stages shown in tables: FL runs report their final round; continual runs
// report the end of each task.
std::vector<std::pair<std::string, std::string>> table_stages(const RunRecord &r) {
  if (r.config.continual())
    return {{"task1", "After Task 1"}, {"task2", "After Task 2"}};
  return {{"final", ""}};
}

// CSV also carries task-1 retention after the second task.
std::vector<std::pair<std::string, std::string>> csv_stages(const RunRecord &r) {
  auto stages = table_stages(r);
  if (r.config.continual()) stages.emplace_back("task1_after_task2", "");
  return stages;
}

struct Cell {
  double loss = NAN, rmse = NAN, pcc = NAN;
};

struct Row {
  std::string label;
  bool augmentation = false;
  int order = 0;
  std::map<std::string, Cell> cells;  // column group key -> metrics
};

std::string group_key(int clients, const std::string &stage) {
  return fmt::format("{:04}|{}", clients, stage);
}

std::string render_markdown(const std::vector<const RunRecord *> &runs,
                            const std::string &title) {
  std::map<std::string, Row> rows;
  std::vector<std::string> row_order;
  std::set<std::string> groups;
  std::map<std::string, std::string> group_title;
  for (const RunRecord *r : runs) {
    const std::string label = method_label(r->config);
    auto [it, fresh] = rows.try_emplace(label);
    if (fresh) {
      it->second.label = label;
      it->second.augmentation = r->config.augmentation;
      it->second.order =
          static_cast<int>(r->config.augmentation) * 1000 +
          static_cast<int>(r->config.strategy.kind) * 10 +
          static_cast<int>(r->config.cl_method);
      row_order.push_back(label);
    }
    for (const auto &[stage, stage_title] : table_stages(*r)) {
      const MetricsReport *rep = r->report(stage);
      if (!rep) continue;
      const auto g = group_key(r->config.n_clients, stage);
      groups.insert(g);
      group_title[g] = fmt::format("{} clients{}", r->config.n_clients,
                                   stage_title.empty() ? "" : ", " + stage_title);
      it->second.cells[g] = Cell{rep->avg_mse, rep->avg_rmse, rep->avg_pcc};
    }
  }
  std::sort(row_order.begin(), row_order.end(), [&](const auto &a, const auto &b) {
    return rows[a].order < rows[b].order;
  });

  // Ranks per (section, group, metric): 1 = best, 2 = second best.
  auto rank = [&](const Row &row, const std::string &g, int metric) {
    auto value = [&](const Row &x) -> double {
      auto c = x.cells.find(g);
      if (c == x.cells.end()) return NAN;
      const double v = metric == 0 ? c->second.loss
                       : metric == 1 ? c->second.rmse
                                     : c->second.pcc;
      return round3(v);
    };
    const double mine = value(row);
    if (std::isnan(mine)) return 0;
    std::set<double> distinct;
    for (const auto &[_, other] : rows)
      if (other.augmentation == row.augmentation) {
        const double v = value(other);
        if (!std::isnan(v)) distinct.insert(metric == 2 ? -v : v);
      }
    const double key = metric == 2 ? -mine : mine;
    int pos = 1;
    for (double d : distinct) {
      if (d == key) return pos;
      ++pos;
    }
    return 0;
  };

  std::string out;
  if (!title.empty()) out += "**" + title + "**\n\n";
  out += "| Method |";
  std::string rule = "|---|";
  for (const auto &g : groups) {
    for (const char *m : {"Loss", "RMSE", "PCC"}) {
      out += fmt::format(" {} ({}) |", m, group_title[g]);
      rule += "---|";
    }
  }
  out += "\n" + rule + "\n";
  for (const auto &label : row_order) {
    const Row &row = rows[label];
    out += "| " + label + " |";
    for (const auto &g : groups) {
      auto c = row.cells.find(g);
      for (int metric = 0; metric < 3; ++metric) {
        if (c == row.cells.end()) {
          out += " - |";
          continue;
        }
        const double v = metric == 0 ? c->second.loss
                         : metric == 1 ? c->second.rmse
                                       : c->second.pcc;
        const int rk = rank(row, g, metric);
        const std::string s = fmt3(v);
        out += rk == 1 ? " **" + s + "** |" : rk == 2 ? " [" + s + "] |" : " " + s + " |";
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace

std::string emit_table(std::span<const RunRecord> records, TableFormat format) {
  std::vector<const RunRecord *> ok;
  for (const auto &r : records)
    if (r.status == "ok" && !r.reports.empty()) ok.push_back(&r);
  if (ok.empty()) throw DataError("emit_table: no successful runs in store");

  if (format == TableFormat::csv) {
    std::string out = "run_id,method,augmentation,clients,stage,loss,rmse,pcc\n";
    for (const RunRecord *r : ok)
      for (const auto &[stage, _] : csv_stages(*r)) {
        const MetricsReport *rep = r->report(stage);
        if (!rep) continue;
        out += fmt::format("{},{},{},{},{},{},{},{}\n", r->run_id,
                           method_label(r->config), r->config.augmentation,
                           r->config.n_clients, stage, fmt3(rep->avg_mse),
                           fmt3(rep->avg_rmse), fmt3(rep->avg_pcc));
      }
    return out;
  }

  std::vector<const RunRecord *> fl, fcl;
  for (const RunRecord *r : ok) (r->config.continual() ? fcl : fl).push_back(r);
  std::string out;
  if (!fl.empty())
    out += render_markdown(fl, fcl.empty() ? "" : "Federated learning");
  if (!fcl.empty()) {
    if (!out.empty()) out += "\n";
    out += render_markdown(fcl, fl.empty() ? "" : "Federated continual learning");
  }
  return out;
}

std::vector<TableCsvRow> parse_table_csv(const std::string &csv) {
  std::vector<TableCsvRow> rows;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> c;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) c.push_back(cell);
    if (c.size() != 8) throw DataError("malformed table row: " + line);
    rows.push_back({c[0], c[1], c[2] == "true", std::stoi(c[3]), c[4],
                    std::stod(c[5]), std::stod(c[6]), std::stod(c[7])});
  }
  return rows;
}

}  // namespace fclsim
