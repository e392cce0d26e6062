#pragma once

#include <span>
#include <string>
#include <vector>

#include "fclsim/results.hpp"

namespace fclsim {

enum class TableFormat { csv, markdown };

TableFormat parse_table_format(const std::string &s);

// Comparison tables over successful runs. Markdown pivots rows = method
// label, columns = Loss/RMSE/PCC per client count (and per task stage for
// continual runs), with the best value per column in bold and the second
// best in [brackets], ranked separately for runs with and without
// augmentation. CSV is long form: one row per run and stage.
// Values are rounded to 3 decimals.
std::string emit_table(std::span<const RunRecord> records, TableFormat format);

struct TableCsvRow {
  std::string run_id;
  std::string method;
  bool augmentation = false;
  int clients = 0;
  std::string stage;
  double loss = 0.0;
  double rmse = 0.0;
  double pcc = 0.0;
};

std::vector<TableCsvRow> parse_table_csv(const std::string &csv);

}  // namespace fclsim
