#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fclsim/matrix.hpp"

namespace fclsim {

inline constexpr double kPccDegenerateStd = 1e-12;

// Pearson correlation; nullopt when either input has (near) zero spread.
std::optional<double> pcc(std::span<const double> x, std::span<const double> y);

struct MetricsReport {
  std::vector<double> per_action_mse;
  double avg_mse = 0.0;   // reported as "loss"
  double avg_rmse = 0.0;  // sqrt(avg_mse)
  double mean_action_rmse = 0.0;  // mean of per-action sqrt(mse)
  std::vector<std::optional<double>> per_action_pcc;
  double avg_pcc = 0.0;  // over non-degenerate actions; NaN if none
  std::vector<std::size_t> degenerate_actions;

  friend bool operator==(const MetricsReport &, const MetricsReport &) = default;
};

MetricsReport compute_report(const Matrix &pred, const Matrix &target);

}  // namespace fclsim

namespace fclsim {

// Bit-level equality (NaN-safe), used for reproducibility checks.
bool bitwise_equal(const MetricsReport &a, const MetricsReport &b);

}  // namespace fclsim
