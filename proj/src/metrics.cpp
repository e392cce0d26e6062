#include "fclsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "fclsim/error.hpp"

namespace fclsim {

std::optional<double> pcc(std::span<const double> x,
                          std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pcc: length mismatch");
  if (x.size() < 2) throw ShapeError("pcc: needs at least 2 samples");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  const double sx = std::sqrt(sxx / n);
  const double sy = std::sqrt(syy / n);
  if (sx < kPccDegenerateStd || sy < kPccDegenerateStd) return std::nullopt;
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

MetricsReport compute_report(const Matrix &pred, const Matrix &target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeError("compute_report: prediction and target shapes differ");
  if (pred.rows() < 2) throw ShapeError("compute_report: needs N >= 2");
  const std::size_t n = pred.rows();
  const std::size_t actions = pred.cols();
  MetricsReport r;
  r.per_action_mse.assign(actions, 0.0);
  r.per_action_pcc.resize(actions);
  std::vector<double> p(n), t(n);
  double pcc_sum = 0.0;
  std::size_t pcc_count = 0;
  for (std::size_t a = 0; a < actions; ++a) {
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = pred(i, a);
      t[i] = target(i, a);
      const double d = p[i] - t[i];
      sq += d * d;
    }
    r.per_action_mse[a] = sq / static_cast<double>(n);
    r.avg_mse += r.per_action_mse[a];
    r.mean_action_rmse += std::sqrt(r.per_action_mse[a]);
    r.per_action_pcc[a] = pcc(p, t);
    if (r.per_action_pcc[a]) {
      pcc_sum += *r.per_action_pcc[a];
      ++pcc_count;
    } else {
      r.degenerate_actions.push_back(a);
    }
  }
  r.avg_mse /= static_cast<double>(actions);
  r.mean_action_rmse /= static_cast<double>(actions);
  r.avg_rmse = std::sqrt(r.avg_mse);
  r.avg_pcc = pcc_count ? pcc_sum / static_cast<double>(pcc_count)
                        : std::numeric_limits<double>::quiet_NaN();
  return r;
}

}  // namespace fclsim

namespace fclsim {

namespace {

bool same_bits(double a, double b) {
  return std::memcmp(&a, &b, sizeof(double)) == 0;
}

bool same_bits(const std::vector<double> &a, const std::vector<double> &b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!same_bits(a[i], b[i])) return false;
  return true;
}

}  // namespace

bool bitwise_equal(const MetricsReport &a, const MetricsReport &b) {
  if (!same_bits(a.per_action_mse, b.per_action_mse) ||
      !same_bits(a.avg_mse, b.avg_mse) || !same_bits(a.avg_rmse, b.avg_rmse) ||
      !same_bits(a.mean_action_rmse, b.mean_action_rmse) ||
      !same_bits(a.avg_pcc, b.avg_pcc) ||
      a.degenerate_actions != b.degenerate_actions ||
      a.per_action_pcc.size() != b.per_action_pcc.size())
    return false;
  for (std::size_t i = 0; i < a.per_action_pcc.size(); ++i) {
    const auto &x = a.per_action_pcc[i];
    const auto &y = b.per_action_pcc[i];
    if (x.has_value() != y.has_value()) return false;
    if (x && !same_bits(*x, *y)) return false;
  }
  return true;
}

}  // namespace fclsim
