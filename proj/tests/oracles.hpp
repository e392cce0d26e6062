#pragma once

// Reference computations used only by tests. Each one is written
// independently of the library code path it checks.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "fclsim/dataset.hpp"
#include "fclsim/mlp.hpp"

namespace oracle {

// Straight-line forward pass reading each layer's tensors directly.
inline fclsim::Matrix forward(const fclsim::Mlp &m, const fclsim::Matrix &x,
                              fclsim::Mode mode) {
  const std::size_t batch = x.rows();
  std::vector<std::vector<double>> h(batch);
  for (std::size_t r = 0; r < batch; ++r) h[r].assign(x.row(r).begin(), x.row(r).end());
  for (std::size_t k = 0; k < m.hidden_count(); ++k) {
    const auto &lin = m.linear(k);
    const auto &bn = m.batch_norm(k);
    std::vector<std::vector<double>> z(batch, std::vector<double>(lin.out_features()));
    for (std::size_t r = 0; r < batch; ++r)
      for (std::size_t o = 0; o < lin.out_features(); ++o) {
        long double acc = lin.bias[o];
        for (std::size_t i = 0; i < lin.in_features(); ++i)
          acc += static_cast<long double>(lin.weight(o, i)) * h[r][i];
        z[r][o] = static_cast<double>(acc);
      }
    for (std::size_t c = 0; c < lin.out_features(); ++c) {
      long double mean = 0, var = 0;
      if (mode == fclsim::Mode::train) {
        for (std::size_t r = 0; r < batch; ++r) mean += z[r][c];
        mean /= batch;
        for (std::size_t r = 0; r < batch; ++r) var += (z[r][c] - mean) * (z[r][c] - mean);
        var /= batch;
      } else {
        mean = bn.running_mean[c];
        var = bn.running_var[c];
      }
      for (std::size_t r = 0; r < batch; ++r) {
        double y = static_cast<double>(bn.gamma[c] * (z[r][c] - mean) /
                                           std::sqrt(var + bn.epsilon) +
                                       bn.beta[c]);
        if (m.shape().activation == fclsim::Activation::relu) y = std::max(0.0, y);
        z[r][c] = y;
      }
    }
    h = std::move(z);
  }
  const auto &head = m.linear(m.hidden_count());
  fclsim::Matrix out(batch, head.out_features());
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t o = 0; o < head.out_features(); ++o) {
      long double acc = head.bias[o];
      for (std::size_t i = 0; i < head.in_features(); ++i)
        acc += static_cast<long double>(head.weight(o, i)) * h[r][i];
      out(r, o) = static_cast<double>(acc);
    }
  return out;
}

// Central finite differences of f at x, step h.
inline std::vector<double> finite_diff(const std::function<double(const std::vector<double> &)> &f,
                                       std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2 * h);
  }
  return g;
}

// Five-point central differences, truncation error O(h^4).
inline std::vector<double> finite_diff4(const std::function<double(const std::vector<double> &)> &f,
                                        std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  auto at = [&](std::size_t i, double x0, double d) {
    x[i] = x0 + d;
    return f(x);
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    const double near = at(i, x0, h) - at(i, x0, -h);
    const double far = at(i, x0, 2 * h) - at(i, x0, -2 * h);
    x[i] = x0;
    g[i] = (8 * near - far) / (12 * h);
  }
  return g;
}

// |a - n| / max(|a|, |n|, floor)
inline double rel_err(double a, double n, double floor = 1e-3) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

// Mean by pairwise (tree) summation in long double.
inline long double pairwise_sum(const std::vector<double> &v, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return v[lo];
  if (hi == lo) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(v, lo, mid) + pairwise_sum(v, mid, hi);
}

inline std::vector<double> pairwise_mean(const std::vector<std::vector<double>> &rows) {
  std::vector<double> out(rows.front().size());
  std::vector<double> col(rows.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    for (std::size_t i = 0; i < rows.size(); ++i) col[i] = rows[i][j];
    out[j] = static_cast<double>(pairwise_sum(col, 0, col.size()) / rows.size());
  }
  return out;
}

// Two-pass Pearson correlation in long double.
inline double pcc_two_pass(const std::vector<double> &x, const std::vector<double> &y) {
  long double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

// Textbook Adam on a vector, for comparison with fclsim::Optimizer.
struct ReferenceAdam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  int t = 0;
  void step(std::vector<double> &w, const std::vector<double> &g) {
    if (m.empty()) m.assign(w.size(), 0), v.assign(w.size(), 0);
    ++t;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, t));
      const double vh = v[i] / (1 - std::pow(b2, t));
      w[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

// Affine least-squares fit labels ~ features (with intercept). Returns the
// fitted (8 x 30) coefficient matrix, intercept last.
inline Eigen::MatrixXd least_squares(const fclsim::Dataset &ds) {
  const auto n = static_cast<Eigen::Index>(ds.size());
  Eigen::MatrixXd X(n, fclsim::kFeatureCount + 1);
  Eigen::MatrixXd Y(n, fclsim::kActionCount);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto &s = ds.samples[static_cast<std::size_t>(i)];
    for (std::size_t f = 0; f < fclsim::kFeatureCount; ++f)
      X(i, static_cast<Eigen::Index>(f)) = s.features[f];
    X(i, fclsim::kFeatureCount) = 1.0;
    for (std::size_t a = 0; a < fclsim::kActionCount; ++a)
      Y(i, static_cast<Eigen::Index>(a)) = s.labels[a];
  }
  return X.colPivHouseholderQr().solve(Y).transpose();
}

// Mean squared error (averaged over actions) of an affine fit on `ds`.
inline double affine_mse(const Eigen::MatrixXd &coef, const fclsim::Dataset &ds) {
  long double acc = 0;
  for (const auto &s : ds.samples)
    for (std::size_t a = 0; a < fclsim::kActionCount; ++a) {
      long double p = coef(static_cast<Eigen::Index>(a), fclsim::kFeatureCount);
      for (std::size_t f = 0; f < fclsim::kFeatureCount; ++f)
        p += coef(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(f)) * s.features[f];
      acc += (p - s.labels[a]) * (p - s.labels[a]);
    }
  return static_cast<double>(acc / (ds.size() * fclsim::kActionCount));
}

inline fclsim::Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64 &rng,
                                    double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  fclsim::Matrix m(r, c);
  for (double &v : m.data()) v = u(rng);
  return m;
}

// Model with every tensor (BN included) randomised, running var kept > 0.
inline fclsim::Mlp random_model(std::mt19937_64 &rng, fclsim::ModelShape shape = {}) {
  fclsim::Mlp m = fclsim::Mlp::initialized(shape, rng);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (std::size_t k = 0; k < m.hidden_count(); ++k) {
    auto &bn = m.batch_norm(k);
    for (auto &g : bn.gamma) g = 1.0 + u(rng);
    for (auto &b : bn.beta) b = u(rng);
    for (auto &v : bn.running_mean) v = u(rng);
    for (auto &v : bn.running_var) v = 1.0 + u(rng);
  }
  return m;
}

}  // namespace oracle
