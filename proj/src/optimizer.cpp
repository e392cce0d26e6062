#include "fclsim/optimizer.hpp"

#include <cmath>

namespace fclsim {

const char *to_string(OptimizerKind k) noexcept {
  return k == OptimizerKind::sgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer_kind(const std::string &s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd|adam)");
}

Optimizer::Optimizer(OptimizerSpec spec) : spec_(spec) {
  if (!(spec_.learning_rate >= 0.0) || !std::isfinite(spec_.learning_rate))
    throw ConfigError("learning rate must be finite and >= 0");
  if (spec_.kind == OptimizerKind::adam &&
      (!(spec_.beta1 >= 0.0 && spec_.beta1 < 1.0) ||
       !(spec_.beta2 >= 0.0 && spec_.beta2 < 1.0) || !(spec_.epsilon > 0.0)))
    throw ConfigError("adam hyperparameters out of range");
}

void Optimizer::reset() {
  steps_ = 0;
  m_.clear();
  v_.clear();
}

void Optimizer::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size())
    throw ShapeError("optimizer step: parameter/gradient length mismatch");
  for (double g : grads)
    if (!std::isfinite(g))
      throw NumericError("optimizer step: non-finite gradient");
  const double lr = spec_.learning_rate;
  if (spec_.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
    ++steps_;
    return;
  }
  if (m_.empty()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  } else if (m_.size() != params.size()) {
    throw ShapeError("optimizer step: vector length changed between steps");
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(spec_.beta1, t);
  const double c2 = 1.0 - std::pow(spec_.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m_[i] = spec_.beta1 * m_[i] + (1.0 - spec_.beta1) * g;
    v_[i] = spec_.beta2 * v_[i] + (1.0 - spec_.beta2) * g * g;
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + spec_.epsilon);
  }
}

void Optimizer::step(ParameterVector &params, const GradientVector &grads) {
  require_same_layout(params, grads, "optimizer step");
  step(params.span(), grads.span());
}

}  // namespace fclsim
