#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fclsim/params.hpp"

namespace fclsim {

enum class OptimizerKind { sgd, adam };

const char *to_string(OptimizerKind k) noexcept;
OptimizerKind parse_optimizer_kind(const std::string &s);

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const OptimizerSpec &, const OptimizerSpec &) =
      default;
};

// First-order optimizer over a flat vector. Adam keeps its moment vectors
// sized to the first vector it sees.
class Optimizer {
 public:
  explicit Optimizer(OptimizerSpec spec = {});

  const OptimizerSpec &spec() const noexcept { return spec_; }
  std::uint64_t steps() const noexcept { return steps_; }

  // params <- params - update(grads). NaN/Inf gradients are rejected before
  // any state changes.
  void step(std::span<double> params, std::span<const double> grads);
  void step(ParameterVector &params, const GradientVector &grads);

  void reset();

 private:
  OptimizerSpec spec_;
  std::uint64_t steps_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace fclsim
