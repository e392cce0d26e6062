#pragma once

#include <vector>

#include "fclsim/matrix.hpp"
#include "fclsim/mlp.hpp"
#include "fclsim/params.hpp"

namespace fclsim {

struct MseResult {
  double value = 0.0;               // mean of per_action
  std::vector<double> per_action;   // mean over the batch, per output column
};

MseResult mse_loss(const Matrix &pred, const Matrix &target);

// d(mse_loss.value)/d(pred), scaled by `scale`.
Matrix mse_grad(const Matrix &pred, const Matrix &target, double scale = 1.0);

// Scalar penalty added to a client objective, with its gradient.
struct Penalty {
  double value = 0.0;
  GradientVector grad;
};

struct LossGradient {
  double loss = 0.0;  // data loss plus penalty value
  double data_loss = 0.0;
  GradientVector grad;
  ForwardTrace trace;
};

// Gradient of mse_loss(model(batch), target) plus an optional penalty whose
// gradient is added slotwise. Pure: running statistics are left untouched;
// call Mlp::commit_running_stats(result.trace) to fold them in.
LossGradient compute_gradients(const Mlp &model, const Matrix &batch,
                               const Matrix &target,
                               const Penalty *penalty = nullptr,
                               Mode mode = Mode::train);

}  // namespace fclsim
