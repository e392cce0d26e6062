#include "fclsim/loss.hpp"

namespace fclsim {

MseResult mse_loss(const Matrix &pred, const Matrix &target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeError("mse_loss: prediction and target shapes differ");
  if (pred.rows() == 0) throw ShapeError("mse_loss: empty batch");
  MseResult r;
  r.per_action.assign(pred.cols(), 0.0);
  for (std::size_t i = 0; i < pred.rows(); ++i)
    for (std::size_t a = 0; a < pred.cols(); ++a) {
      const double d = pred(i, a) - target(i, a);
      r.per_action[a] += d * d;
    }
  for (auto &v : r.per_action) {
    v /= static_cast<double>(pred.rows());
    r.value += v;
  }
  r.value /= static_cast<double>(pred.cols());
  return r;
}

Matrix mse_grad(const Matrix &pred, const Matrix &target, double scale) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeError("mse_grad: prediction and target shapes differ");
  Matrix g(pred.rows(), pred.cols());
  const double k =
      scale * 2.0 / static_cast<double>(pred.rows() * pred.cols());
  for (std::size_t i = 0; i < g.size(); ++i)
    g.data()[i] = k * (pred.data()[i] - target.data()[i]);
  return g;
}

LossGradient compute_gradients(const Mlp &model, const Matrix &batch,
                               const Matrix &target, const Penalty *penalty,
                               Mode mode) {
  LossGradient out;
  out.trace = model.trace(batch, mode);
  out.data_loss = mse_loss(out.trace.output, target).value;
  out.loss = out.data_loss;
  out.grad = model.backward(out.trace, mse_grad(out.trace.output, target));
  if (penalty) {
    accumulate(out.grad, penalty->grad);
    out.loss += penalty->value;
  }
  return out;
}

}  // namespace fclsim
