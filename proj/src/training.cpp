#include "fclsim/training.hpp"

#include <algorithm>

namespace fclsim {

std::size_t effective_batch_size(std::size_t configured, std::size_t shard) {
  return std::min(configured, shard);
}

LossGradient distill_gradients(const Mlp &student, const Mlp *teacher,
                               double weight, const Batch &batch) {
  if (!teacher || weight == 0.0)
    return compute_gradients(student, batch.features, batch.labels);
  LossGradient out;
  out.trace = student.trace(batch.features, Mode::train);
  const Matrix &pred = out.trace.output;
  const Matrix soft = teacher->trace(batch.features, Mode::train).output;
  const double label_loss = mse_loss(pred, batch.labels).value;
  const double teacher_loss = mse_loss(pred, soft).value;
  out.data_loss = (1.0 - weight) * label_loss + weight * teacher_loss;
  out.loss = out.data_loss;
  Matrix g = mse_grad(pred, batch.labels, 1.0 - weight);
  const Matrix gt = mse_grad(pred, soft, weight);
  for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += gt.data()[i];
  out.grad = student.backward(out.trace, g);
  return out;
}

TrainStats train_local(Mlp &model, Optimizer &opt, const Dataset &shard,
                       const TrainContext &ctx, const TrainHooks &hooks) {
  if (ctx.epochs < 1) throw ConfigError("local epochs must be >= 1");
  if (shard.size() < 2)
    throw DataError("local training needs at least 2 samples");
  TrainStats stats;
  double loss_sum = 0.0;
  const std::size_t bs = effective_batch_size(ctx.batch_size, shard.size());
  for (int e = 0; e < ctx.epochs; ++e) {
    const auto epoch = static_cast<std::uint64_t>(e);
    std::vector<Batch> batches =
        hooks.batches ? hooks.batches(epoch)
                      : minibatches(shard, bs, ctx.stream_seed, epoch);
    for (const auto &batch : batches) {
      LossGradient lg =
          distill_gradients(model, hooks.teacher, hooks.distill_weight, batch);
      model.commit_running_stats(lg.trace);
      ParameterVector params = model.extract_params();
      GradientVector grad = lg.grad;
      if (hooks.penalty) accumulate(grad, hooks.penalty(params).grad);
      ParameterVector before;
      if (hooks.after_step) before = params;
      opt.step(params, grad);
      model.inject_params(params);
      if (hooks.after_step) hooks.after_step(lg.grad, before, params);
      loss_sum += lg.data_loss;
      ++stats.steps;
    }
  }
  stats.mean_loss = stats.steps ? loss_sum / static_cast<double>(stats.steps) : 0.0;
  return stats;
}

}  // namespace fclsim
