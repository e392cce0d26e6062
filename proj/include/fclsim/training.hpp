#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fclsim/dataset.hpp"
#include "fclsim/loss.hpp"
#include "fclsim/mlp.hpp"
#include "fclsim/optimizer.hpp"

namespace fclsim {

struct TrainContext {
  std::size_t batch_size = 32;
  int epochs = 1;
  // Per (client, round) stream; batch order is derived from (stream, epoch).
  std::uint64_t stream_seed = 0;
};

struct TrainHooks {
  // Extra objective term evaluated at the current parameters before each
  // step (proximal term, consolidation penalties).
  std::function<Penalty(const ParameterVector &)> penalty;

  // Fires after every optimizer step with the data-loss gradient that drove
  // it and the parameters on either side of the step.
  std::function<void(const GradientVector &data_grad,
                     const ParameterVector &before,
                     const ParameterVector &after)>
      after_step;

  // Replaces the plain shuffled minibatch schedule (rehearsal mixing).
  std::function<std::vector<Batch>(std::uint64_t epoch)> batches;

  // Distillation: the output target becomes a (1-w, w) blend of the labels
  // and the teacher's predictions on the same batch.
  const Mlp *teacher = nullptr;
  double distill_weight = 0.0;
};

struct TrainStats {
  double mean_loss = 0.0;  // mean data loss over all steps
  std::size_t steps = 0;
};

// Batch size clamped to the shard: a shard smaller than the configured batch
// trains as a single batch.
std::size_t effective_batch_size(std::size_t configured, std::size_t shard);

TrainStats train_local(Mlp &model, Optimizer &opt, const Dataset &shard,
                       const TrainContext &ctx, const TrainHooks &hooks = {});

// Gradient of the (1-w)*MSE(labels) + w*MSE(teacher) objective; with a null
// teacher or w == 0 this is exactly compute_gradients.
LossGradient distill_gradients(const Mlp &student, const Mlp *teacher,
                               double weight, const Batch &batch);

}  // namespace fclsim
