#include "fclsim/strategies.hpp"

#include "fclsim/rng.hpp"

namespace fclsim {

const char *to_string(StrategyKind k) noexcept {
  switch (k) {
    case StrategyKind::fedavg: return "fedavg";
    case StrategyKind::fedbn: return "fedbn";
    case StrategyKind::fedprox: return "fedprox";
    case StrategyKind::fedopt: return "fedopt";
    case StrategyKind::feddistill: return "feddistill";
  }
  return "?";
}

const char *display_name(StrategyKind k) noexcept {
  switch (k) {
    case StrategyKind::fedavg: return "FedAvg";
    case StrategyKind::fedbn: return "FedBN";
    case StrategyKind::fedprox: return "FedProx";
    case StrategyKind::fedopt: return "FedOpt";
    case StrategyKind::feddistill: return "FedDistill";
  }
  return "?";
}

StrategyKind parse_strategy_kind(const std::string &s) {
  for (auto k : {StrategyKind::fedavg, StrategyKind::fedbn,
                 StrategyKind::fedprox, StrategyKind::fedopt,
                 StrategyKind::feddistill})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown strategy '" + s +
                    "' (expected fedavg|fedbn|fedprox|fedopt|feddistill)");
}

namespace {

void check_updates(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw ShapeError("aggregate: no client updates");
  for (const auto &u : updates)
    require_same_layout(u.params, updates.front().params, "aggregate");
}

}  // namespace

ParameterVector fedavg_aggregate(std::span<const ClientUpdate> updates,
                                 bool weighted) {
  check_updates(updates);
  // Mean taken as an offset from the first client, so identical inputs
  // return that vector exactly.
  const ParameterVector &base = updates.front().params;
  std::vector<double> offset(base.size(), 0.0);
  double total = 0.0;
  for (const auto &u : updates) {
    const double w = weighted ? static_cast<double>(u.n_samples) : 1.0;
    total += w;
    for (std::size_t i = 0; i < offset.size(); ++i)
      offset[i] += w * (u.params[i] - base[i]);
  }
  if (!(total > 0.0))
    throw ShapeError("aggregate: weighted mean needs positive sample counts");
  ParameterVector mean = base;
  for (std::size_t i = 0; i < offset.size(); ++i) mean[i] += offset[i] / total;
  return mean;
}

std::vector<ParameterVector> fedbn_aggregate(
    std::span<const ClientUpdate> updates,
    const std::vector<std::uint8_t> &bn_mask, bool weighted) {
  const ParameterVector mean = fedavg_aggregate(updates, weighted);
  if (bn_mask.size() != mean.size())
    throw ShapeError("fedbn_aggregate: mask length mismatch");
  std::vector<ParameterVector> out;
  out.reserve(updates.size());
  for (const auto &u : updates) {
    ParameterVector p = u.params;
    for (std::size_t i = 0; i < p.size(); ++i)
      if (!bn_mask[i]) p[i] = mean[i];
    out.push_back(std::move(p));
  }
  return out;
}

Penalty fedprox_penalty(const ParameterVector &omega,
                        const ParameterVector &omega_t, double mu) {
  require_same_layout(omega, omega_t, "fedprox_penalty");
  if (!(mu >= 0.0)) throw ConfigError("fedprox mu must be >= 0");
  Penalty p{0.0, GradientVector(omega.layout)};
  p.grad.values.assign(omega.size(), 0.0);
  const auto *trainable =
      omega.layout ? &omega.layout->trainable_mask() : nullptr;
  double sq = 0.0;
  for (std::size_t i = 0; i < omega.size(); ++i) {
    if (trainable && !(*trainable)[i]) continue;
    const double d = omega[i] - omega_t[i];
    sq += d * d;
    p.grad[i] = mu * d;
  }
  p.value = 0.5 * mu * sq;
  return p;
}

FedOptServer::FedOptServer(OptimizerSpec spec) : opt_(spec) {}

ParameterVector FedOptServer::step(const ParameterVector &global,
                                   std::span<const ClientUpdate> updates,
                                   bool weighted) {
  const ParameterVector mean = fedavg_aggregate(updates, weighted);
  require_same_layout(global, mean, "fedopt step");
  ParameterVector next = mean;
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < global.size(); ++i)
    if (!global.layout || global.layout->trainable_mask()[i])
      slots.push_back(i);

  if (opt_.spec().kind == OptimizerKind::sgd) {
    // w - lr*(w - mean) == mean + (1 - lr)*(w - mean)
    const double lr = opt_.spec().learning_rate;
    for (std::size_t i : slots)
      next[i] = mean[i] + (1.0 - lr) * (global[i] - mean[i]);
    return next;
  }
  std::vector<double> w(slots.size()), delta(slots.size());
  for (std::size_t k = 0; k < slots.size(); ++k) {
    w[k] = global[slots[k]];
    delta[k] = global[slots[k]] - mean[slots[k]];
  }
  opt_.step(w, delta);
  for (std::size_t k = 0; k < slots.size(); ++k) next[slots[k]] = w[k];
  return next;
}

DistillRoundResult feddistill_local_train(Mlp &student, Optimizer &student_opt,
                                          TeacherState &teacher,
                                          const Dataset &shard,
                                          double distill_weight,
                                          const TrainContext &ctx,
                                          int client_id,
                                          TrainHooks student_hooks) {
  if (!(distill_weight >= 0.0 && distill_weight <= 1.0))
    throw ConfigError("distill_weight must be in [0,1]");
  DistillRoundResult r;
  TrainContext teacher_ctx = ctx;
  teacher_ctx.stream_seed =
      derive_seed(ctx.stream_seed, {key(Stream::teacher_minibatch)});
  r.teacher =
      train_local(teacher.model, teacher.optimizer, shard, teacher_ctx);
  student_hooks.teacher = &teacher.model;
  student_hooks.distill_weight = distill_weight;
  r.student = train_local(student, student_opt, shard, ctx, student_hooks);
  r.update = ClientUpdate{client_id, student.extract_params(), shard.size()};
  return r;
}

}  // namespace fclsim
