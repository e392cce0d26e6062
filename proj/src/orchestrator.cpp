#include "fclsim/orchestrator.hpp"

#include <chrono>
#include <exception>
#include <thread>

#include "fclsim/rng.hpp"
#include "fclsim/training.hpp"

namespace fclsim {

void ExperimentConfig::validate() const {
  if (n_clients < 1) throw ConfigError("must be >= 1", "clients");
  if (n_rounds < 1) throw ConfigError("must be >= 1", "rounds");
  if (local_epochs < 1) throw ConfigError("must be >= 1", "local_epochs");
  if (batch_size < 2) throw ConfigError("must be >= 2", "batch_size");
  if (workers < 1) throw ConfigError("must be >= 1", "workers");
  if (!(strategy.mu >= 0.0)) throw ConfigError("must be >= 0", "mu");
  if (!(strategy.distill_weight >= 0.0 && strategy.distill_weight <= 1.0))
    throw ConfigError("must be in [0,1]", "distill_weight");
  if (!(penalty.lambda >= 0.0)) throw ConfigError("must be >= 0", "lambda");
  if (!(penalty.gamma_online >= 0.0 && penalty.gamma_online <= 1.0))
    throw ConfigError("must be in [0,1]", "gamma_online");
  if (!(penalty.si_xi > 0.0)) throw ConfigError("must be > 0", "si_xi");
  if (!(penalty.mix_ratio >= 0.0 && penalty.mix_ratio <= 1.0))
    throw ConfigError("must be in [0,1]", "mix_ratio");
  if (penalty.replay_capacity == 0)
    throw ConfigError("must be > 0", "replay_capacity");
  if (!(augment_sigma >= 0.0)) throw ConfigError("must be >= 0", "augment_sigma");
  if (continual() && strategy.kind != StrategyKind::fedavg)
    throw ConfigError("continual methods run on fedavg only", "strategy");
}

ExperimentData prepare_data(const DataSource &source, std::uint64_t seed) {
  Dataset all;
  if (source.kind == DataKind::csv) {
    all = load_csv(source.path);
  } else {
    all = synthetic_generate(source.synthetic_samples, seed,
                             source.synthetic_noise,
                             source.synthetic_task_shift)
              .data;
  }
  auto split = train_test_split(all, source.split_ratio, seed);
  return {std::move(split.train), std::move(split.test)};
}

void EventLog::record(Event e) {
  std::lock_guard lock(mu_);
  events_.push_back(e);
}

std::vector<Event> EventLog::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::uint64_t client_stream_seed(std::uint64_t seed, int client, int task,
                                 int round) {
  return derive_seed(seed, {key(Stream::minibatch),
                            static_cast<std::uint64_t>(client),
                            static_cast<std::uint64_t>(task),
                            static_cast<std::uint64_t>(round)});
}

Mlp initial_model(const ExperimentConfig &config) {
  auto rng = make_rng(config.seed, {key(Stream::init)});
  return Mlp::initialized(config.model, rng);
}

MetricsReport evaluate(const ParameterVector &params, const Dataset &test,
                       const ModelShape &shape) {
  if (test.empty()) throw DataError("evaluate: empty test set");
  Mlp model(shape);
  model.inject_params(params);
  const Batch b = make_batch(test);
  return compute_report(model.predict(b.features), b.labels);
}

namespace {

// Runs fn(i) for i in [0, n) on up to `workers` threads with a static
// assignment; the first failure (lowest index) is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn &&fn) {
  std::vector<std::exception_ptr> errors(n);
  const std::size_t threads =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  auto body = [&](std::size_t t) {
    for (std::size_t i = t; i < n; i += threads) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    body(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(body, t);
  }
  for (auto &e : errors)
    if (e) std::rethrow_exception(e);
}

struct ClientState {
  int id = 0;
  int shard_owner = 0;
  Mlp model;
  Optimizer optimizer;
  Dataset full_shard;
  Dataset shard;  // data of the current task
  std::optional<TeacherState> teacher;

  std::vector<AnchorParams> anchors;
  std::vector<ImportanceMap> importances;
  ImportanceMap accumulated;  // EWC-Online / SI / MAS running map
  SiAccumulator si;
  ReplayBuffer replay;
};

class Simulation {
 public:
  Simulation(const ExperimentConfig &config, RunOptions options,
             std::vector<ClientPartition> parts)
      : config_(config), options_(options) {
    const Mlp init = initial_model(config_);
    global_ = init.extract_params();
    if (config_.strategy.kind == StrategyKind::fedopt)
      server_.emplace(config_.strategy.server_optimizer);
    for (auto &p : parts) {
      ClientState c;
      c.id = p.client_id;
      c.shard_owner = p.client_id;
      c.model = init;
      c.optimizer = Optimizer(config_.client_optimizer);
      c.full_shard = std::move(p.shard);
      if (config_.strategy.kind == StrategyKind::feddistill)
        c.teacher = TeacherState{init, Optimizer(config_.client_optimizer)};
      if (config_.cl_method == ClMethod::nr)
        c.replay = ReplayBuffer(config_.penalty.replay_capacity);
      clients_.push_back(std::move(c));
    }
  }

  std::vector<ClientState> &clients() { return clients_; }
  const ParameterVector &global() const { return global_; }

  // One task: `rounds` aggregation rounds over each client's current shard.
  void run_task(int task, int rounds, const Dataset &eval_set, bool last_task,
                std::vector<RoundLog> &logs) {
    for (auto &c : clients_) {
      if (task > 0 && config_.reset_optimizer_at_task) {
        c.optimizer.reset();
        if (c.teacher) c.teacher->optimizer.reset();
      }
      if (config_.cl_method == ClMethod::si)
        c.si = SiAccumulator(global_, config_.penalty.si_xi);
    }
    for (int r = 0; r < rounds; ++r) {
      const auto start = std::chrono::steady_clock::now();
      const bool task_end = r + 1 == rounds;
      std::vector<ClientUpdate> updates(clients_.size());
      std::vector<double> losses(clients_.size());
      parallel_for(clients_.size(), config_.workers, [&](std::size_t i) {
        try {
          auto [u, loss] = train_client(clients_[i], task, r, task_end && !last_task);
          updates[i] = std::move(u);
          losses[i] = loss;
        } catch (const TrainingError &) {
          throw;
        } catch (const std::exception &e) {
          throw TrainingError(e.what(), clients_[i].id, r);
        }
      });
      aggregate(updates, task, r);
      RoundLog log;
      log.round = r;
      log.task = task;
      log.global = evaluate(global_, eval_set, config_.model);
      record({Event::Kind::evaluate, task, r, -1});
      log.client_loss = std::move(losses);
      log.wall_seconds = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start)
                             .count();
      logs.push_back(std::move(log));
    }
  }

 private:
  void record(Event e) {
    if (options_.events) options_.events->record(e);
  }

  std::pair<ClientUpdate, double> train_client(ClientState &c, int task,
                                               int round, bool consolidate) {
    if (options_.audit) options_.audit->on_shard_read(c.id, c.shard_owner);
    const bool fedbn = config_.strategy.kind == StrategyKind::fedbn;
    if (fedbn)
      c.model.inject_params(global_, global_.layout->bn_mask());
    else
      c.model.inject_params(global_);
    record({Event::Kind::broadcast, task, round, c.id});
    if (config_.reset_optimizer_each_round) {
      c.optimizer.reset();
      if (c.teacher) c.teacher->optimizer.reset();
    }

    TrainContext ctx{config_.batch_size, config_.local_epochs,
                     client_stream_seed(config_.seed, c.id, task, round)};
    TrainHooks hooks = make_hooks(c, task, ctx);

    TrainStats stats;
    ClientUpdate update;
    if (config_.strategy.kind == StrategyKind::feddistill) {
      auto r = feddistill_local_train(c.model, c.optimizer, *c.teacher, c.shard,
                                      config_.strategy.distill_weight, ctx,
                                      c.id, std::move(hooks));
      stats = r.student;
      update = std::move(r.update);
    } else {
      stats = train_local(c.model, c.optimizer, c.shard, ctx, hooks);
      update = ClientUpdate{c.id, c.model.extract_params(), c.shard.size()};
    }
    record({Event::Kind::local_train, task, round, c.id});
    if (consolidate) consolidate_task(c, task, round);
    return {std::move(update), stats.mean_loss};
  }

  TrainHooks make_hooks(ClientState &c, int task, const TrainContext &ctx) {
    TrainHooks hooks;
    const bool prox = config_.strategy.kind == StrategyKind::fedprox;
    const ClMethod cl = config_.cl_method;
    const bool regularized = task > 0 && !c.anchors.empty() &&
                             (cl == ClMethod::ewc || cl == ClMethod::ewc_online ||
                              cl == ClMethod::si || cl == ClMethod::mas);
    const double lambda = config_.penalty.lambda;
    if (prox || regularized) {
      ParameterVector anchor_t = global_;
      hooks.penalty = [&c, prox, regularized, lambda, cl,
                       anchor_t = std::move(anchor_t),
                       mu = config_.strategy.mu](const ParameterVector &theta) {
        Penalty total{0.0, GradientVector(theta.layout)};
        if (prox) {
          Penalty p = fedprox_penalty(theta, anchor_t, mu);
          total.value += p.value;
          accumulate(total.grad, p.grad);
        }
        if (regularized) {
          Penalty p =
              cl == ClMethod::ewc
                  ? ewc_penalty(theta, c.anchors, c.importances, lambda)
                  : ewc_penalty(theta, std::span(&c.anchors.back(), 1),
                                std::span(&c.accumulated, 1), lambda);
          total.value += p.value;
          accumulate(total.grad, p.grad);
        }
        return total;
      };
    }
    if (cl == ClMethod::si) {
      hooks.after_step = [&c](const GradientVector &g,
                              const ParameterVector &before,
                              const ParameterVector &after) {
        std::vector<double> delta(after.size());
        for (std::size_t i = 0; i < delta.size(); ++i)
          delta[i] = after[i] - before[i];
        si_accumulate(c.si, g, delta);
      };
    }
    if (cl == ClMethod::nr && task > 0 && !c.replay.empty()) {
      const std::size_t bs = effective_batch_size(
          config_.batch_size, c.shard.size() + c.replay.stored().size());
      hooks.batches = [&c, bs, mix = config_.penalty.mix_ratio,
                       seed = ctx.stream_seed](std::uint64_t epoch) {
        return nr_mixed_batches(c.replay, c.shard, bs, mix, seed, epoch);
      };
    }
    return hooks;
  }

  // Task-boundary bookkeeping from the client's local model, ahead of the
  // task's final aggregation.
  void consolidate_task(ClientState &c, int task, int round) {
    const ClMethod cl = config_.cl_method;
    if (cl == ClMethod::none) return;
    const ParameterVector theta = c.model.extract_params();
    const std::uint64_t seed = derive_seed(
        config_.seed, {key(Stream::fisher), static_cast<std::uint64_t>(c.id),
                       static_cast<std::uint64_t>(task)});
    auto add_to_accumulated = [&](const ImportanceMap &m) {
      if (c.accumulated.values.empty()) {
        c.accumulated = m;
        return;
      }
      for (std::size_t i = 0; i < m.values.size(); ++i)
        c.accumulated.values[i] += m.values[i];
    };
    switch (cl) {
      case ClMethod::ewc:
        c.importances.push_back(compute_fisher(
            c.model, c.shard, config_.penalty.fisher_samples, seed));
        c.anchors.push_back({theta, task});
        break;
      case ClMethod::ewc_online:
        c.accumulated = ewc_online_update(
            c.accumulated,
            compute_fisher(c.model, c.shard, config_.penalty.fisher_samples, seed),
            config_.penalty.gamma_online);
        c.anchors.assign(1, {theta, task});
        break;
      case ClMethod::si:
        add_to_accumulated(si_consolidate(c.si, theta));
        c.anchors.assign(1, {theta, task});
        break;
      case ClMethod::mas:
        add_to_accumulated(mas_importance(c.model, make_batch(c.shard).features,
                                          config_.penalty.fisher_samples, seed));
        c.anchors.assign(1, {theta, task});
        break;
      case ClMethod::nr:
        c.replay = nr_store(std::move(c.replay), c.shard, seed);
        record({Event::Kind::replay_store, task, round, c.id});
        return;
      case ClMethod::none:
        return;
    }
    record({Event::Kind::importance, task, round, c.id});
  }

  void aggregate(const std::vector<ClientUpdate> &updates, int task,
                 int round) {
    const bool weighted = config_.strategy.weighted_average;
    switch (config_.strategy.kind) {
      case StrategyKind::fedbn: {
        auto per_client =
            fedbn_aggregate(updates, global_.layout->bn_mask(), weighted);
        for (std::size_t i = 0; i < clients_.size(); ++i)
          clients_[i].model.inject_params(per_client[i]);
        global_ = std::move(per_client.front());
        break;
      }
      case StrategyKind::fedopt:
        global_ = server_->step(global_, updates, weighted);
        break;
      default:
        global_ = fedavg_aggregate(updates, weighted);
        break;
    }
    record({Event::Kind::aggregate, task, round, -1});
  }

  const ExperimentConfig &config_;
  RunOptions options_;
  ParameterVector global_;
  std::optional<FedOptServer> server_;
  std::vector<ClientState> clients_;
};

ExperimentData maybe_augment(const ExperimentConfig &config,
                             const ExperimentData &data) {
  if (!config.augmentation) return data;
  return {augment(data.train, config.augment_sigma, config.seed), data.test};
}

}  // namespace

ExperimentResult run_fl(const ExperimentConfig &config,
                        const ExperimentData &data, RunOptions options) {
  config.validate();
  if (config.continual())
    throw ConfigError("run_fl takes cl_method = none", "cl_method");
  const ExperimentData d = maybe_augment(config, data);
  Simulation sim(config, options,
                 partition_clients(d.train, config.n_clients, config.seed));
  for (auto &c : sim.clients()) c.shard = c.full_shard;
  ExperimentResult result;
  sim.run_task(0, config.n_rounds, d.test, true, result.rounds);
  result.final_report = result.rounds.back().global;
  result.final_global = sim.global();
  return result;
}

ExperimentResult run_fcl(const ExperimentConfig &config,
                         const ExperimentData &data, FclSchedule schedule,
                         RunOptions options) {
  config.validate();
  if (!config.continual())
    throw ConfigError("run_fcl needs a continual method or sequential_tasks",
                      "cl_method");
  if (schedule.rounds_per_task < 1)
    throw ConfigError("must be >= 1", "rounds_per_task");
  const ExperimentData d = maybe_augment(config, data);
  const Dataset circle_test = split_tasks(d.test).task1;
  if (circle_test.size() < 2)
    throw DataError("continual run needs circle samples in the test set");
  Simulation sim(config, options,
                 partition_clients(d.train, config.n_clients, config.seed));
  std::vector<TaskSplit> splits;
  for (auto &c : sim.clients()) {
    splits.push_back(split_tasks(c.full_shard));
    if (splits.back().task1.size() < 2 || splits.back().task2.size() < 2)
      throw DataError("client " + std::to_string(c.id) +
                      " has fewer than 2 samples in a task");
  }

  ExperimentResult result;
  for (std::size_t i = 0; i < splits.size(); ++i)
    sim.clients()[i].shard = splits[i].task1;
  sim.run_task(0, schedule.rounds_per_task, circle_test, false, result.rounds);
  result.after_task1 = result.rounds.back().global;

  for (std::size_t i = 0; i < splits.size(); ++i)
    sim.clients()[i].shard = splits[i].task2;
  sim.run_task(1, schedule.rounds_per_task, d.test, true, result.rounds);
  result.after_task2 = result.rounds.back().global;
  result.final_report = *result.after_task2;
  result.task1_after_task2 = evaluate(sim.global(), circle_test, config.model);
  result.final_global = sim.global();
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig &config,
                                const ExperimentData &data,
                                RunOptions options) {
  if (config.continual())
    return run_fcl(config, data, FclSchedule{config.n_rounds}, options);
  return run_fl(config, data, options);
}

}  // namespace fclsim
