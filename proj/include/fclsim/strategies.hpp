#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fclsim/dataset.hpp"
#include "fclsim/loss.hpp"
#include "fclsim/mlp.hpp"
#include "fclsim/optimizer.hpp"
#include "fclsim/params.hpp"
#include "fclsim/training.hpp"

namespace fclsim {

enum class StrategyKind { fedavg, fedbn, fedprox, fedopt, feddistill };

const char *to_string(StrategyKind k) noexcept;
// Display name as used in result tables ("FedAvg", "FedBN", ...).
const char *display_name(StrategyKind k) noexcept;
StrategyKind parse_strategy_kind(const std::string &s);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::fedavg;
  double mu = 0.01;  // FedProx
  OptimizerSpec server_optimizer{OptimizerKind::adam, 1e-2};  // FedOpt
  double distill_weight = 0.5;  // FedDistill
  bool weighted_average = false;

  friend bool operator==(const StrategyConfig &, const StrategyConfig &) =
      default;
};

struct ClientUpdate {
  int client_id = 0;
  ParameterVector params;
  std::size_t n_samples = 0;
};

// Elementwise mean over clients, BN running statistics included. Uniform by
// default; `weighted` weights each client by n_samples.
ParameterVector fedavg_aggregate(std::span<const ClientUpdate> updates,
                                 bool weighted = false);

// Per-client result: masked (batch-norm) slots keep each client's own
// values, every other slot gets the FedAvg mean. Output order follows input.
std::vector<ParameterVector> fedbn_aggregate(
    std::span<const ClientUpdate> updates,
    const std::vector<std::uint8_t> &bn_mask, bool weighted = false);

// Proximal term (mu/2)*||w - w_t||^2 over trainable slots.
Penalty fedprox_penalty(const ParameterVector &omega,
                        const ParameterVector &omega_t, double mu);

// Server-side optimizer treating (global - mean of clients) as a gradient.
// Running BN statistics bypass the optimizer and take the plain mean.
class FedOptServer {
 public:
  explicit FedOptServer(OptimizerSpec spec);

  ParameterVector step(const ParameterVector &global,
                       std::span<const ClientUpdate> updates,
                       bool weighted = false);

  const Optimizer &optimizer() const noexcept { return opt_; }

 private:
  Optimizer opt_;
};

// A client's private model in FedDistill; never leaves the client.
struct TeacherState {
  Mlp model;
  Optimizer optimizer;
};

struct DistillRoundResult {
  ClientUpdate update;
  TrainStats student;
  TrainStats teacher;
};

// Teacher trains on the shard first (plain MSE), then the student, which
// starts from the broadcast global, trains on the blended objective.
DistillRoundResult feddistill_local_train(Mlp &student, Optimizer &student_opt,
                                          TeacherState &teacher,
                                          const Dataset &shard,
                                          double distill_weight,
                                          const TrainContext &ctx,
                                          int client_id = 0,
                                          TrainHooks student_hooks = {});

}  // namespace fclsim
