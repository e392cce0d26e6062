#include "fclsim/continual.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

namespace fclsim {

const char *to_string(ClMethod m) noexcept {
  switch (m) {
    case ClMethod::none: return "none";
    case ClMethod::ewc: return "ewc";
    case ClMethod::ewc_online: return "ewc_online";
    case ClMethod::si: return "si";
    case ClMethod::mas: return "mas";
    case ClMethod::nr: return "nr";
  }
  return "?";
}

const char *display_name(ClMethod m) noexcept {
  switch (m) {
    case ClMethod::none: return "";
    case ClMethod::ewc: return "EWC";
    case ClMethod::ewc_online: return "EWCOnline";
    case ClMethod::si: return "SI";
    case ClMethod::mas: return "MAS";
    case ClMethod::nr: return "NR";
  }
  return "?";
}

ClMethod parse_cl_method(const std::string &s) {
  for (auto m : {ClMethod::none, ClMethod::ewc, ClMethod::ewc_online,
                 ClMethod::si, ClMethod::mas, ClMethod::nr})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown continual method '" + s +
                    "' (expected none|ewc|ewc_online|si|mas|nr)");
}

double default_lambda(ClMethod m) noexcept {
  switch (m) {
    case ClMethod::ewc:
    case ClMethod::ewc_online: return 100.0;
    case ClMethod::si:
    case ClMethod::mas: return 1.0;
    default: return 0.0;
  }
}

namespace {

std::vector<std::size_t> sample_rows(std::size_t n, std::size_t max_samples,
                                     std::uint64_t seed, Stream stream) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (max_samples > 0 && max_samples < n) {
    auto rng = make_rng(seed, {key(stream)});
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(max_samples);
    std::sort(idx.begin(), idx.end());
  }
  return idx;
}

Matrix single_row(const Matrix &m, std::size_t r) {
  Matrix out(1, m.cols());
  std::copy(m.row(r).begin(), m.row(r).end(), out.row(0).begin());
  return out;
}

}  // namespace

ImportanceMap compute_fisher(const Mlp &model, const Dataset &shard,
                             std::size_t max_samples, std::uint64_t seed) {
  if (shard.empty()) throw DataError("compute_fisher: empty shard");
  const auto rows = sample_rows(shard.size(), max_samples, seed, Stream::fisher);
  ImportanceMap f{std::vector<double>(model.layout()->size(), 0.0),
                  ImportanceKind::fisher};
  for (std::size_t r : rows) {
    const Batch b = make_batch(std::span<const SceneSample>(&shard.samples[r], 1));
    const auto lg =
        compute_gradients(model, b.features, b.labels, nullptr, Mode::eval);
    for (std::size_t i = 0; i < f.values.size(); ++i)
      f.values[i] += lg.grad[i] * lg.grad[i];
  }
  for (double &v : f.values) v /= static_cast<double>(rows.size());
  return f;
}

Penalty ewc_penalty(const ParameterVector &theta,
                    std::span<const AnchorParams> anchors,
                    std::span<const ImportanceMap> importances,
                    double lambda) {
  if (anchors.size() != importances.size())
    throw ShapeError("ewc_penalty: need one importance map per anchor");
  if (!(lambda >= 0.0)) throw ConfigError("penalty lambda must be >= 0");
  Penalty p{0.0, GradientVector(theta.layout)};
  p.grad.values.assign(theta.size(), 0.0);
  const auto *trainable =
      theta.layout ? &theta.layout->trainable_mask() : nullptr;
  for (std::size_t t = 0; t < anchors.size(); ++t) {
    const auto &star = anchors[t].theta_star;
    const auto &imp = importances[t].values;
    require_same_layout(theta, star, "ewc_penalty");
    if (imp.size() != theta.size())
      throw ShapeError("ewc_penalty: importance length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      if (trainable && !(*trainable)[i]) continue;
      const double d = theta[i] - star[i];
      acc += imp[i] * d * d;
      p.grad[i] += lambda * imp[i] * d;
    }
    p.value += 0.5 * lambda * acc;
  }
  return p;
}

void save_importance_csv(const ImportanceMap &map, const ParamLayout &layout,
                         const std::filesystem::path &path) {
  if (map.values.size() != layout.size())
    throw ShapeError("save_importance_csv: importance length mismatch");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "layer,role,index,value\n";
  for (const auto &s : layout.slices())
    for (std::size_t i = 0; i < s.size; ++i)
      out << fmt::format("{},{},{},{}\n", s.layer, to_string(s.role), i,
                         map.values[s.offset + i]);
}

ImportanceMap ewc_online_update(const ImportanceMap &running,
                                const ImportanceMap &new_fisher,
                                double gamma_online) {
  if (!(gamma_online >= 0.0 && gamma_online <= 1.0))
    throw ConfigError("gamma_online must be in [0,1]");
  ImportanceMap out{new_fisher.values, ImportanceKind::fisher_running};
  if (running.values.empty()) return out;
  if (running.values.size() != new_fisher.values.size())
    throw ShapeError("ewc_online_update: layout mismatch");
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = gamma_online * running.values[i] + new_fisher.values[i];
  return out;
}

SiAccumulator::SiAccumulator(const ParameterVector &task_start, double xi_)
    : omega_running(task_start.size(), 0.0),
      theta_at_task_start(task_start),
      xi(xi_) {
  if (!(xi > 0.0)) throw ConfigError("SI damping xi must be > 0");
}

void si_accumulate(SiAccumulator &acc, const GradientVector &grad_before_step,
                   std::span<const double> delta_theta) {
  if (grad_before_step.size() != acc.omega_running.size() ||
      delta_theta.size() != acc.omega_running.size())
    throw ShapeError("si_accumulate: length mismatch");
  for (std::size_t i = 0; i < acc.omega_running.size(); ++i)
    acc.omega_running[i] += -grad_before_step[i] * delta_theta[i];
}

ImportanceMap si_consolidate(SiAccumulator &acc,
                             const ParameterVector &theta_end) {
  require_same_layout(theta_end, acc.theta_at_task_start, "si_consolidate");
  ImportanceMap omega{std::vector<double>(theta_end.size(), 0.0),
                      ImportanceKind::si_omega};
  for (std::size_t i = 0; i < theta_end.size(); ++i) {
    const double d = theta_end[i] - acc.theta_at_task_start[i];
    omega.values[i] = std::max(0.0, acc.omega_running[i]) / (d * d + acc.xi);
  }
  acc.omega_running.assign(theta_end.size(), 0.0);
  acc.theta_at_task_start = theta_end;
  return omega;
}

ImportanceMap mas_importance(const Mlp &model, const Matrix &features,
                             std::size_t max_samples, std::uint64_t seed) {
  if (features.rows() == 0) throw DataError("mas_importance: no samples");
  const auto rows = sample_rows(features.rows(), max_samples, seed, Stream::fisher);
  ImportanceMap omega{std::vector<double>(model.layout()->size(), 0.0),
                      ImportanceKind::mas_omega};
  for (std::size_t r : rows) {
    const ForwardTrace t = model.trace(single_row(features, r), Mode::eval);
    Matrix g(t.output.rows(), t.output.cols());
    for (std::size_t i = 0; i < g.size(); ++i)
      g.data()[i] = 2.0 * t.output.data()[i];
    const GradientVector grad = model.backward(t, g);
    for (std::size_t i = 0; i < omega.values.size(); ++i)
      omega.values[i] += std::abs(grad[i]);
  }
  for (double &v : omega.values) v /= static_cast<double>(rows.size());
  return omega;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw ConfigError("replay capacity must be > 0");
  stored_.reserve(std::min<std::size_t>(capacity_, 4096));
}

void ReplayBuffer::offer(const SceneSample &s, Rng &rng) {
  ++seen_;
  if (stored_.size() < capacity_) {
    stored_.push_back(s);
    return;
  }
  std::uniform_int_distribution<std::size_t> pick(0, seen_ - 1);
  const std::size_t j = pick(rng);
  if (j < capacity_) stored_[j] = s;
}

ReplayBuffer nr_store(ReplayBuffer buffer, const Dataset &task_samples,
                      std::uint64_t seed) {
  if (buffer.capacity() == 0) throw ConfigError("replay capacity must be > 0");
  auto rng = make_rng(seed, {key(Stream::replay_store), buffer.seen()});
  for (const auto &s : task_samples.samples) buffer.offer(s, rng);
  return buffer;
}

std::vector<std::vector<std::size_t>> nr_new_indices(std::size_t shard_size,
                                                     std::size_t batch_size,
                                                     double mix_ratio,
                                                     std::uint64_t seed,
                                                     std::uint64_t epoch) {
  if (batch_size < 2) throw DataError("mixed batches: batch size must be >= 2");
  if (!(mix_ratio >= 0.0 && mix_ratio <= 1.0))
    throw ConfigError("mix_ratio must be in [0,1]");
  const auto from_buffer = static_cast<std::size_t>(
      std::floor(mix_ratio * static_cast<double>(batch_size)));
  const std::size_t per_batch = std::max<std::size_t>(1, batch_size - from_buffer);
  const auto order = epoch_order(shard_size, seed, epoch);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t pos = 0; pos < shard_size; pos += per_batch) {
    const std::size_t end = std::min(shard_size, pos + per_batch);
    if (end - pos + from_buffer < 2) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<Batch> nr_mixed_batches(const ReplayBuffer &buffer,
                                    const Dataset &new_shard,
                                    std::size_t batch_size, double mix_ratio,
                                    std::uint64_t seed, std::uint64_t epoch) {
  if (buffer.empty()) return minibatches(new_shard, batch_size, seed, epoch);
  const auto from_buffer = static_cast<std::size_t>(
      std::floor(mix_ratio * static_cast<double>(batch_size)));
  auto rng = make_rng(seed, {key(Stream::replay_draw), epoch});
  std::uniform_int_distribution<std::size_t> pick(0, buffer.stored().size() - 1);
  std::vector<Batch> out;
  std::vector<SceneSample> rows;
  for (const auto &ix :
       nr_new_indices(new_shard.size(), batch_size, mix_ratio, seed, epoch)) {
    rows.clear();
    for (std::size_t k = 0; k < from_buffer; ++k)
      rows.push_back(buffer.stored()[pick(rng)]);
    for (std::size_t i : ix) rows.push_back(new_shard.samples[i]);
    out.push_back(make_batch(rows));
  }
  return out;
}

}  // namespace fclsim
