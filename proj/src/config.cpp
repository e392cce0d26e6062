#include "fclsim/config.hpp"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

namespace fclsim {

namespace {

using Path = std::string;

std::string join(const Path &parent, const std::string &key) {
  return parent.empty() ? key : parent + "." + key;
}

// Rejects keys outside `allowed` under the mapping at `path`.
void check_keys(const YAML::Node &node, const Path &path,
                std::initializer_list<const char *> allowed) {
  if (!node.IsMap())
    throw ConfigError("expected a mapping", path.empty() ? "<root>" : path);
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto &kv : node) {
    const auto k = kv.first.as<std::string>();
    if (!ok.count(k)) throw ConfigError("unknown key", join(path, k));
  }
}

template <class T>
T read_scalar(const YAML::Node &n, const Path &path, const char *type) {
  if (!n.IsScalar()) throw ConfigError(std::string("expected ") + type, path);
  try {
    return n.as<T>();
  } catch (const YAML::Exception &) {
    throw ConfigError(std::string("expected ") + type + ", got '" +
                          n.Scalar() + "'",
                      path);
  }
}

template <class T>
void read(const YAML::Node &parent, const Path &path, const char *key, T &out,
          const char *type) {
  const auto n = parent[key];
  if (n) out = read_scalar<T>(n, join(path, key), type);
}

void read_int(const YAML::Node &parent, const Path &path, const char *key,
              int &out) {
  read(parent, path, key, out, "integer");
}

void read_size(const YAML::Node &parent, const Path &path, const char *key,
               std::size_t &out) {
  long long v = static_cast<long long>(out);
  read(parent, path, key, v, "integer");
  if (v < 0) throw ConfigError("must be >= 0", join(path, key));
  out = static_cast<std::size_t>(v);
}

void read_double(const YAML::Node &parent, const Path &path, const char *key,
                 double &out) {
  read(parent, path, key, out, "number");
}

void read_bool(const YAML::Node &parent, const Path &path, const char *key,
               bool &out) {
  read(parent, path, key, out, "boolean");
}

template <class Fn>
auto parse_enum(const YAML::Node &n, const Path &path, Fn &&parse) {
  const auto s = read_scalar<std::string>(n, path, "string");
  try {
    return parse(s);
  } catch (const ConfigError &e) {
    throw ConfigError(e.what(), path);
  }
}

template <class T, class Fn>
std::vector<T> read_list(const YAML::Node &n, const Path &path, Fn &&item) {
  if (!n.IsSequence() || n.size() == 0)
    throw ConfigError("expected a nonempty list", path);
  std::vector<T> out;
  for (std::size_t i = 0; i < n.size(); ++i)
    out.push_back(item(n[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

struct Sweep {
  std::vector<StrategyKind> strategies;
  std::vector<int> clients;
  std::vector<bool> augmentation;
  std::vector<ClMethod> cl_methods;
};

struct ParsedBase {
  ExperimentConfig config;
  std::optional<double> lambda;
  bool has_clients = false;
  bool has_rounds = false;
  bool has_strategy = false;
};

ParsedBase parse_base(const YAML::Node &root) {
  ParsedBase b;
  ExperimentConfig &c = b.config;
  const auto sweep = root["sweep"];
  const bool has_strategy_sweep = sweep && sweep.IsMap() && sweep["strategies"];
  long long seed = 0;
  read(root, "", "seed", seed, "integer");
  c.seed = static_cast<std::uint64_t>(seed);

  if (const auto d = root["data"]) {
    check_keys(d, "data",
               {"source", "path", "samples", "noise", "task_shift",
                "split_ratio"});
    if (d["source"])
      c.data.kind = parse_enum(d["source"], "data.source", [](const std::string &s) {
        if (s == "synthetic") return DataKind::synthetic;
        if (s == "csv") return DataKind::csv;
        throw ConfigError("expected synthetic|csv");
      });
    std::string p;
    read(d, "data", "path", p, "string");
    c.data.path = p;
    read_size(d, "data", "samples", c.data.synthetic_samples);
    read_double(d, "data", "noise", c.data.synthetic_noise);
    read_double(d, "data", "task_shift", c.data.synthetic_task_shift);
    read_double(d, "data", "split_ratio", c.data.split_ratio);
    if (c.data.kind == DataKind::csv && c.data.path.empty())
      throw ConfigError("required when source is csv", "data.path");
    if (!(c.data.split_ratio > 0.0 && c.data.split_ratio < 1.0))
      throw ConfigError("must be in (0,1)", "data.split_ratio");
  }

  if (const auto m = root["model"]) {
    check_keys(m, "model", {"activation", "bn_momentum", "bn_epsilon"});
    if (m["activation"])
      c.model.activation =
          parse_enum(m["activation"], "model.activation", [](const std::string &s) {
            if (s == "identity") return Activation::identity;
            if (s == "relu") return Activation::relu;
            throw ConfigError("expected identity|relu");
          });
    read_double(m, "model", "bn_momentum", c.model.bn_momentum);
    read_double(m, "model", "bn_epsilon", c.model.bn_epsilon);
  }

  if (const auto t = root["training"]) {
    check_keys(t, "training",
               {"clients", "rounds", "local_epochs", "batch_size", "optimizer",
                "learning_rate", "reset_optimizer_each_round",
                "reset_optimizer_at_task", "workers", "augmentation",
                "augment_sigma"});
    b.has_clients = static_cast<bool>(t["clients"]);
    b.has_rounds = static_cast<bool>(t["rounds"]);
    read_int(t, "training", "clients", c.n_clients);
    read_int(t, "training", "rounds", c.n_rounds);
    read_int(t, "training", "local_epochs", c.local_epochs);
    read_size(t, "training", "batch_size", c.batch_size);
    if (t["optimizer"])
      c.client_optimizer.kind =
          parse_enum(t["optimizer"], "training.optimizer", parse_optimizer_kind);
    read_double(t, "training", "learning_rate", c.client_optimizer.learning_rate);
    read_bool(t, "training", "reset_optimizer_each_round",
              c.reset_optimizer_each_round);
    read_bool(t, "training", "reset_optimizer_at_task", c.reset_optimizer_at_task);
    read_int(t, "training", "workers", c.workers);
    read_bool(t, "training", "augmentation", c.augmentation);
    read_double(t, "training", "augment_sigma", c.augment_sigma);
  }

  if (const auto s = root["strategy"]) {
    b.has_strategy = true;
    if (s.IsScalar()) {
      c.strategy.kind = parse_enum(s, "strategy", parse_strategy_kind);
    } else {
      check_keys(s, "strategy",
                 {"kind", "mu", "server_optimizer", "server_learning_rate",
                  "distill_weight", "weighted_average"});
      if (s["kind"])
        c.strategy.kind = parse_enum(s["kind"], "strategy.kind", parse_strategy_kind);
      else if (!has_strategy_sweep)
        throw ConfigError("missing required key", "strategy.kind");
      read_double(s, "strategy", "mu", c.strategy.mu);
      if (s["server_optimizer"])
        c.strategy.server_optimizer.kind = parse_enum(
            s["server_optimizer"], "strategy.server_optimizer", parse_optimizer_kind);
      read_double(s, "strategy", "server_learning_rate",
                  c.strategy.server_optimizer.learning_rate);
      read_double(s, "strategy", "distill_weight", c.strategy.distill_weight);
      read_bool(s, "strategy", "weighted_average", c.strategy.weighted_average);
    }
  }

  if (const auto k = root["continual"]) {
    check_keys(k, "continual",
               {"method", "sequential_tasks", "lambda", "gamma_online", "si_xi",
                "fisher_samples", "replay_capacity", "mix_ratio"});
    if (k["method"])
      c.cl_method = parse_enum(k["method"], "continual.method", parse_cl_method);
    read_bool(k, "continual", "sequential_tasks", c.sequential_tasks);
    if (k["lambda"]) {
      double l = 0.0;
      read_double(k, "continual", "lambda", l);
      b.lambda = l;
    }
    read_double(k, "continual", "gamma_online", c.penalty.gamma_online);
    read_double(k, "continual", "si_xi", c.penalty.si_xi);
    read_size(k, "continual", "fisher_samples", c.penalty.fisher_samples);
    read_size(k, "continual", "replay_capacity", c.penalty.replay_capacity);
    read_double(k, "continual", "mix_ratio", c.penalty.mix_ratio);
  }
  return b;
}

Sweep parse_sweep(const YAML::Node &s) {
  check_keys(s, "sweep", {"strategies", "clients", "augmentation", "cl_methods"});
  Sweep w;
  if (s["strategies"])
    w.strategies = read_list<StrategyKind>(
        s["strategies"], "sweep.strategies", [](const YAML::Node &n, const Path &p) {
          return parse_enum(n, p, parse_strategy_kind);
        });
  if (s["clients"])
    w.clients = read_list<int>(s["clients"], "sweep.clients",
                               [](const YAML::Node &n, const Path &p) {
                                 return read_scalar<int>(n, p, "integer");
                               });
  if (s["augmentation"])
    w.augmentation = read_list<bool>(s["augmentation"], "sweep.augmentation",
                                     [](const YAML::Node &n, const Path &p) {
                                       return read_scalar<bool>(n, p, "boolean");
                                     });
  if (s["cl_methods"])
    w.cl_methods = read_list<ClMethod>(
        s["cl_methods"], "sweep.cl_methods", [](const YAML::Node &n, const Path &p) {
          return parse_enum(n, p, parse_cl_method);
        });
  return w;
}

void finalize(ExperimentConfig &c, const std::optional<double> &lambda) {
  c.penalty.lambda = lambda ? *lambda : default_lambda(c.cl_method);
}

// Maps ExperimentConfig::validate() keys to their dotted config paths.
std::string key_path(const std::string &where) {
  static const std::pair<const char *, const char *> table[] = {
      {"clients", "training.clients"},
      {"rounds", "training.rounds"},
      {"local_epochs", "training.local_epochs"},
      {"batch_size", "training.batch_size"},
      {"workers", "training.workers"},
      {"augment_sigma", "training.augment_sigma"},
      {"mu", "strategy.mu"},
      {"distill_weight", "strategy.distill_weight"},
      {"strategy", "strategy.kind"},
      {"lambda", "continual.lambda"},
      {"gamma_online", "continual.gamma_online"},
      {"si_xi", "continual.si_xi"},
      {"mix_ratio", "continual.mix_ratio"},
      {"replay_capacity", "continual.replay_capacity"},
  };
  for (const auto &[k, v] : table)
    if (where == k) return v;
  return where;
}

void validate_at_path(const ExperimentConfig &c) {
  try {
    c.validate();
    Optimizer check_client(c.client_optimizer);
    Optimizer check_server(c.strategy.server_optimizer);
  } catch (const ConfigError &e) {
    std::string msg = e.what();
    if (!e.where().empty()) msg = msg.substr(e.where().size() + 2);
    throw ConfigError(msg, key_path(e.where()));
  }
}

}  // namespace

BenchmarkSuite parse_config_text(const std::string &text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception &e) {
    throw ConfigError(std::string("malformed YAML: ") + e.what(), "<root>");
  }
  check_keys(root, "",
             {"name", "seed", "output", "data", "model", "training", "strategy",
              "continual", "sweep"});
  BenchmarkSuite suite;
  read(root, "", "name", suite.name, "string");
  std::string out = suite.output_dir.string();
  read(root, "", "output", out, "string");
  suite.output_dir = out;

  ParsedBase base = parse_base(root);
  Sweep sweep;
  if (root["sweep"]) sweep = parse_sweep(root["sweep"]);

  if (!base.has_clients && sweep.clients.empty())
    throw ConfigError("missing required key", "training.clients");
  if (!base.has_rounds) throw ConfigError("missing required key", "training.rounds");
  if (!base.has_strategy && sweep.strategies.empty() && sweep.cl_methods.empty())
    throw ConfigError("missing required key", "strategy");

  const auto &b = base.config;
  auto strategies = sweep.strategies.empty()
                        ? std::vector<StrategyKind>{b.strategy.kind}
                        : sweep.strategies;
  auto clients = sweep.clients.empty() ? std::vector<int>{b.n_clients} : sweep.clients;
  auto augs = sweep.augmentation.empty() ? std::vector<bool>{b.augmentation}
                                         : sweep.augmentation;
  auto methods = sweep.cl_methods.empty() ? std::vector<ClMethod>{b.cl_method}
                                          : sweep.cl_methods;
  // Continual methods only pair with fedavg; other combinations of the grid
  // are skipped.
  for (auto method : methods)
    for (auto strategy : strategies) {
      if (method != ClMethod::none && strategy != StrategyKind::fedavg) continue;
      for (int n : clients)
        for (bool aug : augs) {
          ExperimentConfig c = b;
          c.strategy.kind = strategy;
          c.cl_method = method;
          c.n_clients = n;
          c.augmentation = aug;
          finalize(c, base.lambda);
          validate_at_path(c);
          suite.experiments.push_back(std::move(c));
        }
    }
  if (suite.experiments.empty())
    throw ConfigError("sweep produced no valid experiments", "sweep");
  return suite;
}

BenchmarkSuite parse_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file", path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string canonical_config(const ExperimentConfig &c) {
  std::string s;
  auto line = [&](std::string text) { s += text + "\n"; };
  line(fmt::format("seed: {}", c.seed));
  line("data:");
  line(fmt::format("  source: {}", c.data.kind == DataKind::csv ? "csv" : "synthetic"));
  if (c.data.kind == DataKind::csv) line(fmt::format("  path: \"{}\"", c.data.path.string()));
  line(fmt::format("  samples: {}", c.data.synthetic_samples));
  line(fmt::format("  noise: {}", c.data.synthetic_noise));
  line(fmt::format("  task_shift: {}", c.data.synthetic_task_shift));
  line(fmt::format("  split_ratio: {}", c.data.split_ratio));
  line("model:");
  line(fmt::format("  activation: {}",
                   c.model.activation == Activation::relu ? "relu" : "identity"));
  line(fmt::format("  bn_momentum: {}", c.model.bn_momentum));
  line(fmt::format("  bn_epsilon: {}", c.model.bn_epsilon));
  line("training:");
  line(fmt::format("  clients: {}", c.n_clients));
  line(fmt::format("  rounds: {}", c.n_rounds));
  line(fmt::format("  local_epochs: {}", c.local_epochs));
  line(fmt::format("  batch_size: {}", c.batch_size));
  line(fmt::format("  optimizer: {}", to_string(c.client_optimizer.kind)));
  line(fmt::format("  learning_rate: {}", c.client_optimizer.learning_rate));
  line(fmt::format("  reset_optimizer_each_round: {}", c.reset_optimizer_each_round));
  line(fmt::format("  reset_optimizer_at_task: {}", c.reset_optimizer_at_task));
  line(fmt::format("  augmentation: {}", c.augmentation));
  line(fmt::format("  augment_sigma: {}", c.augment_sigma));
  line("strategy:");
  line(fmt::format("  kind: {}", to_string(c.strategy.kind)));
  line(fmt::format("  mu: {}", c.strategy.mu));
  line(fmt::format("  server_optimizer: {}", to_string(c.strategy.server_optimizer.kind)));
  line(fmt::format("  server_learning_rate: {}", c.strategy.server_optimizer.learning_rate));
  line(fmt::format("  distill_weight: {}", c.strategy.distill_weight));
  line(fmt::format("  weighted_average: {}", c.strategy.weighted_average));
  line("continual:");
  line(fmt::format("  method: {}", to_string(c.cl_method)));
  line(fmt::format("  sequential_tasks: {}", c.sequential_tasks));
  line(fmt::format("  lambda: {}", c.penalty.lambda));
  line(fmt::format("  gamma_online: {}", c.penalty.gamma_online));
  line(fmt::format("  si_xi: {}", c.penalty.si_xi));
  line(fmt::format("  fisher_samples: {}", c.penalty.fisher_samples));
  line(fmt::format("  replay_capacity: {}", c.penalty.replay_capacity));
  line(fmt::format("  mix_ratio: {}", c.penalty.mix_ratio));
  return s;
}

std::string run_id(const ExperimentConfig &config) {
  // FNV-1a, 64 bit.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_config(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

std::string method_label(const ExperimentConfig &c) {
  std::string label = display_name(c.strategy.kind);
  if (c.cl_method != ClMethod::none)
    label += std::string("_") + display_name(c.cl_method);
  else if (c.sequential_tasks)
    label += "_Seq";
  if (c.augmentation) label += "_Aug";
  return label;
}

}  // namespace fclsim
