#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "gfn/environments.hpp"
#include "gfn/errors.hpp"
#include "gfn/losses.hpp"
#include "gfn/param.hpp"
#include "gfn/serialization.hpp"
#include "gfn/training.hpp"

namespace gfn {

/// Declarative key-value experiment file: `[section]` headers, `key = value`
/// lines, '#' comments. Unknown keys are rejected so typos fail fast.
class ConfigFile {
 public:
  static ConfigFile parse(std::istream& in) {
    ConfigFile cfg;
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::size_t hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      if (trimmed.front() == '[') {
        if (trimmed.back() != ']' || trimmed.size() < 3) {
          throw ParseError("malformed section header", line_no);
        }
        section = trimmed.substr(1, trimmed.size() - 2);
        continue;
      }
      const std::size_t eq = trimmed.find('=');
      if (eq == std::string::npos) {
        throw ParseError("expected 'key = value'", line_no);
      }
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty() || section.empty()) {
        throw ParseError("key outside a section or empty key", line_no);
      }
      if (!cfg.values_.emplace(std::make_pair(section, key), value).second) {
        throw ParseError("duplicate key '" + section + "." + key + "'", line_no);
      }
    }
    return cfg;
  }

  static ConfigFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open config '" + path + "'");
    return parse(in);
  }

  bool has(const std::string& section, const std::string& key) const {
    return values_.count({section, key}) > 0;
  }

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    auto it = values_.find({section, key});
    if (it == values_.end()) return fallback;
    consumed_.insert(it->first);
    return it->second;
  }

  std::string require_string(const std::string& section, const std::string& key) const {
    auto it = values_.find({section, key});
    if (it == values_.end()) {
      throw ParseError("missing required key '" + section + "." + key + "'");
    }
    consumed_.insert(it->first);
    return it->second;
  }

  double get_double(const std::string& section, const std::string& key,
                    double fallback) const {
    auto it = values_.find({section, key});
    if (it == values_.end()) return fallback;
    consumed_.insert(it->first);
    return detail::parse_double(it->second, 0);
  }

  std::uint64_t get_uint(const std::string& section, const std::string& key,
                         std::uint64_t fallback) const {
    auto it = values_.find({section, key});
    if (it == values_.end()) return fallback;
    consumed_.insert(it->first);
    return detail::parse_uint(it->second, 0);
  }

  bool get_bool(const std::string& section, const std::string& key,
                bool fallback) const {
    auto it = values_.find({section, key});
    if (it == values_.end()) return fallback;
    consumed_.insert(it->first);
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ParseError("expected true/false for '" + section + "." + key + "'");
  }

  std::vector<std::uint64_t> get_uint_list(const std::string& section,
                                           const std::string& key) const {
    auto it = values_.find({section, key});
    if (it == values_.end()) return {};
    consumed_.insert(it->first);
    std::istringstream ss(it->second);
    std::vector<std::uint64_t> out;
    std::string tok;
    while (ss >> tok) out.push_back(detail::parse_uint(tok, 0));
    return out;
  }

  /// Call after building everything; leftover keys are typos or wrong names.
  void reject_unconsumed() const {
    for (const auto& [key, value] : values_) {
      if (!consumed_.count(key)) {
        throw ParseError("unknown config key '" + key.first + "." + key.second + "'");
      }
    }
  }

 private:
  static std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  std::map<std::pair<std::string, std::string>, std::string> values_;
  mutable std::set<std::pair<std::string, std::string>> consumed_;
};

struct AnalysisToggles {
  bool free_energy = true;
  bool entropy = true;
  bool expected_reward = true;
  bool greedy = true;
};

/// Everything a run needs, decoded and validated from a config file.
struct Experiment {
  Environment env;
  ParamKind param_kind = ParamKind::TrajectoryBalance;
  bool backward_frozen = true;
  bool exact_init = false;
  TrainingConfig training;
  TrainingSource source = OnPolicy{};
  bool timings = false;
  AnalysisToggles analysis;
  std::string out_dir = "out";

  Params make_params() const {
    if (exact_init) {
      TrajectorySpace space(env.dag);
      RewardFn reward = env.reward;
      if (training.reward_transform) {
        RewardFn base = env.reward;
        auto t = training.reward_transform;
        reward = [base, t](StateId s) { return t(base(s)); };
      }
      return exact_params(space, reward, param_kind, backward_frozen);
    }
    return default_params(env.dag, param_kind, backward_frozen);
  }
};

namespace detail {

inline Environment environment_from_config(const ConfigFile& cfg,
                                           const std::string& config_dir) {
  const std::string kind = cfg.require_string("environment", "kind");
  auto resolve = [&config_dir](const std::string& p) {
    if (p.empty() || p.front() == '/' || config_dir.empty()) return p;
    return config_dir + "/" + p;
  };

  Environment env;
  if (kind == "hypergrid") {
    HypergridReward rw;
    rw.r0 = cfg.get_double("environment", "r0", rw.r0);
    rw.r1 = cfg.get_double("environment", "r1", rw.r1);
    rw.r2 = cfg.get_double("environment", "r2", rw.r2);
    env = make_hypergrid(
        static_cast<std::uint32_t>(cfg.get_uint("environment", "dims", 2)),
        static_cast<std::uint32_t>(cfg.get_uint("environment", "side", 8)), rw);
  } else if (kind == "set") {
    const std::uint32_t n =
        static_cast<std::uint32_t>(cfg.get_uint("environment", "universe", 3));
    const std::string reward = cfg.get_string("environment", "set_reward",
                                              "size_plus_one");
    if (reward == "size_plus_one") {
      env = make_set_env(n, [](std::uint32_t mask) {
        return 1.0 + __builtin_popcount(mask);
      });
    } else if (reward == "constant") {
      env = make_set_env(n, [](std::uint32_t) { return 1.0; });
    } else {
      throw ParseError("unknown set_reward '" + reward + "'");
    }
  } else if (kind == "assignment") {
    std::vector<std::uint32_t> domains;
    for (std::uint64_t d : cfg.get_uint_list("environment", "domains")) {
      domains.push_back(static_cast<std::uint32_t>(d));
    }
    if (domains.empty()) {
      throw ParseError("assignment environment needs 'domains'");
    }
    env = make_assignment_env(domains,
                              [](const std::vector<std::uint32_t>&) { return 1.0; });
  } else if (kind == "file") {
    env = load_dag_file(resolve(cfg.require_string("environment", "path")))
              .to_environment();
  } else if (kind == "timestamp") {
    std::ifstream in(resolve(cfg.require_string("environment", "transitions")));
    if (!in) throw ParseError("cannot open transition-system file");
    TransitionSystemFile f = read_transition_system(in);
    env = timestamp_wrap(
              f.system,
              static_cast<std::uint32_t>(cfg.get_uint("environment", "horizon", 4)),
              f.reward_fn())
              .env;
  } else {
    throw ParseError("unknown environment kind '" + kind + "'");
  }

  const double noise = cfg.get_double("environment", "reward_noise", 0.0);
  if (noise > 0.0) env = with_two_point_reward_noise(std::move(env), noise);

  const double z = env.reward_total();
  if (!(z > 0.0) || !std::isfinite(z)) {
    throw ParseError("environment's total reward must be finite and positive");
  }
  return env;
}

inline ParamKind param_kind_from(const std::string& name) {
  if (name == "edge_flow") return ParamKind::EdgeFlow;
  if (name == "forward") return ParamKind::Forward;
  if (name == "forward_backward") return ParamKind::ForwardBackward;
  if (name == "trajectory_balance") return ParamKind::TrajectoryBalance;
  throw ParseError("unknown parametrization kind '" + name + "'");
}

inline LossKind loss_kind_from(const std::string& name) {
  if (name == "fm") return LossKind::FlowMatching;
  if (name == "db") return LossKind::DetailedBalance;
  if (name == "tb") return LossKind::TrajectoryBalance;
  throw ParseError("unknown loss kind '" + name + "'");
}

inline std::vector<StateId> top_reward_states(const Environment& env,
                                              std::uint64_t k) {
  std::vector<StateId> states(env.dag->terminating_states());
  std::stable_sort(states.begin(), states.end(), [&env](StateId a, StateId b) {
    return env.reward(a) > env.reward(b);
  });
  if (states.size() > k) states.resize(k);
  return states;
}

}  // namespace detail

inline Experiment experiment_from_config(const ConfigFile& cfg,
                                         const std::string& config_dir = "") {
  Experiment ex;
  ex.env = detail::environment_from_config(cfg, config_dir);

  ex.param_kind = detail::param_kind_from(
      cfg.get_string("parametrization", "kind", "trajectory_balance"));
  const std::string backward = cfg.get_string("parametrization", "backward", "frozen");
  if (backward == "frozen") {
    ex.backward_frozen = true;
  } else if (backward == "learned") {
    ex.backward_frozen = false;
  } else {
    throw ParseError("parametrization.backward must be frozen or learned");
  }
  const std::string init = cfg.get_string("parametrization", "init", "default");
  if (init == "exact") {
    ex.exact_init = true;
  } else if (init != "default") {
    throw ParseError("parametrization.init must be default or exact");
  }

  ex.training.loss.kind = detail::loss_kind_from(cfg.get_string("loss", "kind", "tb"));
  ex.training.loss.delta = cfg.get_double("loss", "delta", 0.0);

  ex.training.steps = cfg.get_uint("training", "steps", 1000);
  ex.training.batch_size =
      static_cast<std::uint32_t>(cfg.get_uint("training", "batch_size", 16));
  ex.training.learning_rate = cfg.get_double("training", "learning_rate", 1e-2);
  const std::string opt = cfg.get_string("training", "optimizer", "adam");
  if (opt == "adam") {
    ex.training.optimizer = OptimizerKind::Adam;
  } else if (opt == "sgd") {
    ex.training.optimizer = OptimizerKind::Sgd;
  } else {
    throw ParseError("training.optimizer must be adam or sgd");
  }
  ex.training.beta1 = cfg.get_double("training", "beta1", 0.9);
  ex.training.beta2 = cfg.get_double("training", "beta2", 0.999);
  ex.training.adam_epsilon = cfg.get_double("training", "adam_epsilon", 1e-8);
  ex.training.exploration_epsilon =
      cfg.get_double("training", "exploration_epsilon", 0.0);
  ex.training.seed = cfg.get_uint("training", "seed", 0);
  ex.training.eval_every = cfg.get_uint("training", "eval_every", 100);
  ex.training.logz_lr_multiplier =
      cfg.get_double("training", "logz_lr_multiplier", 10.0);
  const double exponent = cfg.get_double("training", "reward_exponent", 1.0);
  if (exponent != 1.0) {
    ex.training.reward_transform = [exponent](double r) {
      return std::pow(r, exponent);
    };
  }
  ex.timings = cfg.get_bool("training", "timings", false);

  const std::string source = cfg.get_string("source", "kind", "on_policy");
  if (source == "on_policy") {
    ex.source = OnPolicy{};
  } else if (source == "epsilon_uniform") {
    ex.source = EpsilonUniformMix{
        cfg.get_double("source", "epsilon", ex.training.exploration_epsilon)};
  } else if (source == "backward_from_data") {
    BackwardFromData b;
    for (std::uint64_t s : cfg.get_uint_list("source", "data_states")) {
      b.states.push_back(static_cast<StateId>(s));
    }
    const std::uint64_t top_k = cfg.get_uint("source", "data_top_k", 0);
    if (top_k > 0) {
      if (!b.states.empty()) {
        throw ParseError("give either source.data_states or source.data_top_k");
      }
      b.states = detail::top_reward_states(ex.env, top_k);
    }
    if (b.states.empty()) {
      throw ParseError("backward_from_data needs data_states or data_top_k");
    }
    for (StateId s : b.states) {
      if (!ex.env.dag->is_terminating(s)) {
        throw ParseError("data state " + std::to_string(s) +
                         " is not a terminating state");
      }
    }
    b.explore_mix = cfg.get_double("source", "explore_mix", 0.0);
    b.explore_epsilon = cfg.get_double("source", "explore_epsilon", 0.1);
    ex.source = b;
  } else {
    throw ParseError("unknown source kind '" + source + "'");
  }

  ex.analysis.free_energy = cfg.get_bool("analysis", "free_energy", true);
  ex.analysis.entropy = cfg.get_bool("analysis", "entropy", true);
  ex.analysis.expected_reward = cfg.get_bool("analysis", "expected_reward", true);
  ex.analysis.greedy = cfg.get_bool("analysis", "greedy", true);

  ex.out_dir = cfg.get_string("output", "dir", "out");

  cfg.reject_unconsumed();
  return ex;
}

inline Experiment load_experiment(const std::string& path) {
  std::string dir;
  const std::size_t slash = path.find_last_of('/');
  if (slash != std::string::npos) dir = path.substr(0, slash);
  return experiment_from_config(ConfigFile::load(path), dir);
}

}  // namespace gfn
