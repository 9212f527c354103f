#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gfn/dag.hpp"
#include "gfn/errors.hpp"
#include "gfn/flow.hpp"
#include "gfn/random.hpp"

namespace gfn {

/// A reward-bearing DAG. `reward` is the deterministic value; when a
/// stochastic sampler is attached, the deterministic value is its mean.
struct Environment {
  std::string name;
  DagPtr dag;
  RewardFn reward;
  std::function<double(StateId, Rng&)> reward_sampler;  // optional
  std::function<std::string(StateId)> label;            // human-readable decoder

  double sample_reward(StateId s, Rng& rng) const {
    return reward_sampler ? reward_sampler(s, rng) : reward(s);
  }

  /// Z = sum of terminal rewards; must be finite and positive.
  double reward_total() const {
    double z = 0.0;
    for (StateId t : dag->terminating_states()) z += reward(t);
    return z;
  }
};

constexpr std::uint32_t kMaxEnvironmentStates = 1u << 20;

// ---------------------------------------------------------------------------
// Hypergrid: lattice points of {0..side-1}^dims, actions increment one
// coordinate, every lattice point terminates. The default reward carves broad
// corner modes with sharper sub-modes inside them.

struct HypergridReward {
  double r0 = 1e-3;  // base value everywhere
  double r1 = 0.5;   // corner-band bonus
  double r2 = 2.0;   // inner-band bonus
};

inline Environment make_hypergrid(std::uint32_t dims, std::uint32_t side,
                                  HypergridReward rw = {}) {
  if (dims < 1 || side < 2) {
    throw EnvironmentError(EnvironmentError::Kind::BadParameter,
                           "hypergrid needs dims >= 1 and side >= 2");
  }
  double states_d = 1.0;
  for (std::uint32_t i = 0; i < dims; ++i) states_d *= side;
  if (states_d + 1 > kMaxEnvironmentStates) {
    throw EnvironmentError(EnvironmentError::Kind::TooLarge,
                           "hypergrid state space too large for tabular use");
  }
  const std::uint32_t lattice = static_cast<std::uint32_t>(states_d);
  const StateId sink = lattice;

  auto decode = [dims, side](StateId s) {
    std::vector<std::uint32_t> x(dims);
    for (std::uint32_t i = 0; i < dims; ++i) {
      x[i] = s % side;
      s /= side;
    }
    return x;
  };

  std::vector<Edge> edges;
  for (StateId s = 0; s < lattice; ++s) {
    std::vector<std::uint32_t> x = decode(s);
    std::uint32_t stride = 1;
    for (std::uint32_t i = 0; i < dims; ++i) {
      if (x[i] + 1 < side) edges.push_back({s, s + stride});
      stride *= side;
    }
    edges.push_back({s, sink});
  }

  auto reward_table = std::make_shared<std::vector<double>>(lattice);
  for (StateId s = 0; s < lattice; ++s) {
    std::vector<std::uint32_t> x = decode(s);
    double band1 = 1.0, band2 = 1.0;
    for (std::uint32_t i = 0; i < dims; ++i) {
      const double u = std::abs(x[i] / static_cast<double>(side - 1) - 0.5);
      if (!(u > 0.25 && u <= 0.5)) band1 = 0.0;
      if (!(u > 0.3 && u < 0.4)) band2 = 0.0;
    }
    (*reward_table)[s] = rw.r0 + rw.r1 * band1 + rw.r2 * band2;
  }

  Environment env;
  env.name = "hypergrid";
  env.dag = build_dag(lattice + 1, std::move(edges));
  env.reward = [reward_table](StateId s) { return (*reward_table)[s]; };
  env.label = [decode, sink](StateId s) {
    if (s == sink) return std::string("sink");
    std::string out = "(";
    for (std::uint32_t v : decode(s)) {
      if (out.size() > 1) out += ",";
      out += std::to_string(v);
    }
    return out + ")";
  };
  return env;
}

// ---------------------------------------------------------------------------
// Set builder: states are all subsets of a universe (bitmask = state id),
// actions add one element, every subset terminates.

inline Environment make_set_env(std::uint32_t universe_size,
                                std::function<double(std::uint32_t)> subset_reward) {
  if (universe_size > 20) {
    throw EnvironmentError(EnvironmentError::Kind::TooLarge,
                           "set environment limited to universes of 20 elements");
  }
  const std::uint32_t subsets = 1u << universe_size;
  const StateId sink = subsets;

  std::vector<Edge> edges;
  for (std::uint32_t mask = 0; mask < subsets; ++mask) {
    for (std::uint32_t a = 0; a < universe_size; ++a) {
      if (!(mask & (1u << a))) edges.push_back({mask, mask | (1u << a)});
    }
    edges.push_back({mask, sink});
  }

  Environment env;
  env.name = "set";
  env.dag = build_dag(subsets + 1, std::move(edges));
  env.reward = [subset_reward = std::move(subset_reward)](StateId s) {
    return subset_reward(s);
  };
  env.label = [universe_size, sink](StateId s) {
    if (s == sink) return std::string("sink");
    std::string out = "{";
    for (std::uint32_t a = 0; a < universe_size; ++a) {
      if (s & (1u << a)) {
        if (out.size() > 1) out += ",";
        out += std::to_string(a);
      }
    }
    return out + "}";
  };
  return env;
}

// ---------------------------------------------------------------------------
// Variable assignment: states are partial assignments (at most one value per
// variable); actions assign one free variable; only full assignments
// terminate. Drawing a full assignment then marginalizing supersets of a
// partial one recovers marginal probabilities of the assigned variables.

inline Environment make_assignment_env(
    std::vector<std::uint32_t> domain_sizes,
    std::function<double(const std::vector<std::uint32_t>&)> assignment_reward) {
  const std::size_t n = domain_sizes.size();
  double states_d = 1.0;
  for (std::uint32_t d : domain_sizes) {
    if (d == 0) {
      throw EnvironmentError(EnvironmentError::Kind::BadParameter,
                             "variable domains must be non-empty");
    }
    states_d *= d + 1;
  }
  if (n == 0 || states_d + 1 > kMaxEnvironmentStates) {
    throw EnvironmentError(EnvironmentError::Kind::TooLarge,
                           "assignment state space unusable for tabular work");
  }
  const std::uint32_t partials = static_cast<std::uint32_t>(states_d);
  const StateId sink = partials;

  // Mixed-radix code; digit 0 means unassigned, digit v+1 means value v.
  auto decode = [domain_sizes, n](StateId s) {
    std::vector<std::uint32_t> digits(n);
    for (std::size_t i = 0; i < n; ++i) {
      digits[i] = s % (domain_sizes[i] + 1);
      s /= domain_sizes[i] + 1;
    }
    return digits;
  };

  std::vector<Edge> edges;
  for (StateId s = 0; s < partials; ++s) {
    std::vector<std::uint32_t> digits = decode(s);
    bool full = true;
    std::uint32_t stride = 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (digits[i] == 0) {
        full = false;
        for (std::uint32_t v = 0; v < domain_sizes[i]; ++v) {
          edges.push_back({s, s + stride * (v + 1)});
        }
      }
      stride *= domain_sizes[i] + 1;
    }
    if (full) edges.push_back({s, sink});
  }

  Environment env;
  env.name = "assignment";
  env.dag = build_dag(partials + 1, std::move(edges));
  env.reward = [decode, assignment_reward = std::move(assignment_reward)](StateId s) {
    std::vector<std::uint32_t> digits = decode(s);
    for (std::uint32_t& d : digits) d -= 1;  // full assignments only
    return assignment_reward(digits);
  };
  env.label = [decode, sink](StateId s) {
    if (s == sink) return std::string("sink");
    std::string out = "[";
    for (std::uint32_t d : decode(s)) {
      if (out.size() > 1) out += " ";
      out += d == 0 ? "_" : std::to_string(d - 1);
    }
    return out + "]";
  };
  return env;
}

/// Dense code of a partial assignment (value or `unset` per variable) in the
/// environment built by make_assignment_env.
constexpr std::uint32_t kUnassigned = UINT32_MAX;
inline StateId assignment_state(std::span<const std::uint32_t> domain_sizes,
                                std::span<const std::uint32_t> values) {
  StateId s = 0;
  std::uint32_t stride = 1;
  for (std::size_t i = 0; i < domain_sizes.size(); ++i) {
    if (values[i] != kUnassigned) s += stride * (values[i] + 1);
    stride *= domain_sizes[i] + 1;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Time-stamp wrapper: renders an arbitrary (possibly cyclic) transition
// system acyclic by augmenting states with their step index.

struct TransitionSystem {
  std::uint32_t num_states = 0;
  std::vector<Edge> transitions;  // cycles allowed
  StateId source = 0;
  std::vector<StateId> accepting;
};

struct TimestampedEnvironment {
  Environment env;
  std::vector<StateId> original;     // wrapped id -> original state
  std::vector<std::uint32_t> step;   // wrapped id -> time stamp
};

/// States become (s, t) for t <= horizon, edges go strictly forward in time,
/// and accepting states at any stamp connect to the sink. States that cannot
/// reach an accepting state within the horizon are pruned so the result is
/// pointed. `reward` is evaluated on original accepting states.
inline TimestampedEnvironment timestamp_wrap(const TransitionSystem& sys,
                                             std::uint32_t horizon,
                                             RewardFn reward) {
  if (sys.source >= sys.num_states) {
    throw EnvironmentError(EnvironmentError::Kind::BadParameter,
                           "transition-system source out of range");
  }
  std::vector<char> accepting(sys.num_states, 0);
  for (StateId a : sys.accepting) accepting[a] = 1;

  std::vector<std::vector<StateId>> children(sys.num_states);
  for (const Edge& e : sys.transitions) {
    if (e.from >= sys.num_states || e.to >= sys.num_states) {
      throw EnvironmentError(EnvironmentError::Kind::BadParameter,
                             "transition endpoint out of range");
    }
    children[e.from].push_back(e.to);
  }

  // Forward reachability by layer.
  std::vector<std::vector<char>> reach(horizon + 1,
                                       std::vector<char>(sys.num_states, 0));
  reach[0][sys.source] = 1;
  for (std::uint32_t t = 0; t < horizon; ++t) {
    for (StateId s = 0; s < sys.num_states; ++s) {
      if (!reach[t][s]) continue;
      for (StateId c : children[s]) reach[t + 1][c] = 1;
    }
  }
  // Keep layered states that still reach an accepting one within the horizon.
  std::vector<std::vector<char>> keep(horizon + 1,
                                      std::vector<char>(sys.num_states, 0));
  for (std::uint32_t t = 0; t <= horizon; ++t) {
    for (StateId s = 0; s < sys.num_states; ++s) {
      if (reach[t][s] && accepting[s]) keep[t][s] = 1;
    }
  }
  for (std::uint32_t t = horizon; t-- > 0;) {
    for (StateId s = 0; s < sys.num_states; ++s) {
      if (!reach[t][s] || keep[t][s]) continue;
      for (StateId c : children[s]) {
        if (keep[t + 1][c]) {
          keep[t][s] = 1;
          break;
        }
      }
    }
  }
  if (!keep[0][sys.source]) {
    throw EnvironmentError(EnvironmentError::Kind::NoAcceptingReachable,
                           "no accepting state reachable within the horizon");
  }

  // Dense ids ordered by (t, original id); the source is (source, 0) = 0.
  std::map<std::pair<std::uint32_t, StateId>, StateId> id_of;
  TimestampedEnvironment wrapped;
  for (std::uint32_t t = 0; t <= horizon; ++t) {
    for (StateId s = 0; s < sys.num_states; ++s) {
      if (!keep[t][s]) continue;
      id_of[{t, s}] = static_cast<StateId>(wrapped.original.size());
      wrapped.original.push_back(s);
      wrapped.step.push_back(t);
    }
  }
  const StateId sink = static_cast<StateId>(wrapped.original.size());

  std::vector<Edge> edges;
  for (const auto& [key, id] : id_of) {
    const auto [t, s] = key;
    if (t < horizon) {
      for (StateId c : children[s]) {
        auto it = id_of.find({t + 1, c});
        if (it != id_of.end()) edges.push_back({id, it->second});
      }
    }
    if (accepting[s]) edges.push_back({id, sink});
  }

  Environment& env = wrapped.env;
  env.name = "timestamp";
  env.dag = build_dag(sink + 1, std::move(edges));
  auto original = std::make_shared<std::vector<StateId>>(wrapped.original);
  env.reward = [original, reward = std::move(reward)](StateId s) {
    return reward((*original)[s]);
  };
  auto steps = std::make_shared<std::vector<std::uint32_t>>(wrapped.step);
  env.label = [original, steps, sink](StateId s) {
    if (s == sink) return std::string("sink");
    return std::to_string((*original)[s]) + "@" + std::to_string((*steps)[s]);
  };
  return wrapped;
}

/// Wraps an environment's deterministic reward with symmetric two-point
/// noise: R(s) * (1 +- spread) with equal probability, so the mean stays the
/// deterministic value.
inline Environment with_two_point_reward_noise(Environment env, double spread) {
  RewardFn mean = env.reward;
  env.reward_sampler = [mean, spread](StateId s, Rng& rng) {
    return mean(s) * (rng.u01() < 0.5 ? 1.0 - spread : 1.0 + spread);
  };
  return env;
}

}  // namespace gfn
