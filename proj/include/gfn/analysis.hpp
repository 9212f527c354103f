#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gfn/environments.hpp"
#include "gfn/errors.hpp"
#include "gfn/flow.hpp"

namespace gfn {

/// R(s)/Z over the terminating states, aligned with
/// dag->terminating_states(): the distribution a perfectly trained sampler
/// terminates with.
inline std::vector<double> brute_force_target(const Environment& env) {
  const PointedDag& dag = *env.dag;
  std::vector<double> p(dag.terminating_states().size());
  double z = 0.0;
  for (StateId t : dag.terminating_states()) {
    p[dag.terminating_index(t)] = env.reward(t);
    z += env.reward(t);
  }
  if (!(z > 0.0)) {
    throw AnalysisError(AnalysisError::Kind::ZeroMarginal,
                        "total reward must be positive");
  }
  for (double& v : p) v /= z;
  return p;
}

/// Per-state marginals M(s) = sum of R over terminating descendants of s
/// (including s itself), and their negated logs. M(s) equals the initial
/// flow of the flow network re-anchored at s, so it plays the role of a
/// state-local partition function; M(source) = Z.
///
/// Descendant sums are NOT a child-sum recursion (children share
/// descendants, which would double count); instead a reverse topological
/// sweep propagates descendant-terminal bitsets and sums rewards over them.
struct FreeEnergyTable {
  std::vector<double> marginal;     // M(s)
  std::vector<double> free_energy;  // -log M(s); +inf where the marginal is 0
};

inline FreeEnergyTable free_energy_table(const PointedDag& dag,
                                         const RewardFn& reward) {
  const std::size_t k = dag.terminating_states().size();
  const std::size_t words = (k + 63) / 64;
  std::vector<std::uint64_t> bits(static_cast<std::size_t>(dag.num_states()) * words, 0);
  auto row = [&](StateId s) {
    return std::span<std::uint64_t>(bits.data() + static_cast<std::size_t>(s) * words,
                                    words);
  };
  const auto& topo = dag.topo_order();
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    const StateId s = *it;
    auto mine = row(s);
    if (dag.is_terminating(s)) {
      const std::uint32_t i = dag.terminating_index(s);
      mine[i / 64] |= std::uint64_t{1} << (i % 64);
    }
    for (std::uint32_t e : dag.out_edges(s)) {
      if (dag.edge(e).to == dag.sink()) continue;
      auto child = row(dag.edge(e).to);
      for (std::size_t w = 0; w < words; ++w) mine[w] |= child[w];
    }
  }

  std::vector<double> term_reward(k);
  for (StateId t : dag.terminating_states()) {
    term_reward[dag.terminating_index(t)] = reward(t);
  }

  FreeEnergyTable table;
  table.marginal.assign(dag.num_states(), 0.0);
  table.free_energy.assign(dag.num_states(), HUGE_VAL);
  for (StateId s = 0; s < dag.num_states(); ++s) {
    if (s == dag.sink()) continue;
    double m = 0.0;
    auto mine = row(s);
    for (std::size_t w = 0; w < words; ++w) {
      std::uint64_t word = mine[w];
      while (word) {
        const int b = __builtin_ctzll(word);
        m += term_reward[w * 64 + b];
        word &= word - 1;
      }
    }
    table.marginal[s] = m;
    table.free_energy[s] = -std::log(m);
  }
  return table;
}

inline FreeEnergyTable free_energy_table(const Environment& env) {
  return free_energy_table(*env.dag, env.reward);
}

/// Terminating states reachable from `anchor` (including anchor itself).
inline std::vector<char> descendant_mask(const PointedDag& dag, StateId anchor) {
  std::vector<char> reach(dag.num_states(), 0);
  reach[anchor] = 1;
  for (StateId s : dag.topo_order()) {
    if (!reach[s]) continue;
    for (std::uint32_t e : dag.out_edges(s)) reach[dag.edge(e).to] = 1;
  }
  return reach;
}

/// P_T(s' | s' >= anchor): proportional to R on terminating descendants of
/// the anchor, zero elsewhere. Aligned with dag->terminating_states().
inline std::vector<double> conditional_terminating_distribution(const Environment& env,
                                                                StateId anchor) {
  const PointedDag& dag = *env.dag;
  if (anchor >= dag.num_states() || anchor == dag.sink()) {
    throw AnalysisError(AnalysisError::Kind::BadCondition,
                        "anchor must be a non-sink state");
  }
  std::vector<char> reach = descendant_mask(dag, anchor);
  std::vector<double> p(dag.terminating_states().size(), 0.0);
  double m = 0.0;
  for (StateId t : dag.terminating_states()) {
    if (!reach[t]) continue;
    p[dag.terminating_index(t)] = env.reward(t);
    m += env.reward(t);
  }
  if (!(m > 0.0)) {
    throw AnalysisError(AnalysisError::Kind::ZeroMarginal,
                        "no reward mass reachable from state " +
                            std::to_string(anchor));
  }
  for (double& v : p) v /= m;
  return p;
}

/// Probability that a terminating draw lies weakly above `state` in the DAG
/// order: M(state)/Z. On a set environment this is the chance of drawing any
/// superset of the given subset.
inline double superset_marginal(const Environment& env, StateId state) {
  if (state >= env.dag->num_states() || state == env.dag->sink()) {
    throw AnalysisError(AnalysisError::Kind::BadCondition,
                        "state must be a non-sink state");
  }
  FreeEnergyTable t = free_energy_table(env);
  const double z = t.marginal[env.dag->source()];
  if (!(z > 0.0)) {
    throw AnalysisError(AnalysisError::Kind::ZeroMarginal,
                        "total reward must be positive");
  }
  return t.marginal[state] / z;
}

namespace detail {
/// H of the distribution proportional to R over the terminating descendants
/// of `anchor`, through the two-marginal identity
/// H = M'(anchor)/M(anchor) + log M(anchor) with R' = -R log R.
/// Requires R in (0,1) on the support so R' stays positive; zeros are
/// allowed when `allow_zero` (they carry no mass).
inline double entropy_from_marginals(const PointedDag& dag, const RewardFn& reward,
                                     StateId anchor, bool allow_zero) {
  for (StateId t : dag.terminating_states()) {
    const double r = reward(t);
    const bool ok = allow_zero ? (r >= 0.0 && r < 1.0) : (r > 0.0 && r < 1.0);
    if (!ok) {
      throw AnalysisError(
          AnalysisError::Kind::RewardOutOfRange,
          "the entropy identity needs rewards in (0,1); rescale the reward "
          "(state " + std::to_string(t) + " has R = " + std::to_string(r) + ")");
    }
  }
  RewardFn entropic = [reward](StateId s) {
    const double r = reward(s);
    return r > 0.0 ? -r * std::log(r) : 0.0;
  };
  FreeEnergyTable m = free_energy_table(dag, reward);
  FreeEnergyTable mp = free_energy_table(dag, entropic);
  if (!(m.marginal[anchor] > 0.0)) {
    throw AnalysisError(AnalysisError::Kind::ZeroMarginal,
                        "no reward mass reachable from the anchor");
  }
  return mp.marginal[anchor] / m.marginal[anchor] + std::log(m.marginal[anchor]);
}
}  // namespace detail

/// Entropy of P_T = R/Z via the entropic-reward marginal at the source.
inline double entropy_estimate(const Environment& env) {
  return detail::entropy_from_marginals(*env.dag, env.reward, env.dag->source(),
                                        /*allow_zero=*/false);
}

/// Entropy of the anchor-conditional terminating distribution.
inline double conditional_entropy(const Environment& env, StateId anchor) {
  if (anchor >= env.dag->num_states() || anchor == env.dag->sink()) {
    throw AnalysisError(AnalysisError::Kind::BadCondition,
                        "anchor must be a non-sink state");
  }
  return detail::entropy_from_marginals(*env.dag, env.reward, anchor,
                                        /*allow_zero=*/false);
}

/// One conditioning value: its probability weight and the conditional reward
/// over terminating states (aligned with dag->terminating_states()).
/// Conditional rewards must lie in [0,1); zero excludes a state from that
/// condition's support.
struct RewardCondition {
  double weight = 0.0;
  std::vector<double> reward;
};

/// MI(S;X) = H[S] - E_X[H[S|X]] for a finite weighted family of reward
/// conditions. H[S] is evaluated on the weight-mixture of the normalized
/// conditional distributions, which is exactly the marginal law of a
/// terminating draw from the joint (X, S).
inline double mutual_information(const Environment& env,
                                 std::span<const RewardCondition> conditions) {
  const PointedDag& dag = *env.dag;
  const std::size_t k = dag.terminating_states().size();
  if (conditions.empty()) {
    throw AnalysisError(AnalysisError::Kind::BadCondition,
                        "need at least one condition");
  }
  double total_weight = 0.0;
  for (const RewardCondition& c : conditions) {
    if (c.reward.size() != k || !(c.weight >= 0.0)) {
      throw AnalysisError(AnalysisError::Kind::BadCondition,
                          "condition table sizes or weights are invalid");
    }
    total_weight += c.weight;
  }
  if (!close(total_weight, 1.0, 1e-9)) {
    throw AnalysisError(AnalysisError::Kind::BadCondition,
                        "condition weights must sum to one");
  }

  auto reward_of = [&dag](const std::vector<double>& table) {
    return [&dag, &table](StateId s) { return table[dag.terminating_index(s)]; };
  };

  std::vector<double> mixture(k, 0.0);
  double expected_conditional_entropy = 0.0;
  for (const RewardCondition& c : conditions) {
    double zx = 0.0;
    for (double r : c.reward) zx += r;
    if (!(zx > 0.0)) {
      throw AnalysisError(AnalysisError::Kind::ZeroMarginal,
                          "a condition has no reward mass");
    }
    for (std::size_t i = 0; i < k; ++i) {
      mixture[i] += c.weight * c.reward[i] / zx;
    }
    expected_conditional_entropy +=
        c.weight * detail::entropy_from_marginals(dag, reward_of(c.reward),
                                                  dag.source(), /*allow_zero=*/true);
  }
  const double marginal_entropy = detail::entropy_from_marginals(
      dag, reward_of(mixture), dag.source(), /*allow_zero=*/true);
  return marginal_entropy - expected_conditional_entropy;
}

/// Expected terminal reward after visiting `anchor`, under P_T: the ratio of
/// the R^2 marginal to the R marginal. A second exact flow matching R^2
/// provides the numerator.
inline double expected_reward(const Environment& env, StateId anchor) {
  const PointedDag& dag = *env.dag;
  if (anchor >= dag.num_states() || anchor == dag.sink()) {
    throw AnalysisError(AnalysisError::Kind::BadCondition,
                        "anchor must be a non-sink state");
  }
  RewardFn squared = [r = env.reward](StateId s) {
    const double v = r(s);
    return v * v;
  };
  FreeEnergyTable m = free_energy_table(dag, env.reward);
  FreeEnergyTable m2 = free_energy_table(dag, squared);
  if (!(m.marginal[anchor] > 0.0)) {
    throw AnalysisError(AnalysisError::Kind::ZeroMarginal,
                        "no reward mass reachable from the anchor");
  }
  return m2.marginal[anchor] / m.marginal[anchor];
}

/// V(s) for every non-sink state (the sink entry is unused and zero).
inline std::vector<double> expected_reward_table(const Environment& env) {
  const PointedDag& dag = *env.dag;
  RewardFn squared = [r = env.reward](StateId s) {
    const double v = r(s);
    return v * v;
  };
  FreeEnergyTable m = free_energy_table(dag, env.reward);
  FreeEnergyTable m2 = free_energy_table(dag, squared);
  std::vector<double> v(dag.num_states(), 0.0);
  for (StateId s = 0; s < dag.num_states(); ++s) {
    if (s == dag.sink() || !(m.marginal[s] > 0.0)) continue;
    v[s] = m2.marginal[s] / m.marginal[s];
  }
  return v;
}

/// Deterministic reward-maximizing policy: at each state pick the child with
/// the best value, where a child c != sink is worth V(c) and exiting (child =
/// sink) is worth R(s) itself. Ties resolve to the lowest child index.
/// Returns the chosen child per state (the sink maps to itself).
inline std::vector<StateId> greedy_policy(const Environment& env) {
  const PointedDag& dag = *env.dag;
  const std::vector<double> value = expected_reward_table(env);
  std::vector<StateId> choice(dag.num_states(), dag.sink());
  for (StateId s = 0; s < dag.num_states(); ++s) {
    if (s == dag.sink()) continue;
    StateId best = kNoEdge;
    double best_value = -HUGE_VAL;
    for (std::uint32_t e : dag.out_edges(s)) {  // children ascend; sink last
      const StateId c = dag.edge(e).to;
      const double v = c == dag.sink() ? env.reward(s) : value[c];
      if (v > best_value) {
        best_value = v;
        best = c;
      }
    }
    choice[s] = best;
  }
  return choice;
}

/// Follow the greedy policy from the source; returns the terminating state
/// and its reward.
inline std::pair<StateId, double> greedy_rollout(const Environment& env) {
  const PointedDag& dag = *env.dag;
  const std::vector<StateId> choice = greedy_policy(env);
  StateId s = dag.source();
  while (choice[s] != dag.sink()) s = choice[s];
  return {s, env.reward(s)};
}

}  // namespace gfn
