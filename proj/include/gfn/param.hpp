#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gfn/errors.hpp"
#include "gfn/flow.hpp"
#include "gfn/numeric.hpp"
#include "gfn/policy.hpp"
#include "gfn/random.hpp"
#include "gfn/trajectory.hpp"

namespace gfn {

class RewardUnavailable : public Error {
 public:
  RewardUnavailable() : Error("a reward function is required for edge-flow policies") {}
};

/// Learnable objects are tabular and live entirely in log space; rewards span
/// orders of magnitude and the losses are log-ratio based.
///
/// Flat coordinate layout (used by the optimizer and the gradient audit):
///   EdgeFlowParams:          [log_edge_flow...]
///   ForwardParams:           [log_state_flow..., forward_logits...]
///   ForwardBackwardParams:   [log_state_flow..., forward_logits...,
///                             backward_logits... (absent when frozen)]
///   TrajectoryBalanceParams: [log_z, forward_logits...,
///                             backward_logits... (absent when frozen)]

/// Log flows for the non-terminating edges; terminating flows are pinned to
/// the reward, F(s->sink) := R(s).
struct EdgeFlowParams {
  DagPtr dag;
  std::vector<double> log_edge_flow;  // per nonterminal edge index

  std::size_t parameter_count() const { return log_edge_flow.size(); }
  double get(std::size_t i) const { return log_edge_flow[i]; }
  void set(std::size_t i, double v) { log_edge_flow[i] = v; }
};

/// Log state flows plus forward logits normalized per state over children.
struct ForwardParams {
  DagPtr dag;
  std::vector<double> log_state_flow;  // per state except the sink
  std::vector<double> forward_logits;  // per edge id

  std::size_t parameter_count() const {
    return log_state_flow.size() + forward_logits.size();
  }
  double get(std::size_t i) const {
    return i < log_state_flow.size() ? log_state_flow[i]
                                     : forward_logits[i - log_state_flow.size()];
  }
  void set(std::size_t i, double v) {
    if (i < log_state_flow.size()) {
      log_state_flow[i] = v;
    } else {
      forward_logits[i - log_state_flow.size()] = v;
    }
  }
};

/// ForwardParams plus backward logits normalized per state over parents.
/// With backward_frozen the backward policy is fixed uniform-over-parents and
/// carries no trainable coordinates.
struct ForwardBackwardParams {
  DagPtr dag;
  std::vector<double> log_state_flow;
  std::vector<double> forward_logits;
  std::vector<double> backward_logits;  // per nonterminal edge index
  bool backward_frozen = true;

  std::size_t parameter_count() const {
    return log_state_flow.size() + forward_logits.size() +
           (backward_frozen ? 0 : backward_logits.size());
  }
  double get(std::size_t i) const {
    if (i < log_state_flow.size()) return log_state_flow[i];
    i -= log_state_flow.size();
    if (i < forward_logits.size()) return forward_logits[i];
    return backward_logits[i - forward_logits.size()];
  }
  void set(std::size_t i, double v) {
    if (i < log_state_flow.size()) {
      log_state_flow[i] = v;
      return;
    }
    i -= log_state_flow.size();
    if (i < forward_logits.size()) {
      forward_logits[i] = v;
    } else {
      backward_logits[i - forward_logits.size()] = v;
    }
  }
};

/// log Z plus both policies. Z = 0 is out of the representable domain.
struct TrajectoryBalanceParams {
  DagPtr dag;
  double log_z = 0.0;
  std::vector<double> forward_logits;   // per edge id
  std::vector<double> backward_logits;  // per nonterminal edge index
  bool backward_frozen = true;

  std::size_t parameter_count() const {
    return 1 + forward_logits.size() + (backward_frozen ? 0 : backward_logits.size());
  }
  double get(std::size_t i) const {
    if (i == 0) return log_z;
    i -= 1;
    if (i < forward_logits.size()) return forward_logits[i];
    return backward_logits[i - forward_logits.size()];
  }
  void set(std::size_t i, double v) {
    if (i == 0) {
      log_z = v;
      return;
    }
    i -= 1;
    if (i < forward_logits.size()) {
      forward_logits[i] = v;
    } else {
      backward_logits[i - forward_logits.size()] = v;
    }
  }
};

enum class ParamKind { EdgeFlow, Forward, ForwardBackward, TrajectoryBalance };

inline const char* to_string(ParamKind k) {
  switch (k) {
    case ParamKind::EdgeFlow: return "edge_flow";
    case ParamKind::Forward: return "forward";
    case ParamKind::ForwardBackward: return "forward_backward";
    case ParamKind::TrajectoryBalance: return "trajectory_balance";
  }
  return "?";
}

using Params = std::variant<EdgeFlowParams, ForwardParams, ForwardBackwardParams,
                            TrajectoryBalanceParams>;

inline ParamKind kind_of(const Params& p) {
  return static_cast<ParamKind>(p.index());
}
inline const PointedDag& dag_of(const Params& p) {
  return *std::visit([](const auto& x) { return x.dag.get(); }, p);
}
inline DagPtr dag_ptr_of(const Params& p) {
  return std::visit([](const auto& x) { return x.dag; }, p);
}
inline std::size_t parameter_count(const Params& p) {
  return std::visit([](const auto& x) { return x.parameter_count(); }, p);
}
inline double get_parameter(const Params& p, std::size_t i) {
  return std::visit([i](const auto& x) { return x.get(i); }, p);
}
inline void set_parameter(Params& p, std::size_t i, double v) {
  std::visit([i, v](auto& x) { x.set(i, v); }, p);
}

/// All-zero initialization: uniform policies, unit state flows, Z = 1.
inline Params default_params(DagPtr dag, ParamKind kind, bool backward_frozen = true) {
  const std::size_t ne = dag->num_edges();
  const std::size_t nnt = dag->nonterminal_edges().size();
  const std::size_t ns = dag->num_states() - 1;
  switch (kind) {
    case ParamKind::EdgeFlow:
      return EdgeFlowParams{dag, std::vector<double>(nnt, 0.0)};
    case ParamKind::Forward:
      return ForwardParams{dag, std::vector<double>(ns, 0.0),
                           std::vector<double>(ne, 0.0)};
    case ParamKind::ForwardBackward:
      return ForwardBackwardParams{dag, std::vector<double>(ns, 0.0),
                                   std::vector<double>(ne, 0.0),
                                   std::vector<double>(nnt, 0.0), backward_frozen};
    case ParamKind::TrajectoryBalance:
      return TrajectoryBalanceParams{dag, 0.0, std::vector<double>(ne, 0.0),
                                     std::vector<double>(nnt, 0.0), backward_frozen};
  }
  throw Error("unknown parametrization kind");
}

namespace detail {
/// Forward probabilities at one state from per-edge logits.
inline void state_softmax(const PointedDag& dag, StateId s,
                          std::span<const double> logits_per_edge,
                          std::span<double> probs_per_edge) {
  auto edges = dag.out_edges(s);
  double m = -HUGE_VAL;
  for (std::uint32_t e : edges) m = std::max(m, logits_per_edge[e]);
  double total = 0.0;
  for (std::uint32_t e : edges) total += std::exp(logits_per_edge[e] - m);
  for (std::uint32_t e : edges) {
    probs_per_edge[e] = std::exp(logits_per_edge[e] - m) / total;
  }
}
}  // namespace detail

/// The forward policy a parameter configuration induces. For edge-flow
/// parameters the terminating transition takes probability
/// R(s) / (sum of learned outgoing flows + R(s)).
inline ForwardPolicy induced_forward_policy(const EdgeFlowParams& p,
                                            const RewardFn& reward) {
  if (!reward) throw RewardUnavailable();
  const PointedDag& dag = *p.dag;
  std::vector<double> probs(dag.num_edges(), 0.0);
  for (StateId s = 0; s < dag.num_states(); ++s) {
    if (s == dag.sink()) continue;
    auto edges = dag.out_edges(s);
    double total = 0.0;
    for (std::uint32_t e : edges) {
      const double w = dag.is_terminating_edge(e)
                           ? reward(s)
                           : std::exp(p.log_edge_flow[dag.nonterminal_index(e)]);
      probs[e] = w;
      total += w;
    }
    if (total > 0.0) {
      for (std::uint32_t e : edges) probs[e] /= total;
    } else {
      // Zero reward at a state whose only child is the sink (or underflow):
      // fall back to the uniform choice.
      for (std::uint32_t e : edges) probs[e] = 1.0 / static_cast<double>(edges.size());
    }
  }
  return ForwardPolicy::from_probs(p.dag, std::move(probs));
}

inline ForwardPolicy induced_forward_policy_from_logits(
    DagPtr dag, std::span<const double> logits) {
  std::vector<double> probs(dag->num_edges(), 0.0);
  for (StateId s = 0; s < dag->num_states(); ++s) {
    if (s == dag->sink()) continue;
    detail::state_softmax(*dag, s, logits, probs);
  }
  return ForwardPolicy::from_probs(std::move(dag), std::move(probs));
}

inline ForwardPolicy induced_forward_policy(const ForwardParams& p, const RewardFn& = {}) {
  return induced_forward_policy_from_logits(p.dag, p.forward_logits);
}
inline ForwardPolicy induced_forward_policy(const ForwardBackwardParams& p,
                                            const RewardFn& = {}) {
  return induced_forward_policy_from_logits(p.dag, p.forward_logits);
}
inline ForwardPolicy induced_forward_policy(const TrajectoryBalanceParams& p,
                                            const RewardFn& = {}) {
  return induced_forward_policy_from_logits(p.dag, p.forward_logits);
}
inline ForwardPolicy induced_forward_policy(const Params& p, const RewardFn& reward = {}) {
  return std::visit(
      [&](const auto& x) { return induced_forward_policy(x, reward); }, p);
}

/// Backward probabilities over the non-terminating edges, indexed by
/// nonterminal edge position (frozen => uniform over parents).
inline std::vector<double> backward_interior_probs(const PointedDag& dag,
                                                   std::span<const double> logits,
                                                   bool frozen) {
  if (frozen) return uniform_backward_interior(dag);
  std::vector<double> probs(dag.nonterminal_edges().size(), 0.0);
  for (StateId s = 0; s < dag.num_states(); ++s) {
    if (s == dag.source() || s == dag.sink()) continue;
    auto edges = dag.in_edges(s);  // all non-terminating: their target is s
    double m = -HUGE_VAL;
    for (std::uint32_t e : edges) m = std::max(m, logits[dag.nonterminal_index(e)]);
    double total = 0.0;
    for (std::uint32_t e : edges) {
      total += std::exp(logits[dag.nonterminal_index(e)] - m);
    }
    for (std::uint32_t e : edges) {
      probs[dag.nonterminal_index(e)] =
          std::exp(logits[dag.nonterminal_index(e)] - m) / total;
    }
  }
  return probs;
}

inline std::vector<double> backward_interior_probs(const ForwardBackwardParams& p) {
  return backward_interior_probs(*p.dag, p.backward_logits, p.backward_frozen);
}
inline std::vector<double> backward_interior_probs(const TrajectoryBalanceParams& p) {
  return backward_interior_probs(*p.dag, p.backward_logits, p.backward_frozen);
}

/// One forward rollout from the source; acyclicity plus pointedness
/// guarantee termination at the sink.
inline Trajectory sample_trajectory(const ForwardPolicy& policy, Rng& rng) {
  const PointedDag& dag = policy.dag();
  Trajectory traj{dag.source()};
  std::vector<double> weights;
  while (traj.back() != dag.sink()) {
    auto edges = dag.out_edges(traj.back());
    weights.resize(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) weights[i] = policy.prob(edges[i]);
    traj.push_back(dag.edge(edges[rng.categorical(weights)]).to);
  }
  return traj;
}

inline Trajectory sample_trajectory(const Params& p, const RewardFn& reward, Rng& rng) {
  return sample_trajectory(induced_forward_policy(p, reward), rng);
}

/// Exact terminating distribution of a forward policy by the
/// reach-probability recursion over a topological order; no enumeration.
inline std::vector<double> terminating_distribution_exact(const ForwardPolicy& policy) {
  const PointedDag& dag = policy.dag();
  std::vector<double> reach(dag.num_states(), 0.0);
  reach[dag.source()] = 1.0;
  for (StateId s : dag.topo_order()) {
    if (reach[s] == 0.0 || s == dag.sink()) continue;
    for (std::uint32_t e : dag.out_edges(s)) {
      reach[dag.edge(e).to] += reach[s] * policy.prob(e);
    }
  }
  std::vector<double> p_t(dag.terminating_states().size(), 0.0);
  for (StateId t : dag.terminating_states()) {
    p_t[dag.terminating_index(t)] =
        reach[t] * policy.prob(dag.edge_index(t, dag.sink()));
  }
  return p_t;
}

inline std::vector<double> terminating_distribution_exact(const Params& p,
                                                          const RewardFn& reward = {}) {
  return terminating_distribution_exact(induced_forward_policy(p, reward));
}

/// The total-flow equivalent the parameters encode: what summarize() reports
/// as Z when the parameters are the image of an actual flow.
inline double z_equivalent(const EdgeFlowParams& p, const RewardFn& reward) {
  if (!reward) throw RewardUnavailable();
  const PointedDag& dag = *p.dag;
  double z = 0.0;
  for (std::uint32_t e : dag.out_edges(dag.source())) {
    z += dag.is_terminating_edge(e)
             ? reward(dag.source())
             : std::exp(p.log_edge_flow[dag.nonterminal_index(e)]);
  }
  return z;
}
inline double z_equivalent(const ForwardParams& p, const RewardFn& = {}) {
  return std::exp(p.log_state_flow[p.dag->source()]);
}
inline double z_equivalent(const ForwardBackwardParams& p, const RewardFn& = {}) {
  return std::exp(p.log_state_flow[p.dag->source()]);
}
inline double z_equivalent(const TrajectoryBalanceParams& p, const RewardFn& = {}) {
  return std::exp(p.log_z);
}
inline double z_equivalent(const Params& p, const RewardFn& reward = {}) {
  return std::visit([&](const auto& x) { return z_equivalent(x, reward); }, p);
}

/// The Markovian flow a configuration encodes: its Z-equivalent spread along
/// the induced forward policy. Inverts the parametrization maps on their
/// image; on arbitrary parameters it is the induced trajectory measure scaled
/// by the Z-equivalent.
inline TrajectoryFlow to_markovian_flow(const TrajectorySpace& space, const Params& p,
                                        const RewardFn& reward = {}) {
  return flow_from_forward(space, z_equivalent(p, reward),
                           induced_forward_policy(p, reward));
}

namespace detail {
inline double log_checked(double v, const char* what) {
  if (!(v > 0.0)) {
    throw Error(std::string(what) +
                " must be positive to take logs; got " + std::to_string(v));
  }
  return std::log(v);
}
}  // namespace detail

/// The parametrization maps: exact flow summary -> parameter tables. Requires
/// full support (positive state and edge flows), since tables store logs.
inline EdgeFlowParams edge_flow_params_from(const FlowSummary& s) {
  EdgeFlowParams p{s.dag, std::vector<double>(s.dag->nonterminal_edges().size())};
  for (std::uint32_t id : s.dag->nonterminal_edges()) {
    p.log_edge_flow[s.dag->nonterminal_index(id)] =
        detail::log_checked(s.edge_flow[id], "edge flow");
  }
  return p;
}

inline ForwardParams forward_params_from(const FlowSummary& s) {
  const PointedDag& dag = *s.dag;
  ForwardParams p{s.dag, std::vector<double>(dag.num_states() - 1),
                  std::vector<double>(dag.num_edges())};
  for (StateId st = 0; st + 1 < dag.num_states(); ++st) {
    p.log_state_flow[st] = detail::log_checked(s.state_flow[st], "state flow");
  }
  for (std::uint32_t e = 0; e < dag.num_edges(); ++e) {
    p.forward_logits[e] = detail::log_checked(s.p_forward[e], "forward probability");
  }
  return p;
}

inline ForwardBackwardParams forward_backward_params_from(const FlowSummary& s,
                                                          bool backward_frozen = false) {
  ForwardParams base = forward_params_from(s);
  const PointedDag& dag = *s.dag;
  std::vector<double> backward(dag.nonterminal_edges().size());
  for (std::uint32_t id : dag.nonterminal_edges()) {
    backward[dag.nonterminal_index(id)] =
        detail::log_checked(s.p_backward[id], "backward probability");
  }
  return ForwardBackwardParams{s.dag, std::move(base.log_state_flow),
                               std::move(base.forward_logits), std::move(backward),
                               backward_frozen};
}

inline TrajectoryBalanceParams trajectory_balance_params_from(
    const FlowSummary& s, bool backward_frozen = false) {
  const PointedDag& dag = *s.dag;
  std::vector<double> fwd(dag.num_edges());
  for (std::uint32_t e = 0; e < dag.num_edges(); ++e) {
    fwd[e] = detail::log_checked(s.p_forward[e], "forward probability");
  }
  std::vector<double> bwd(dag.nonterminal_edges().size());
  for (std::uint32_t id : dag.nonterminal_edges()) {
    bwd[dag.nonterminal_index(id)] =
        detail::log_checked(s.p_backward[id], "backward probability");
  }
  return TrajectoryBalanceParams{s.dag, detail::log_checked(s.total_flow, "total flow"),
                                 std::move(fwd), std::move(bwd), backward_frozen};
}

inline Params params_from_summary(const FlowSummary& s, ParamKind kind,
                                  bool backward_frozen = false) {
  switch (kind) {
    case ParamKind::EdgeFlow: return edge_flow_params_from(s);
    case ParamKind::Forward: return forward_params_from(s);
    case ParamKind::ForwardBackward:
      return forward_backward_params_from(s, backward_frozen);
    case ParamKind::TrajectoryBalance:
      return trajectory_balance_params_from(s, backward_frozen);
  }
  throw Error("unknown parametrization kind");
}

/// Summary of the canonical exact flow for a reward: terminating flows R with
/// the uniform-over-parents backward policy.
inline FlowSummary exact_flow_summary(const TrajectorySpace& space,
                                      const RewardFn& reward) {
  const PointedDag& dag = space.dag();
  std::vector<double> terminating(dag.terminating_states().size());
  for (StateId t : dag.terminating_states()) {
    terminating[dag.terminating_index(t)] = reward(t);
  }
  TrajectoryFlow flow = flow_from_terminating_and_backward(
      space, terminating, uniform_backward_interior(dag));
  return summarize(space, flow);
}

/// H(exact flow): zero-loss parameters for the matching loss kind.
inline Params exact_params(const TrajectorySpace& space, const RewardFn& reward,
                           ParamKind kind, bool backward_frozen = true) {
  return params_from_summary(exact_flow_summary(space, reward), kind, backward_frozen);
}

}  // namespace gfn
