#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gfn/errors.hpp"
#include "gfn/numeric.hpp"
#include "gfn/policy.hpp"
#include "gfn/trajectory.hpp"

namespace gfn {

constexpr double kExactTolerance = 1e-9;

/// Reward at a terminating state; unused elsewhere.
using RewardFn = std::function<double(StateId)>;

/// A non-negative measure over the enumerated complete trajectories, aligned
/// with the space's enumeration order. The source of exact ground truth.
struct TrajectoryFlow {
  std::vector<double> values;

  static TrajectoryFlow validated(const TrajectorySpace& space,
                                  std::vector<double> values) {
    if (values.size() != space.size()) {
      throw Error("trajectory flow size does not match trajectory count");
    }
    double total = 0.0;
    for (double v : values) {
      if (!(v >= 0.0)) throw Error("trajectory flow values must be >= 0");
      total += v;
    }
    if (!(total > 0.0)) throw Error("trajectory flow must have positive total");
    return TrajectoryFlow{std::move(values)};
  }
};

/// Everything the measure induces on states and edges. Conditional
/// probabilities at zero-flow states are undefined and stored as NaN;
/// forward_policy()/backward_policy() extract strict tables and report the
/// offending state if one exists.
struct FlowSummary {
  DagPtr dag;
  std::vector<double> state_flow;     // per state
  std::vector<double> edge_flow;      // per edge id
  double total_flow = 0.0;            // Z
  std::vector<double> p_forward;      // per edge id, NaN where undefined
  std::vector<double> p_backward;     // per edge id, NaN where undefined
  std::vector<double> p_terminating;  // aligned with dag->terminating_states()

  ForwardPolicy forward_policy() const {
    for (StateId s = 0; s < dag->num_states(); ++s) {
      if (s != dag->sink() && state_flow[s] == 0.0 && dag->num_children(s) > 0) {
        throw ZeroStateFlowError(s);
      }
    }
    return ForwardPolicy::from_probs(dag, p_forward);
  }
  BackwardPolicy backward_policy() const {
    for (StateId s = 0; s < dag->num_states(); ++s) {
      if (s != dag->source() && state_flow[s] == 0.0 && dag->num_parents(s) > 0) {
        throw ZeroStateFlowError(s);
      }
    }
    return BackwardPolicy::from_probs(dag, p_backward);
  }
};

/// State flows, edge flows, Z, transition probabilities and the terminating
/// distribution, all by direct summation over the enumerated trajectories.
inline FlowSummary summarize(const TrajectorySpace& space,
                             const TrajectoryFlow& flow) {
  const PointedDag& dag = space.dag();
  FlowSummary s;
  s.dag = space.dag_ptr();
  s.state_flow.assign(dag.num_states(), 0.0);
  s.edge_flow.assign(dag.num_edges(), 0.0);
  for (std::size_t i = 0; i < space.size(); ++i) {
    const Trajectory& traj = space[i];
    const double v = flow.values[i];
    for (std::size_t t = 0; t < traj.size(); ++t) {
      s.state_flow[traj[t]] += v;
      if (t + 1 < traj.size()) {
        s.edge_flow[dag.edge_index(traj[t], traj[t + 1])] += v;
      }
    }
  }
  s.total_flow = s.state_flow[dag.source()];

  const double nan = std::numeric_limits<double>::quiet_NaN();
  s.p_forward.assign(dag.num_edges(), nan);
  s.p_backward.assign(dag.num_edges(), nan);
  for (std::uint32_t e = 0; e < dag.num_edges(); ++e) {
    const Edge& ed = dag.edge(e);
    if (s.state_flow[ed.from] > 0.0) {
      s.p_forward[e] = s.edge_flow[e] / s.state_flow[ed.from];
    }
    if (s.state_flow[ed.to] > 0.0) {
      s.p_backward[e] = s.edge_flow[e] / s.state_flow[ed.to];
    }
  }
  s.p_terminating.resize(dag.terminating_states().size());
  for (StateId t : dag.terminating_states()) {
    s.p_terminating[dag.terminating_index(t)] =
        s.edge_flow[dag.edge_index(t, dag.sink())] / s.total_flow;
  }
  return s;
}

/// Z * prod P_F(s_t | s_{t-1}) along `traj`, with an explicit zero
/// short-circuit: the first zero-flow edge out of a positive-flow state
/// yields a zero factor before any undefined (NaN) conditional is reached.
inline double forward_factorized_value(const FlowSummary& s, const Trajectory& traj) {
  double v = s.total_flow;
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
    const double p = s.p_forward[s.dag->edge_index(traj[i], traj[i + 1])];
    if (p == 0.0) return 0.0;
    v *= p;
  }
  return v;
}

inline double backward_factorized_value(const FlowSummary& s, const Trajectory& traj) {
  double v = s.total_flow;
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
    const double p = s.p_backward[s.dag->edge_index(traj[i], traj[i + 1])];
    if (p == 0.0) return 0.0;
    v *= p;
  }
  return v;
}

struct MarkovCheck {
  bool markovian = true;
  // One violating trajectory with both values, when not Markovian.
  std::optional<Trajectory> witness;
  double flow_value = 0.0;
  double factorized_value = 0.0;
};

/// A flow is Markovian iff every complete trajectory's flow equals its
/// forward-factorized value Z * prod P_F.
inline MarkovCheck is_markovian(const TrajectorySpace& space,
                                const TrajectoryFlow& flow,
                                double tol = kExactTolerance) {
  const FlowSummary s = summarize(space, flow);
  MarkovCheck r;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const double expected = forward_factorized_value(s, space[i]);
    if (!close(flow.values[i], expected, tol)) {
      r.markovian = false;
      r.witness = space[i];
      r.flow_value = flow.values[i];
      r.factorized_value = expected;
      return r;
    }
  }
  return r;
}

/// The unique Markovian flow sharing the input's edge flows, via the product
/// formula F(tau) = prod edge flows / prod interior state flows. Trajectories
/// through a zero-flow edge get value zero; positive-flow numerators force
/// positive interior denominators, so the ratio is always well formed.
inline TrajectoryFlow markovian_projection(const TrajectorySpace& space,
                                           const TrajectoryFlow& flow) {
  const FlowSummary s = summarize(space, flow);
  const PointedDag& dag = space.dag();
  std::vector<double> out(space.size(), 0.0);
  for (std::size_t i = 0; i < space.size(); ++i) {
    const Trajectory& traj = space[i];
    double num = 1.0;
    for (std::size_t t = 0; t + 1 < traj.size(); ++t) {
      num *= s.edge_flow[dag.edge_index(traj[t], traj[t + 1])];
      if (num == 0.0) break;
    }
    if (num == 0.0) continue;
    double den = 1.0;
    for (std::size_t t = 1; t + 1 < traj.size(); ++t) den *= s.state_flow[traj[t]];
    out[i] = num / den;
  }
  return TrajectoryFlow{std::move(out)};
}

/// The Markovian flow with total Z and the given forward policy.
inline TrajectoryFlow flow_from_forward(const TrajectorySpace& space, double z,
                                        const ForwardPolicy& p_forward) {
  if (!(z > 0.0)) throw Error("total flow must be positive");
  if (&p_forward.dag() != &space.dag() && !(p_forward.dag() == space.dag())) {
    throw PolicyError("policy DAG does not match trajectory space");
  }
  std::vector<double> v(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) {
    v[i] = z * trajectory_probability_extension(p_forward, space[i]);
  }
  return TrajectoryFlow{std::move(v)};
}

/// The Markovian flow with total Z and the given backward policy.
inline TrajectoryFlow flow_from_backward(const TrajectorySpace& space, double z,
                                         const BackwardPolicy& p_backward) {
  if (!(z > 0.0)) throw Error("total flow must be positive");
  if (&p_backward.dag() != &space.dag() && !(p_backward.dag() == space.dag())) {
    throw PolicyError("policy DAG does not match trajectory space");
  }
  std::vector<double> v(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) {
    v[i] = z * trajectory_probability_extension(p_backward, space[i]);
  }
  return TrajectoryFlow{std::move(v)};
}

/// The Markovian flow determined by terminating flows plus a backward policy
/// on the non-terminating edges: Z is the sum of the terminating flows and
/// the backward policy extends to terminating edges with F(s->sink)/Z.
/// `terminating_flows` aligns with dag.terminating_states();
/// `backward_interior` with dag.nonterminal_edges().
inline TrajectoryFlow flow_from_terminating_and_backward(
    const TrajectorySpace& space, std::span<const double> terminating_flows,
    std::span<const double> backward_interior) {
  const PointedDag& dag = space.dag();
  if (terminating_flows.size() != dag.terminating_states().size() ||
      backward_interior.size() != dag.nonterminal_edges().size()) {
    throw PolicyError("table sizes do not match the DAG");
  }
  double z = 0.0;
  for (double f : terminating_flows) {
    if (!(f >= 0.0)) throw PolicyError("terminating flows must be >= 0");
    z += f;
  }
  if (!(z > 0.0)) throw PolicyError("terminating flows must not all be zero");

  std::vector<double> probs(dag.num_edges(), 0.0);
  for (std::uint32_t e = 0; e < dag.num_edges(); ++e) {
    if (dag.is_terminating_edge(e)) {
      probs[e] = terminating_flows[dag.terminating_index(dag.edge(e).from)] / z;
    } else {
      probs[e] = backward_interior[dag.nonterminal_index(e)];
    }
  }
  BackwardPolicy pb = BackwardPolicy::from_probs(space.dag_ptr(), std::move(probs));
  return flow_from_backward(space, z, pb);
}

struct ConditionCheck {
  bool ok = true;
  double worst_violation = 0.0;  // |lhs-rhs| / max(1,|lhs|,|rhs|)
  StateId worst_state = 0;       // flow-matching report
  std::uint32_t worst_edge = kNoEdge;  // detailed-balance report
  std::string detail;
};

/// Flow-matching conditions: at every non-source state the incoming edge
/// flows sum to the state flow, and at every non-sink state the outgoing
/// ones do too.
inline ConditionCheck check_flow_matching(const PointedDag& dag,
                                          std::span<const double> state_flow,
                                          std::span<const double> edge_flow,
                                          double tol = kExactTolerance) {
  ConditionCheck r;
  auto consider = [&](StateId s, double lhs, double rhs, const char* side) {
    const double v = std::abs(lhs - rhs) / std::max({1.0, std::abs(lhs), std::abs(rhs)});
    if (v > r.worst_violation) {
      r.worst_violation = v;
      r.worst_state = s;
      r.detail = std::string(side) + " flow mismatch at state " + std::to_string(s);
    }
    if (v > tol) r.ok = false;
  };
  for (StateId s = 0; s < dag.num_states(); ++s) {
    if (s != dag.source()) {
      double in = 0.0;
      for (std::uint32_t e : dag.in_edges(s)) in += edge_flow[e];
      consider(s, state_flow[s], in, "incoming");
    }
    if (s != dag.sink()) {
      double out = 0.0;
      for (std::uint32_t e : dag.out_edges(s)) out += edge_flow[e];
      consider(s, state_flow[s], out, "outgoing");
    }
  }
  return r;
}

/// Detailed-balance conditions F(s)P_F(s'|s) = F(s')P_B(s|s') on interior
/// edges; on terminating edges F(s)P_F(sink|s) is compared to R(s).
/// NaN (undefined) conditionals are skipped: zero-flow states carry no
/// constraint.
inline ConditionCheck check_detailed_balance(const PointedDag& dag,
                                             std::span<const double> state_flow,
                                             std::span<const double> p_forward,
                                             std::span<const double> p_backward,
                                             const RewardFn& reward,
                                             double tol = kExactTolerance) {
  ConditionCheck r;
  for (std::uint32_t e = 0; e < dag.num_edges(); ++e) {
    const Edge& ed = dag.edge(e);
    if (std::isnan(p_forward[e])) continue;
    const double lhs = state_flow[ed.from] * p_forward[e];
    double rhs;
    if (ed.to == dag.sink()) {
      rhs = reward(ed.from);
    } else {
      if (std::isnan(p_backward[e])) continue;
      rhs = state_flow[ed.to] * p_backward[e];
    }
    const double v = std::abs(lhs - rhs) / std::max({1.0, std::abs(lhs), std::abs(rhs)});
    if (v > r.worst_violation) {
      r.worst_violation = v;
      r.worst_edge = e;
      r.detail = "detailed balance mismatch on edge " + std::to_string(ed.from) +
                 " -> " + std::to_string(ed.to);
    }
    if (v > tol) r.ok = false;
  }
  return r;
}

}  // namespace gfn
