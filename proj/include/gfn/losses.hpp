#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gfn/errors.hpp"
#include "gfn/numeric.hpp"
#include "gfn/param.hpp"

namespace gfn {

enum class LossKind { FlowMatching, DetailedBalance, TrajectoryBalance };
enum class LossGranularity { State, Edge, Trajectory };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::FlowMatching: return "fm";
    case LossKind::DetailedBalance: return "db";
    case LossKind::TrajectoryBalance: return "tb";
  }
  return "?";
}

/// Which objective to train, with its delta offset. The decomposition
/// granularity is fixed by the kind: FM is state-decomposable, DB
/// edge-decomposable, TB trajectory-decomposable.
struct LossSpec {
  LossKind kind = LossKind::TrajectoryBalance;
  double delta = 0.0;  // softens small-flow mismatches in FM and DB; unused by TB

  LossGranularity granularity() const {
    switch (kind) {
      case LossKind::FlowMatching: return LossGranularity::State;
      case LossKind::DetailedBalance: return LossGranularity::Edge;
      case LossKind::TrajectoryBalance: return LossGranularity::Trajectory;
    }
    return LossGranularity::Trajectory;
  }

  ParamKind required_params() const {
    switch (kind) {
      case LossKind::FlowMatching: return ParamKind::EdgeFlow;
      case LossKind::DetailedBalance: return ParamKind::ForwardBackward;
      case LossKind::TrajectoryBalance: return ParamKind::TrajectoryBalance;
    }
    return ParamKind::TrajectoryBalance;
  }
};

inline void require_compatible(const Params& params, const LossSpec& spec) {
  if (kind_of(params) != spec.required_params()) {
    throw LossError(LossError::Kind::IncompatibleParamsLoss,
                    std::string("loss '") + to_string(spec.kind) +
                        "' requires parametrization '" +
                        to_string(spec.required_params()) + "', got '" +
                        to_string(kind_of(params)) + "'");
  }
}

/// Policy probabilities precomputed from one parameter snapshot, so per-unit
/// loss and gradient evaluations stay O(degree) inside training loops.
struct PolicyTables {
  std::vector<double> pf;      // per edge id
  std::vector<double> log_pf;  // per edge id
  std::vector<double> pb;      // per nonterminal edge index
  std::vector<double> log_pb;
};

namespace detail {
inline void fill_forward_tables(const PointedDag& dag, std::span<const double> logits,
                                PolicyTables& t) {
  t.pf.assign(dag.num_edges(), 0.0);
  t.log_pf.assign(dag.num_edges(), 0.0);
  for (StateId s = 0; s < dag.num_states(); ++s) {
    if (s == dag.sink()) continue;
    auto edges = dag.out_edges(s);
    double m = -HUGE_VAL;
    for (std::uint32_t e : edges) m = std::max(m, logits[e]);
    double total = 0.0;
    for (std::uint32_t e : edges) total += std::exp(logits[e] - m);
    const double log_total = std::log(total);
    for (std::uint32_t e : edges) {
      t.log_pf[e] = logits[e] - m - log_total;
      t.pf[e] = std::exp(t.log_pf[e]);
    }
  }
}

inline void fill_backward_tables(const PointedDag& dag, std::span<const double> logits,
                                 bool frozen, PolicyTables& t) {
  t.pb = backward_interior_probs(dag, logits, frozen);
  t.log_pb.resize(t.pb.size());
  for (std::size_t i = 0; i < t.pb.size(); ++i) t.log_pb[i] = std::log(t.pb[i]);
}

inline double squared_log_ratio(double num, double den, double delta) {
  // With delta = 0 and both sides zero the constraint is vacuous; a one-sided
  // zero makes the residual genuinely infinite.
  if (delta == 0.0 && num == 0.0 && den == 0.0) return 0.0;
  const double u = std::log(delta + num) - std::log(delta + den);
  return u * u;
}

/// Incoming and outgoing flow totals at a state under edge-flow parameters,
/// with the terminating flow pinned to R(s).
struct FlowBalance {
  double in = 0.0;
  double out = 0.0;
};

inline FlowBalance flow_balance_at(const EdgeFlowParams& p, const RewardFn& reward,
                                   StateId s) {
  const PointedDag& dag = *p.dag;
  FlowBalance b;
  for (std::uint32_t e : dag.in_edges(s)) {
    b.in += std::exp(p.log_edge_flow[dag.nonterminal_index(e)]);
  }
  for (std::uint32_t e : dag.out_edges(s)) {
    b.out += dag.is_terminating_edge(e)
                 ? reward(s)
                 : std::exp(p.log_edge_flow[dag.nonterminal_index(e)]);
  }
  return b;
}
}  // namespace detail

inline PolicyTables make_policy_tables(const ForwardBackwardParams& p) {
  PolicyTables t;
  detail::fill_forward_tables(*p.dag, p.forward_logits, t);
  detail::fill_backward_tables(*p.dag, p.backward_logits, p.backward_frozen, t);
  return t;
}
inline PolicyTables make_policy_tables(const TrajectoryBalanceParams& p) {
  PolicyTables t;
  detail::fill_forward_tables(*p.dag, p.forward_logits, t);
  detail::fill_backward_tables(*p.dag, p.backward_logits, p.backward_frozen, t);
  return t;
}

// ---------------------------------------------------------------------------
// Per-unit losses.

/// Squared log-ratio of incoming flow to R(s) plus non-terminating outgoing
/// flow. Zero at the source and sink: the sink carries no constraint and the
/// source has no incoming one (its state flow is defined by its outgoing
/// edges, which the edge-flow parametrization represents directly).
inline double fm_loss_at_state(const EdgeFlowParams& p, const RewardFn& reward,
                               StateId s, double delta) {
  const PointedDag& dag = *p.dag;
  if (s == dag.source() || s == dag.sink()) return 0.0;
  const auto b = detail::flow_balance_at(p, reward, s);
  return detail::squared_log_ratio(b.in, b.out, delta);
}

/// Squared log-ratio of F(s)P_F(s'|s) to F(s')P_B(s|s'), with R(s) replacing
/// the backward side on terminating edges.
inline double db_loss_at_edge(const ForwardBackwardParams& p, const PolicyTables& t,
                              const RewardFn& reward, std::uint32_t edge_id,
                              double delta) {
  const PointedDag& dag = *p.dag;
  const Edge& ed = dag.edge(edge_id);
  const double num = std::exp(p.log_state_flow[ed.from]) * t.pf[edge_id];
  const double den = ed.to == dag.sink()
                         ? reward(ed.from)
                         : std::exp(p.log_state_flow[ed.to]) *
                               t.pb[dag.nonterminal_index(edge_id)];
  return detail::squared_log_ratio(num, den, delta);
}

inline double db_loss_at_edge(const ForwardBackwardParams& p, const RewardFn& reward,
                              std::uint32_t edge_id, double delta) {
  return db_loss_at_edge(p, make_policy_tables(p), reward, edge_id, delta);
}

/// Squared log of [Z prod P_F] / [R(end) prod P_B] along a complete
/// trajectory; the backward product runs over the non-terminating steps only.
/// A zero terminal reward makes the residual unbounded and is flagged instead
/// of returned as a float.
inline double tb_loss_at_trajectory(const TrajectoryBalanceParams& p,
                                    const PolicyTables& t, double reward_value,
                                    const Trajectory& traj) {
  const PointedDag& dag = *p.dag;
  if (!(reward_value > 0.0)) {
    throw LossError(LossError::Kind::ZeroRewardOnTrajectory,
                    "trajectory terminates with reward " +
                        std::to_string(reward_value));
  }
  double u = p.log_z - std::log(reward_value);
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
    const std::uint32_t e = dag.edge_index(traj[i], traj[i + 1]);
    u += t.log_pf[e];
    if (!dag.is_terminating_edge(e)) u -= t.log_pb[dag.nonterminal_index(e)];
  }
  return u * u;
}

inline double tb_loss_at_trajectory(const TrajectoryBalanceParams& p,
                                    double reward_value, const Trajectory& traj) {
  return tb_loss_at_trajectory(p, make_policy_tables(p), reward_value, traj);
}
inline double tb_loss_at_trajectory(const TrajectoryBalanceParams& p,
                                    const RewardFn& reward, const Trajectory& traj) {
  return tb_loss_at_trajectory(p, reward(traj[traj.size() - 2]), traj);
}

// ---------------------------------------------------------------------------
// Analytic gradients with respect to the flat parameter coordinates.
// Each accumulate_* adds scale * dL/dtheta into `grad` (length
// parameter_count()), visiting only the touched coordinates.

inline void accumulate_fm_gradient(const EdgeFlowParams& p, const RewardFn& reward,
                                   StateId s, double delta, double scale,
                                   std::span<double> grad) {
  const PointedDag& dag = *p.dag;
  if (s == dag.source() || s == dag.sink()) return;
  const auto b = detail::flow_balance_at(p, reward, s);
  if (delta == 0.0 && b.in == 0.0 && b.out == 0.0) return;
  const double u = std::log(delta + b.in) - std::log(delta + b.out);
  const double d = 2.0 * u * scale;
  for (std::uint32_t e : dag.in_edges(s)) {
    const std::uint32_t i = dag.nonterminal_index(e);
    grad[i] += d * std::exp(p.log_edge_flow[i]) / (delta + b.in);
  }
  for (std::uint32_t e : dag.out_edges(s)) {
    if (dag.is_terminating_edge(e)) continue;  // pinned to R, not a parameter
    const std::uint32_t i = dag.nonterminal_index(e);
    grad[i] -= d * std::exp(p.log_edge_flow[i]) / (delta + b.out);
  }
}

inline void accumulate_db_gradient(const ForwardBackwardParams& p,
                                   const PolicyTables& t, const RewardFn& reward,
                                   std::uint32_t edge_id, double delta, double scale,
                                   std::span<double> grad) {
  const PointedDag& dag = *p.dag;
  const Edge& ed = dag.edge(edge_id);
  const std::size_t ns = p.log_state_flow.size();
  const std::size_t ne = p.forward_logits.size();

  const double num = std::exp(p.log_state_flow[ed.from]) * t.pf[edge_id];
  double den;
  if (ed.to == dag.sink()) {
    den = reward(ed.from);
  } else {
    den = std::exp(p.log_state_flow[ed.to]) * t.pb[dag.nonterminal_index(edge_id)];
  }
  if (delta == 0.0 && num == 0.0 && den == 0.0) return;
  const double u = std::log(delta + num) - std::log(delta + den);
  const double d = 2.0 * u * scale;

  const double wn = d * num / (delta + num);
  grad[ed.from] += wn;  // log state flow coordinate
  for (std::uint32_t c : dag.out_edges(ed.from)) {
    grad[ns + c] += wn * ((c == edge_id ? 1.0 : 0.0) - t.pf[c]);
  }
  if (ed.to != dag.sink()) {
    const double wd = d * den / (delta + den);
    grad[ed.to] -= wd;
    if (!p.backward_frozen) {
      for (std::uint32_t e : dag.in_edges(ed.to)) {
        const std::uint32_t i = dag.nonterminal_index(e);
        grad[ns + ne + i] -= wd * ((e == edge_id ? 1.0 : 0.0) - t.pb[i]);
      }
    }
  }
}

inline void accumulate_tb_gradient(const TrajectoryBalanceParams& p,
                                   const PolicyTables& t, double reward_value,
                                   const Trajectory& traj, double scale,
                                   std::span<double> grad) {
  const PointedDag& dag = *p.dag;
  if (!(reward_value > 0.0)) {
    throw LossError(LossError::Kind::ZeroRewardOnTrajectory,
                    "trajectory terminates with zero reward");
  }
  const std::size_t ne = p.forward_logits.size();

  double u = p.log_z - std::log(reward_value);
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
    const std::uint32_t e = dag.edge_index(traj[i], traj[i + 1]);
    u += t.log_pf[e];
    if (!dag.is_terminating_edge(e)) u -= t.log_pb[dag.nonterminal_index(e)];
  }
  const double d = 2.0 * u * scale;

  grad[0] += d;  // log Z coordinate
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
    const std::uint32_t e = dag.edge_index(traj[i], traj[i + 1]);
    for (std::uint32_t c : dag.out_edges(traj[i])) {
      grad[1 + c] += d * ((c == e ? 1.0 : 0.0) - t.pf[c]);
    }
    if (!p.backward_frozen && !dag.is_terminating_edge(e)) {
      for (std::uint32_t b : dag.in_edges(traj[i + 1])) {
        const std::uint32_t bi = dag.nonterminal_index(b);
        grad[1 + ne + bi] -= d * ((b == e ? 1.0 : 0.0) - t.pb[bi]);
      }
    }
  }
}

inline std::vector<double> fm_loss_gradient(const EdgeFlowParams& p,
                                            const RewardFn& reward, StateId s,
                                            double delta) {
  std::vector<double> g(p.parameter_count(), 0.0);
  accumulate_fm_gradient(p, reward, s, delta, 1.0, g);
  return g;
}
inline std::vector<double> db_loss_gradient(const ForwardBackwardParams& p,
                                            const RewardFn& reward,
                                            std::uint32_t edge_id, double delta) {
  std::vector<double> g(p.parameter_count(), 0.0);
  accumulate_db_gradient(p, make_policy_tables(p), reward, edge_id, delta, 1.0, g);
  return g;
}
inline std::vector<double> tb_loss_gradient(const TrajectoryBalanceParams& p,
                                            double reward_value,
                                            const Trajectory& traj) {
  std::vector<double> g(p.parameter_count(), 0.0);
  accumulate_tb_gradient(p, make_policy_tables(p), reward_value, traj, 1.0, g);
  return g;
}

/// Sum of the per-unit losses over the whole DAG: states for FM, edges for
/// DB, enumerated complete trajectories for TB. Zero exactly on images of
/// Markovian flows matching the reward.
inline double total_loss(const Params& params, const RewardFn& reward,
                         const LossSpec& spec,
                         const TrajectorySpace* space = nullptr) {
  require_compatible(params, spec);
  const PointedDag& dag = dag_of(params);
  switch (spec.kind) {
    case LossKind::FlowMatching: {
      const auto& p = std::get<EdgeFlowParams>(params);
      double total = 0.0;
      for (StateId s = 0; s < dag.num_states(); ++s) {
        total += fm_loss_at_state(p, reward, s, spec.delta);
      }
      return total;
    }
    case LossKind::DetailedBalance: {
      const auto& p = std::get<ForwardBackwardParams>(params);
      const PolicyTables t = make_policy_tables(p);
      double total = 0.0;
      for (std::uint32_t e = 0; e < dag.num_edges(); ++e) {
        total += db_loss_at_edge(p, t, reward, e, spec.delta);
      }
      return total;
    }
    case LossKind::TrajectoryBalance: {
      const auto& p = std::get<TrajectoryBalanceParams>(params);
      const PolicyTables t = make_policy_tables(p);
      double total = 0.0;
      auto add = [&](const TrajectorySpace& sp) {
        for (const Trajectory& traj : sp.trajectories()) {
          total += tb_loss_at_trajectory(p, t, reward(traj[traj.size() - 2]), traj);
        }
      };
      if (space) {
        add(*space);
      } else {
        add(TrajectorySpace(dag_ptr_of(params)));
      }
      return total;
    }
  }
  throw Error("unknown loss kind");
}

}  // namespace gfn
