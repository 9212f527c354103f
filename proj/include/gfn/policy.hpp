#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "gfn/dag.hpp"
#include "gfn/errors.hpp"
#include "gfn/numeric.hpp"

namespace gfn {

/// Probability tables live on edges and store linear-space probabilities;
/// log-space belongs to the learnable parametrizations only.
constexpr double kPolicySumTolerance = 1e-12;

/// P(s'|s) for every edge s->s'; rows over children of each non-sink state
/// sum to one.
class ForwardPolicy {
 public:
  static ForwardPolicy from_probs(DagPtr dag, std::vector<double> probs) {
    if (probs.size() != dag->num_edges()) {
      throw PolicyError("forward policy table size does not match edge count");
    }
    for (StateId s = 0; s < dag->num_states(); ++s) {
      if (s == dag->sink()) continue;
      double sum = 0.0;
      for (std::uint32_t e : dag->out_edges(s)) {
        if (!(probs[e] >= 0.0) || probs[e] > 1.0 + kPolicySumTolerance) {
          throw PolicyError("forward probability out of [0,1] at state " +
                                std::to_string(s),
                            s);
        }
        sum += probs[e];
      }
      if (std::abs(sum - 1.0) > kPolicySumTolerance) {
        throw PolicyError("forward probabilities at state " + std::to_string(s) +
                              " sum to " + std::to_string(sum),
                          s);
      }
    }
    return ForwardPolicy(std::move(dag), std::move(probs));
  }

  const PointedDag& dag() const { return *dag_; }
  const DagPtr& dag_ptr() const { return dag_; }
  double prob(std::uint32_t edge_id) const { return probs_[edge_id]; }
  const std::vector<double>& probs() const { return probs_; }

 private:
  ForwardPolicy(DagPtr dag, std::vector<double> probs)
      : dag_(std::move(dag)), probs_(std::move(probs)) {}
  DagPtr dag_;
  std::vector<double> probs_;
};

/// P(s|s') for every edge s->s'; rows over parents of each non-source state
/// sum to one.
class BackwardPolicy {
 public:
  static BackwardPolicy from_probs(DagPtr dag, std::vector<double> probs) {
    if (probs.size() != dag->num_edges()) {
      throw PolicyError("backward policy table size does not match edge count");
    }
    for (StateId s = 0; s < dag->num_states(); ++s) {
      if (s == dag->source()) continue;
      double sum = 0.0;
      for (std::uint32_t e : dag->in_edges(s)) {
        if (!(probs[e] >= 0.0) || probs[e] > 1.0 + kPolicySumTolerance) {
          throw PolicyError("backward probability out of [0,1] at state " +
                                std::to_string(s),
                            s);
        }
        sum += probs[e];
      }
      if (std::abs(sum - 1.0) > kPolicySumTolerance) {
        throw PolicyError("backward probabilities at state " + std::to_string(s) +
                              " sum to " + std::to_string(sum),
                          s);
      }
    }
    return BackwardPolicy(std::move(dag), std::move(probs));
  }

  const PointedDag& dag() const { return *dag_; }
  const DagPtr& dag_ptr() const { return dag_; }
  double prob(std::uint32_t edge_id) const { return probs_[edge_id]; }
  const std::vector<double>& probs() const { return probs_; }

 private:
  BackwardPolicy(DagPtr dag, std::vector<double> probs)
      : dag_(std::move(dag)), probs_(std::move(probs)) {}
  DagPtr dag_;
  std::vector<double> probs_;
};

/// Uniform-over-parents probabilities for the non-terminating edges, indexed
/// by nonterminal edge position. The canonical frozen backward policy.
inline std::vector<double> uniform_backward_interior(const PointedDag& dag) {
  std::vector<double> p(dag.nonterminal_edges().size(), 0.0);
  for (std::uint32_t id : dag.nonterminal_edges()) {
    StateId child = dag.edge(id).to;
    p[dag.nonterminal_index(id)] = 1.0 / static_cast<double>(dag.num_parents(child));
  }
  return p;
}

namespace detail {
template <typename PolicyT>
double extension_product(const PolicyT& policy, const Trajectory& traj) {
  const PointedDag& dag = policy.dag();
  if (!dag.is_valid_trajectory(traj)) {
    throw PolicyError("trajectory is not a path in the policy's DAG");
  }
  double p = 1.0;
  for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
    p *= policy.prob(dag.edge_index(traj[i], traj[i + 1]));
    if (p == 0.0) return 0.0;
  }
  return p;
}
}  // namespace detail

/// Product of per-step conditionals along `traj`. For a forward policy these
/// extensions sum to one over all suffix paths from any fixed state to the
/// sink; dually for backward policies from the source.
inline double trajectory_probability_extension(const ForwardPolicy& policy,
                                               const Trajectory& traj) {
  return detail::extension_product(policy, traj);
}
inline double trajectory_probability_extension(const BackwardPolicy& policy,
                                               const Trajectory& traj) {
  return detail::extension_product(policy, traj);
}

}  // namespace gfn
