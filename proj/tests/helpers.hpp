#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "gfn/dag.hpp"
#include "gfn/flow.hpp"
#include "gfn/param.hpp"
#include "gfn/policy.hpp"
#include "gfn/random.hpp"
#include "gfn/trajectory.hpp"

namespace gfn::test {

// Five-state workhorse: 0 -> {1,2}, 1 -> 2, 2 -> {3, sink}, 3 -> sink.
// Four complete trajectories; rich enough to distinguish Markovian from
// non-Markovian flows while staying hand-checkable.
inline DagPtr kite_dag() {
  return build_dag(5, {{0, 1}, {0, 2}, {1, 2}, {2, 3}, {2, 4}, {3, 4}});
}

// Assign per-trajectory values by state sequence, independent of enumeration
// order.
inline TrajectoryFlow flow_by_sequence(
    const TrajectorySpace& space,
    const std::map<Trajectory, double>& values) {
  std::vector<double> v(space.size(), 0.0);
  for (const auto& [traj, val] : values) {
    std::size_t i = space.index_of(traj);
    REQUIRE(i != TrajectorySpace::npos);
    v[i] = val;
  }
  return TrajectoryFlow::validated(space, std::move(v));
}

inline double flow_value_at(const TrajectorySpace& space, const TrajectoryFlow& flow,
                            const Trajectory& traj) {
  std::size_t i = space.index_of(traj);
  REQUIRE(i != TrajectorySpace::npos);
  return flow.values[i];
}

// The four hand-checkable flows on kite_dag. a/b share edge flows (b is the
// Markovian one); likewise c/d.
inline TrajectoryFlow kite_flow_a(const TrajectorySpace& s) {
  return flow_by_sequence(s, {{{0, 2, 4}, 1.0},
                              {{0, 1, 2, 4}, 1.0},
                              {{0, 2, 3, 4}, 1.0},
                              {{0, 1, 2, 3, 4}, 2.0}});
}
inline TrajectoryFlow kite_flow_b(const TrajectorySpace& s) {
  return flow_by_sequence(s, {{{0, 2, 4}, 4.0 / 5.0},
                              {{0, 1, 2, 4}, 6.0 / 5.0},
                              {{0, 2, 3, 4}, 6.0 / 5.0},
                              {{0, 1, 2, 3, 4}, 9.0 / 5.0}});
}
inline TrajectoryFlow kite_flow_c(const TrajectorySpace& s) {
  return flow_by_sequence(s, {{{0, 2, 4}, 1.0},
                              {{0, 1, 2, 4}, 1.0},
                              {{0, 2, 3, 4}, 2.0},
                              {{0, 1, 2, 3, 4}, 1.0}});
}
inline TrajectoryFlow kite_flow_d(const TrajectorySpace& s) {
  return flow_by_sequence(s, {{{0, 2, 4}, 6.0 / 5.0},
                              {{0, 1, 2, 4}, 4.0 / 5.0},
                              {{0, 2, 3, 4}, 9.0 / 5.0},
                              {{0, 1, 2, 3, 4}, 6.0 / 5.0}});
}

inline RewardFn kite_reward() {
  return [](StateId s) { return s == 2 ? 2.0 : (s == 3 ? 3.0 : 0.0); };
}

// Random pointed DAG with n states; extra edges are sprinkled between
// topologically ordered pairs, then every state is wired into the
// source/sink skeleton so the result always validates.
inline DagPtr random_dag(Rng& rng, std::uint32_t n, double edge_prob = 0.35) {
  std::vector<Edge> edges;
  auto add = [&edges](StateId a, StateId b) {
    for (const Edge& e : edges) {
      if (e.from == a && e.to == b) return;
    }
    edges.push_back({a, b});
  };
  for (StateId a = 0; a + 1 < n; ++a) {
    for (StateId b = a + 1; b < n; ++b) {
      if (rng.u01() < edge_prob) add(a, b);
    }
  }
  for (StateId s = 1; s < n; ++s) {
    bool has_in = std::any_of(edges.begin(), edges.end(),
                              [s](const Edge& e) { return e.to == s; });
    if (!has_in) add(static_cast<StateId>(rng.below(s)), s);
  }
  for (StateId s = 0; s + 1 < n; ++s) {
    bool has_out = std::any_of(edges.begin(), edges.end(),
                               [s](const Edge& e) { return e.from == s; });
    if (!has_out) add(s, static_cast<StateId>(s + 1 + rng.below(n - s - 1)));
  }
  return build_dag(n, std::move(edges));
}

inline TrajectoryFlow random_flow(Rng& rng, const TrajectorySpace& space) {
  std::vector<double> v(space.size());
  for (double& x : v) x = 0.05 + 2.0 * rng.u01();
  return TrajectoryFlow::validated(space, std::move(v));
}

inline ForwardPolicy random_forward_policy(Rng& rng, const DagPtr& dag) {
  std::vector<double> logits(dag->num_edges());
  for (double& x : logits) x = rng.normal();
  return induced_forward_policy_from_logits(dag, logits);
}

inline RewardFn random_reward(Rng& rng, const PointedDag& dag, double lo = 0.1,
                              double hi = 3.0) {
  auto table = std::make_shared<std::vector<double>>(dag.num_states(), 0.0);
  for (StateId t : dag.terminating_states()) {
    (*table)[t] = lo + (hi - lo) * rng.u01();
  }
  return [table](StateId s) { return (*table)[s]; };
}

// Brute-force oracle: all paths from `from` to `to` by DFS, lexicographic.
inline std::vector<Trajectory> enumerate_paths_between(const PointedDag& dag,
                                                       StateId from, StateId to) {
  std::vector<Trajectory> out;
  Trajectory cur{from};
  auto dfs = [&](auto&& self, StateId s) -> void {
    if (s == to && cur.size() >= 2) {
      out.push_back(cur);
      return;
    }
    for (std::uint32_t e : dag.out_edges(s)) {
      cur.push_back(dag.edge(e).to);
      self(self, dag.edge(e).to);
      cur.pop_back();
    }
  };
  dfs(dfs, from);
  return out;
}

}  // namespace gfn::test
