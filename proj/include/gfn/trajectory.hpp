#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "gfn/dag.hpp"
#include "gfn/errors.hpp"

namespace gfn {

/// Exceeding the cap is an error, never silent truncation.
constexpr std::uint64_t kDefaultEnumerationCap = 10'000'000;

/// Number of source-to-sink paths, by the parent-sum recurrence over a
/// topological order. Saturates at cap+1 so huge graphs stay cheap to probe.
inline std::uint64_t count_complete_trajectories(
    const PointedDag& dag, std::uint64_t cap = kDefaultEnumerationCap) {
  std::vector<std::uint64_t> paths(dag.num_states(), 0);
  paths[dag.source()] = 1;
  const std::uint64_t sat = cap == UINT64_MAX ? UINT64_MAX : cap + 1;
  for (StateId s : dag.topo_order()) {
    if (paths[s] == 0) continue;
    for (std::uint32_t e : dag.out_edges(s)) {
      StateId t = dag.edge(e).to;
      paths[t] = (paths[t] > sat - paths[s]) ? sat : paths[t] + paths[s];
    }
  }
  return paths[dag.sink()];
}

/// All complete trajectories, in lexicographic order of their state
/// sequences. Throws ExplosionGuard if the count exceeds `cap`.
inline std::vector<Trajectory> enumerate_complete_trajectories(
    const PointedDag& dag, std::uint64_t cap = kDefaultEnumerationCap) {
  const std::uint64_t n = count_complete_trajectories(dag, cap);
  if (n > cap) throw ExplosionGuard(n, cap);
  std::vector<Trajectory> out;
  out.reserve(n);
  Trajectory stack{dag.source()};
  // Iterative DFS; children are visited in ascending state order.
  std::vector<std::size_t> next{0};
  while (!stack.empty()) {
    StateId s = stack.back();
    if (s == dag.sink()) {
      out.push_back(stack);
      stack.pop_back();
      next.pop_back();
      continue;
    }
    auto edges = dag.out_edges(s);
    if (next.back() == edges.size()) {
      stack.pop_back();
      next.pop_back();
      continue;
    }
    StateId child = dag.edge(edges[next.back()++]).to;
    stack.push_back(child);
    next.push_back(0);
  }
  return out;
}

/// A DAG together with its enumerated trajectory space; the shared basis for
/// exact flow computations.
class TrajectorySpace {
 public:
  explicit TrajectorySpace(DagPtr dag, std::uint64_t cap = kDefaultEnumerationCap)
      : dag_(std::move(dag)),
        trajectories_(enumerate_complete_trajectories(*dag_, cap)) {
    for (std::size_t i = 0; i < trajectories_.size(); ++i) {
      index_[trajectories_[i]] = i;
    }
  }

  const PointedDag& dag() const { return *dag_; }
  const DagPtr& dag_ptr() const { return dag_; }
  std::size_t size() const { return trajectories_.size(); }
  const Trajectory& operator[](std::size_t i) const { return trajectories_[i]; }
  const std::vector<Trajectory>& trajectories() const { return trajectories_; }

  /// Position of a complete trajectory in enumeration order, or npos.
  static constexpr std::size_t npos = SIZE_MAX;
  std::size_t index_of(const Trajectory& t) const {
    auto it = index_.find(t);
    return it == index_.end() ? npos : it->second;
  }

 private:
  DagPtr dag_;
  std::vector<Trajectory> trajectories_;
  std::map<Trajectory, std::size_t> index_;
};

}  // namespace gfn
