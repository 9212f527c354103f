#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gfn/errors.hpp"

namespace gfn {

/// States are dense integers: 0 is the source, num_states-1 is the sink.
/// Environments own any mapping between rich states and these indices.
using StateId = std::uint32_t;

struct Edge {
  StateId from;
  StateId to;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// A path through the DAG as a state sequence. A complete trajectory starts
/// at the source and ends at the sink.
using Trajectory = std::vector<StateId>;

constexpr std::uint32_t kNoEdge = UINT32_MAX;

/// A validated pointed DAG: acyclic, one source that reaches every state, one
/// sink reachable from every state. Immutable after construction and safe to
/// share across threads for reads.
class PointedDag {
 public:
  /// Validates and indexes the graph. The caller-supplied edge order is
  /// preserved (edge ids are positions in `edges`), which the text format
  /// relies on for exact round-trips.
  static PointedDag build(std::uint32_t num_states, std::vector<Edge> edges) {
    if (num_states < 2) {
      throw DagError(DagError::Kind::InvalidEdge,
                     "a pointed DAG needs at least a source and a sink");
    }
    PointedDag g;
    g.num_states_ = num_states;
    g.edges_ = std::move(edges);
    g.validate_edges();
    g.index_adjacency();
    g.compute_topo_order();
    g.check_pointed();
    g.index_terminating();
    return g;
  }

  std::uint32_t num_states() const { return num_states_; }
  StateId source() const { return 0; }
  StateId sink() const { return num_states_ - 1; }

  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(std::uint32_t id) const { return edges_[id]; }

  /// Out-edge ids of `s`, sorted by child state.
  std::span<const std::uint32_t> out_edges(StateId s) const {
    return {out_.data() + out_offsets_[s], out_offsets_[s + 1] - out_offsets_[s]};
  }
  /// In-edge ids of `s`, sorted by parent state.
  std::span<const std::uint32_t> in_edges(StateId s) const {
    return {in_.data() + in_offsets_[s], in_offsets_[s + 1] - in_offsets_[s]};
  }

  std::size_t num_children(StateId s) const { return out_edges(s).size(); }
  std::size_t num_parents(StateId s) const { return in_edges(s).size(); }

  std::uint32_t edge_index(StateId from, StateId to) const {
    for (std::uint32_t e : out_edges(from)) {
      if (edges_[e].to == to) return e;
    }
    return kNoEdge;
  }
  bool has_edge(StateId from, StateId to) const {
    return edge_index(from, to) != kNoEdge;
  }

  /// A topological order of the states (source first, sink last).
  const std::vector<StateId>& topo_order() const { return topo_order_; }

  /// Terminating states S^f = Par(sink), ascending.
  const std::vector<StateId>& terminating_states() const { return terminating_; }
  bool is_terminating(StateId s) const {
    return terminating_index_[s] != kNoEdge;
  }
  /// Position of `s` within terminating_states(), or kNoEdge.
  std::uint32_t terminating_index(StateId s) const { return terminating_index_[s]; }

  bool is_terminating_edge(std::uint32_t edge_id) const {
    return edges_[edge_id].to == sink();
  }

  /// Non-terminating edges A^{-f}, as edge ids in edge order.
  const std::vector<std::uint32_t>& nonterminal_edges() const {
    return nonterminal_edges_;
  }
  /// Position of an edge within nonterminal_edges(), or kNoEdge for A^f.
  std::uint32_t nonterminal_index(std::uint32_t edge_id) const {
    return nonterminal_index_[edge_id];
  }

  /// True iff `traj` walks existing edges (length >= 2).
  bool is_valid_trajectory(const Trajectory& traj) const {
    if (traj.size() < 2) return false;
    for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
      if (traj[i] >= num_states_ || traj[i + 1] >= num_states_) return false;
      if (!has_edge(traj[i], traj[i + 1])) return false;
    }
    return true;
  }
  bool is_complete_trajectory(const Trajectory& traj) const {
    return is_valid_trajectory(traj) && traj.front() == source() &&
           traj.back() == sink();
  }

  /// FNV-1a over the structure; used to bind checkpoints to their graph.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= 1099511628211ull;
      }
    };
    mix(num_states_);
    for (const Edge& e : edges_) {
      mix(e.from);
      mix(e.to);
    }
    return h;
  }

  friend bool operator==(const PointedDag& a, const PointedDag& b) {
    return a.num_states_ == b.num_states_ && a.edges_ == b.edges_;
  }

 private:
  PointedDag() = default;

  void validate_edges() {
    std::set<std::pair<StateId, StateId>> seen;
    for (const Edge& e : edges_) {
      if (e.from >= num_states_ || e.to >= num_states_) {
        throw DagError(DagError::Kind::InvalidEdge,
                       "edge endpoint out of range: " + std::to_string(e.from) +
                           " -> " + std::to_string(e.to));
      }
      if (e.from == e.to) {
        throw DagError(DagError::Kind::SelfEdge,
                       "self edge at state " + std::to_string(e.from), e.from);
      }
      if (!seen.insert({e.from, e.to}).second) {
        throw DagError(DagError::Kind::DuplicateEdge,
                       "duplicate edge " + std::to_string(e.from) + " -> " +
                           std::to_string(e.to),
                       e.from);
      }
    }
  }

  void index_adjacency() {
    out_offsets_.assign(num_states_ + 1, 0);
    in_offsets_.assign(num_states_ + 1, 0);
    for (const Edge& e : edges_) {
      ++out_offsets_[e.from + 1];
      ++in_offsets_[e.to + 1];
    }
    for (std::uint32_t s = 0; s < num_states_; ++s) {
      out_offsets_[s + 1] += out_offsets_[s];
      in_offsets_[s + 1] += in_offsets_[s];
    }
    out_.resize(edges_.size());
    in_.resize(edges_.size());
    std::vector<std::uint32_t> oc(out_offsets_.begin(), out_offsets_.end() - 1);
    std::vector<std::uint32_t> ic(in_offsets_.begin(), in_offsets_.end() - 1);
    for (std::uint32_t id = 0; id < edges_.size(); ++id) {
      out_[oc[edges_[id].from]++] = id;
      in_[ic[edges_[id].to]++] = id;
    }
    // Sort each state's neighborhoods by neighbor id so that enumeration is
    // lexicographic and lookups are deterministic.
    for (std::uint32_t s = 0; s < num_states_; ++s) {
      std::sort(out_.begin() + out_offsets_[s], out_.begin() + out_offsets_[s + 1],
                [this](std::uint32_t a, std::uint32_t b) {
                  return edges_[a].to < edges_[b].to;
                });
      std::sort(in_.begin() + in_offsets_[s], in_.begin() + in_offsets_[s + 1],
                [this](std::uint32_t a, std::uint32_t b) {
                  return edges_[a].from < edges_[b].from;
                });
    }
  }

  void compute_topo_order() {
    // Kahn's algorithm, always removing the smallest ready state, so the
    // order is canonical for a given graph.
    std::vector<std::uint32_t> indeg(num_states_);
    for (StateId s = 0; s < num_states_; ++s) {
      indeg[s] = static_cast<std::uint32_t>(num_parents(s));
    }
    std::set<StateId> ready;
    for (StateId s = 0; s < num_states_; ++s) {
      if (indeg[s] == 0) ready.insert(s);
    }
    topo_order_.clear();
    topo_order_.reserve(num_states_);
    while (!ready.empty()) {
      StateId s = *ready.begin();
      ready.erase(ready.begin());
      topo_order_.push_back(s);
      for (std::uint32_t e : out_edges(s)) {
        if (--indeg[edges_[e].to] == 0) ready.insert(edges_[e].to);
      }
    }
    if (topo_order_.size() != num_states_) {
      throw DagError(DagError::Kind::CycleDetected, "graph contains a cycle");
    }
  }

  void check_pointed() {
    std::vector<char> from_source(num_states_, 0);
    from_source[source()] = 1;
    for (StateId s : topo_order_) {
      if (!from_source[s]) continue;
      for (std::uint32_t e : out_edges(s)) from_source[edges_[e].to] = 1;
    }
    for (StateId s = 0; s < num_states_; ++s) {
      if (!from_source[s]) {
        throw DagError(DagError::Kind::NotPointed,
                       "state " + std::to_string(s) +
                           " is not reachable from the source",
                       s, DagError::Reason::UnreachableFromSource);
      }
    }
    std::vector<char> to_sink(num_states_, 0);
    to_sink[sink()] = 1;
    for (auto it = topo_order_.rbegin(); it != topo_order_.rend(); ++it) {
      for (std::uint32_t e : out_edges(*it)) {
        if (to_sink[edges_[e].to]) to_sink[*it] = 1;
      }
    }
    for (StateId s = 0; s < num_states_; ++s) {
      if (!to_sink[s]) {
        throw DagError(DagError::Kind::NotPointed,
                       "state " + std::to_string(s) + " cannot reach the sink",
                       s, DagError::Reason::CannotReachSink);
      }
    }
  }

  void index_terminating() {
    terminating_index_.assign(num_states_, kNoEdge);
    for (std::uint32_t e : in_edges(sink())) {
      terminating_.push_back(edges_[e].from);
    }
    std::sort(terminating_.begin(), terminating_.end());
    for (std::uint32_t i = 0; i < terminating_.size(); ++i) {
      terminating_index_[terminating_[i]] = i;
    }
    nonterminal_index_.assign(edges_.size(), kNoEdge);
    for (std::uint32_t id = 0; id < edges_.size(); ++id) {
      if (edges_[id].to != sink()) {
        nonterminal_index_[id] = static_cast<std::uint32_t>(nonterminal_edges_.size());
        nonterminal_edges_.push_back(id);
      }
    }
  }

  std::uint32_t num_states_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::uint32_t> out_offsets_, out_;
  std::vector<std::uint32_t> in_offsets_, in_;
  std::vector<StateId> topo_order_;
  std::vector<StateId> terminating_;
  std::vector<std::uint32_t> terminating_index_;
  std::vector<std::uint32_t> nonterminal_edges_;
  std::vector<std::uint32_t> nonterminal_index_;
};

using DagPtr = std::shared_ptr<const PointedDag>;

inline DagPtr build_dag(std::uint32_t num_states, std::vector<Edge> edges) {
  return std::make_shared<const PointedDag>(
      PointedDag::build(num_states, std::move(edges)));
}

}  // namespace gfn
