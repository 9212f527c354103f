#include <catch2/catch_amalgamated.hpp>

#include "gfn/dag.hpp"
#include "gfn/numeric.hpp"
#include "gfn/policy.hpp"
#include "gfn/trajectory.hpp"
#include "helpers.hpp"

using namespace gfn;
using namespace gfn::test;

TEST_CASE("five-state example validates with the expected structure", "[dag]") {
  DagPtr dag = kite_dag();
  CHECK(dag->num_states() == 5);
  CHECK(dag->source() == 0);
  CHECK(dag->sink() == 4);
  CHECK(dag->terminating_states() == std::vector<StateId>{2, 3});
  CHECK(dag->nonterminal_edges().size() == 4);
  CHECK(dag->is_terminating(2));
  CHECK_FALSE(dag->is_terminating(1));
}

TEST_CASE("minimal two-state DAG", "[dag]") {
  DagPtr dag = build_dag(2, {{0, 1}});
  CHECK(dag->terminating_states() == std::vector<StateId>{0});
  auto trajs = enumerate_complete_trajectories(*dag);
  REQUIRE(trajs.size() == 1);
  CHECK(trajs[0] == Trajectory{0, 1});
}

TEST_CASE("construction rejects malformed graphs", "[dag]") {
  SECTION("two-cycle") {
    try {
      build_dag(4, {{0, 1}, {1, 2}, {2, 1}, {2, 3}});
      FAIL("expected DagError");
    } catch (const DagError& e) {
      CHECK(e.kind == DagError::Kind::CycleDetected);
    }
  }
  SECTION("self edge") {
    try {
      build_dag(3, {{0, 1}, {1, 1}, {1, 2}});
      FAIL("expected DagError");
    } catch (const DagError& e) {
      CHECK(e.kind == DagError::Kind::SelfEdge);
      CHECK(e.state == 1);
    }
  }
  SECTION("duplicate edge") {
    try {
      build_dag(3, {{0, 1}, {0, 1}, {1, 2}});
      FAIL("expected DagError");
    } catch (const DagError& e) {
      CHECK(e.kind == DagError::Kind::DuplicateEdge);
    }
  }
  SECTION("state unreachable from source") {
    try {
      build_dag(4, {{0, 2}, {2, 3}, {1, 3}});
      FAIL("expected DagError");
    } catch (const DagError& e) {
      CHECK(e.kind == DagError::Kind::NotPointed);
      CHECK(e.state == 1);
      CHECK(e.reason == DagError::Reason::UnreachableFromSource);
    }
  }
  SECTION("state cannot reach sink") {
    try {
      build_dag(4, {{0, 1}, {0, 3}, {1, 3}, {0, 2}});
      FAIL("expected DagError");
    } catch (const DagError& e) {
      CHECK(e.kind == DagError::Kind::NotPointed);
      CHECK(e.state == 2);
      CHECK(e.reason == DagError::Reason::CannotReachSink);
    }
  }
  SECTION("endpoint out of range") {
    CHECK_THROWS_AS(build_dag(2, {{0, 5}}), DagError);
  }
  SECTION("fewer than two states") {
    CHECK_THROWS_AS(build_dag(1, {}), DagError);
  }
}

TEST_CASE("topological order is valid edge by edge", "[dag]") {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    DagPtr dag = random_dag(rng, 4 + static_cast<std::uint32_t>(rng.below(9)));
    std::vector<std::uint32_t> pos(dag->num_states());
    for (std::uint32_t i = 0; i < dag->num_states(); ++i) {
      pos[dag->topo_order()[i]] = i;
    }
    for (const Edge& e : dag->edges()) {
      CHECK(pos[e.from] < pos[e.to]);
    }
  }
}

TEST_CASE("enumeration lists exactly the four example trajectories", "[dag]") {
  DagPtr dag = kite_dag();
  auto trajs = enumerate_complete_trajectories(*dag);
  REQUIRE(trajs.size() == 4);
  // Lexicographic order of state sequences.
  CHECK(trajs[0] == Trajectory{0, 1, 2, 3, 4});
  CHECK(trajs[1] == Trajectory{0, 1, 2, 4});
  CHECK(trajs[2] == Trajectory{0, 2, 3, 4});
  CHECK(trajs[3] == Trajectory{0, 2, 4});
}

TEST_CASE("enumeration count matches the parent-sum recurrence", "[dag]") {
  Rng rng(11);
  for (int rep = 0; rep < 25; ++rep) {
    DagPtr dag = random_dag(rng, 4 + static_cast<std::uint32_t>(rng.below(8)));
    auto trajs = enumerate_complete_trajectories(*dag);
    CHECK(trajs.size() == count_complete_trajectories(*dag));
    // Exhaustive and duplicate-free: compare against the DFS oracle.
    auto oracle = enumerate_paths_between(*dag, dag->source(), dag->sink());
    CHECK(trajs == oracle);
  }
}

TEST_CASE("enumeration cap triggers instead of truncating", "[dag]") {
  DagPtr dag = kite_dag();
  CHECK_THROWS_AS(enumerate_complete_trajectories(*dag, 3), ExplosionGuard);
  try {
    enumerate_complete_trajectories(*dag, 3);
  } catch (const ExplosionGuard& e) {
    CHECK(e.cap == 3);
    CHECK(e.count == 4);
  }
}

TEST_CASE("forward extension probabilities on the example", "[dag][policy]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  FlowSummary s = summarize(space, kite_flow_b(space));
  ForwardPolicy pf = s.forward_policy();

  // Edge-flow ratios of the Markovian example flow.
  CHECK(trajectory_probability_extension(pf, {0, 1, 2, 4}) ==
        Catch::Approx(6.0 / 25.0).epsilon(1e-12));
  double total = 0.0;
  for (const Trajectory& t : space.trajectories()) {
    total += trajectory_probability_extension(pf, t);
  }
  CHECK(total == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("forced single-step extension is one", "[dag][policy]") {
  DagPtr dag = build_dag(3, {{0, 1}, {1, 2}});
  ForwardPolicy pf = ForwardPolicy::from_probs(dag, {1.0, 1.0});
  CHECK(trajectory_probability_extension(pf, {1, 2}) == 1.0);
}

TEST_CASE("extension rejects non-paths", "[dag][policy]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  ForwardPolicy pf = summarize(space, kite_flow_b(space)).forward_policy();
  CHECK_THROWS_AS(trajectory_probability_extension(pf, {0, 3}), PolicyError);
  CHECK_THROWS_AS(trajectory_probability_extension(pf, {2}), PolicyError);
}

TEST_CASE("forward extensions sum to one from every state", "[dag][policy][property]") {
  Rng rng(23);
  for (int rep = 0; rep < 15; ++rep) {
    DagPtr dag = random_dag(rng, 4 + static_cast<std::uint32_t>(rng.below(7)));
    ForwardPolicy pf = random_forward_policy(rng, dag);
    for (StateId s = 0; s < dag->num_states(); ++s) {
      if (s == dag->sink()) continue;
      double total = 0.0;
      for (const Trajectory& t : enumerate_paths_between(*dag, s, dag->sink())) {
        total += trajectory_probability_extension(pf, t);
      }
      CHECK(close(total, 1.0, 1e-10));
    }
  }
}

TEST_CASE("backward extensions sum to one into every state", "[dag][policy][property]") {
  Rng rng(29);
  for (int rep = 0; rep < 15; ++rep) {
    DagPtr dag = random_dag(rng, 4 + static_cast<std::uint32_t>(rng.below(7)));
    TrajectorySpace space(dag);
    BackwardPolicy pb = summarize(space, random_flow(rng, space)).backward_policy();
    for (StateId s = 1; s < dag->num_states(); ++s) {
      double total = 0.0;
      for (const Trajectory& t : enumerate_paths_between(*dag, dag->source(), s)) {
        total += trajectory_probability_extension(pb, t);
      }
      CHECK(close(total, 1.0, 1e-10));
    }
  }
}

TEST_CASE("policy tables reject inconsistent rows", "[dag][policy]") {
  DagPtr dag = kite_dag();
  std::vector<double> probs(dag->num_edges(), 0.5);
  CHECK_THROWS_AS(ForwardPolicy::from_probs(dag, probs), PolicyError);
  CHECK_THROWS_AS(BackwardPolicy::from_probs(dag, probs), PolicyError);
  CHECK_THROWS_AS(ForwardPolicy::from_probs(dag, std::vector<double>(2, 1.0)),
                  PolicyError);
}

TEST_CASE("dag hash distinguishes structure", "[dag]") {
  DagPtr a = kite_dag();
  DagPtr b = kite_dag();
  CHECK(a->hash() == b->hash());
  DagPtr c = build_dag(5, {{0, 1}, {0, 2}, {1, 2}, {2, 3}, {3, 4}, {2, 4}});
  CHECK(*a == *b);
  // Same edge set in a different order is a different serialized artifact.
  CHECK(a->hash() != c->hash());
}
