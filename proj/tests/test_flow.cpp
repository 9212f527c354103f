#include <catch2/catch_amalgamated.hpp>

#include "gfn/flow.hpp"
#include "gfn/numeric.hpp"
#include "helpers.hpp"

using namespace gfn;
using namespace gfn::test;

namespace {
double edge_flow(const FlowSummary& s, StateId a, StateId b) {
  return s.edge_flow[s.dag->edge_index(a, b)];
}
}  // namespace

TEST_CASE("summary of the first example flow", "[flow]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  FlowSummary s = summarize(space, kite_flow_a(space));

  CHECK(edge_flow(s, 0, 1) == Catch::Approx(3.0));
  CHECK(edge_flow(s, 0, 2) == Catch::Approx(2.0));
  CHECK(edge_flow(s, 1, 2) == Catch::Approx(3.0));
  CHECK(edge_flow(s, 2, 3) == Catch::Approx(3.0));
  CHECK(edge_flow(s, 2, 4) == Catch::Approx(2.0));
  CHECK(edge_flow(s, 3, 4) == Catch::Approx(3.0));
  CHECK(s.total_flow == Catch::Approx(5.0));
  CHECK(s.state_flow[0] == Catch::Approx(5.0));
  CHECK(s.state_flow[4] == Catch::Approx(5.0));
  CHECK(s.p_terminating[dag->terminating_index(2)] == Catch::Approx(0.4));
  CHECK(s.p_terminating[dag->terminating_index(3)] == Catch::Approx(0.6));
}

TEST_CASE("single-trajectory flow summary", "[flow]") {
  DagPtr dag = build_dag(2, {{0, 1}});
  TrajectorySpace space(dag);
  FlowSummary s = summarize(space, TrajectoryFlow{{7.0}});
  CHECK(s.total_flow == 7.0);
  CHECK(s.p_terminating == std::vector<double>{1.0});
}

TEST_CASE("equivalent flows share edge and state flows", "[flow]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  FlowSummary a = summarize(space, kite_flow_a(space));
  FlowSummary b = summarize(space, kite_flow_b(space));
  for (std::uint32_t e = 0; e < dag->num_edges(); ++e) {
    CHECK(close(a.edge_flow[e], b.edge_flow[e], 1e-12));
  }
  for (StateId s = 0; s < dag->num_states(); ++s) {
    CHECK(close(a.state_flow[s], b.state_flow[s], 1e-12));
  }
}

TEST_CASE("markov check separates the example flows", "[flow]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);

  CHECK(is_markovian(space, kite_flow_b(space)).markovian);
  CHECK(is_markovian(space, kite_flow_d(space)).markovian);

  MarkovCheck bad = is_markovian(space, kite_flow_a(space));
  REQUIRE_FALSE(bad.markovian);
  REQUIRE(bad.witness.has_value());
  // The witness reports both the actual flow and the factorized value.
  if (*bad.witness == Trajectory{0, 1, 2, 4}) {
    CHECK(bad.flow_value == Catch::Approx(1.0));
    CHECK(bad.factorized_value == Catch::Approx(6.0 / 5.0));
  }
  CHECK_FALSE(is_markovian(space, kite_flow_c(space)).markovian);
}

TEST_CASE("single-trajectory flows are always Markovian", "[flow]") {
  DagPtr dag = build_dag(2, {{0, 1}});
  TrajectorySpace space(dag);
  CHECK(is_markovian(space, TrajectoryFlow{{3.25}}).markovian);
}

TEST_CASE("projection reproduces the figure-exact values", "[flow]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);

  TrajectoryFlow pa = markovian_projection(space, kite_flow_a(space));
  TrajectoryFlow b = kite_flow_b(space);
  for (std::size_t i = 0; i < space.size(); ++i) {
    CHECK(std::abs(pa.values[i] - b.values[i]) <= 1e-12);
  }

  TrajectoryFlow pc = markovian_projection(space, kite_flow_c(space));
  TrajectoryFlow d = kite_flow_d(space);
  for (std::size_t i = 0; i < space.size(); ++i) {
    CHECK(std::abs(pc.values[i] - d.values[i]) <= 1e-12);
  }

  // Idempotence on Markovian flows.
  TrajectoryFlow pb = markovian_projection(space, b);
  for (std::size_t i = 0; i < space.size(); ++i) {
    CHECK(close(pb.values[i], b.values[i], 1e-12));
  }
}

TEST_CASE("projection preserves edge flows and is Markovian", "[flow][property]") {
  Rng rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    DagPtr dag = random_dag(rng, 4 + static_cast<std::uint32_t>(rng.below(7)));
    TrajectorySpace space(dag);
    TrajectoryFlow f = random_flow(rng, space);
    TrajectoryFlow p = markovian_projection(space, f);
    FlowSummary sf = summarize(space, f);
    FlowSummary sp = summarize(space, p);
    for (std::uint32_t e = 0; e < dag->num_edges(); ++e) {
      CHECK(close(sf.edge_flow[e], sp.edge_flow[e], 1e-10));
    }
    CHECK(is_markovian(space, p, 1e-8).markovian);
  }
}

TEST_CASE("projection handles zero-flow trajectories", "[flow]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  // All mass on two trajectories; the other two (and edge 0->1) carry zero.
  TrajectoryFlow f = flow_by_sequence(space, {{{0, 2, 4}, 1.0}, {{0, 2, 3, 4}, 2.0}});
  TrajectoryFlow p = markovian_projection(space, f);
  CHECK(flow_value_at(space, p, {0, 1, 2, 4}) == 0.0);
  CHECK(flow_value_at(space, p, {0, 1, 2, 3, 4}) == 0.0);
  CHECK(is_markovian(space, p).markovian);
  FlowSummary sp = summarize(space, p);
  CHECK(edge_flow(sp, 0, 2) == Catch::Approx(3.0));
  CHECK(edge_flow(sp, 0, 1) == 0.0);
}

TEST_CASE("flow from Z and a forward policy", "[flow]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  TrajectoryFlow b = kite_flow_b(space);
  ForwardPolicy pf = summarize(space, b).forward_policy();
  TrajectoryFlow rebuilt = flow_from_forward(space, 5.0, pf);
  for (std::size_t i = 0; i < space.size(); ++i) {
    CHECK(close(rebuilt.values[i], b.values[i], 1e-12));
  }
  CHECK_THROWS(flow_from_forward(space, 0.0, pf));
}

TEST_CASE("flow from Z and a backward policy", "[flow]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  TrajectoryFlow b = kite_flow_b(space);
  BackwardPolicy pb = summarize(space, b).backward_policy();
  TrajectoryFlow rebuilt = flow_from_backward(space, 5.0, pb);
  for (std::size_t i = 0; i < space.size(); ++i) {
    CHECK(close(rebuilt.values[i], b.values[i], 1e-12));
  }
}

TEST_CASE("single-edge DAG with forced policy", "[flow]") {
  DagPtr dag = build_dag(2, {{0, 1}});
  TrajectorySpace space(dag);
  ForwardPolicy pf = ForwardPolicy::from_probs(dag, {1.0});
  TrajectoryFlow f = flow_from_forward(space, 3.0, pf);
  CHECK(f.values == std::vector<double>{3.0});
}

TEST_CASE("flow from terminating flows and an interior backward policy", "[flow]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);

  // Terminating flows {2 -> 2, 3 -> 3} and the backward conditionals of the
  // Markovian example flow.
  std::vector<double> term(dag->terminating_states().size());
  term[dag->terminating_index(2)] = 2.0;
  term[dag->terminating_index(3)] = 3.0;
  std::vector<double> back(dag->nonterminal_edges().size());
  back[dag->nonterminal_index(dag->edge_index(0, 1))] = 1.0;
  back[dag->nonterminal_index(dag->edge_index(0, 2))] = 2.0 / 5.0;
  back[dag->nonterminal_index(dag->edge_index(1, 2))] = 3.0 / 5.0;
  back[dag->nonterminal_index(dag->edge_index(2, 3))] = 1.0;

  TrajectoryFlow f = flow_from_terminating_and_backward(space, term, back);
  TrajectoryFlow b = kite_flow_b(space);
  for (std::size_t i = 0; i < space.size(); ++i) {
    CHECK(close(f.values[i], b.values[i], 1e-12));
  }

  SECTION("all-zero terminating flows are rejected") {
    std::vector<double> zeros(term.size(), 0.0);
    CHECK_THROWS_AS(flow_from_terminating_and_backward(space, zeros, back),
                    PolicyError);
  }
  SECTION("inconsistent backward table is rejected") {
    std::vector<double> broken = back;
    broken[dag->nonterminal_index(dag->edge_index(0, 2))] = 0.9;
    CHECK_THROWS_AS(flow_from_terminating_and_backward(space, term, broken),
                    PolicyError);
  }
}

TEST_CASE("markovian round-trip through summarize and rebuild", "[flow][property]") {
  Rng rng(37);
  for (int rep = 0; rep < 20; ++rep) {
    DagPtr dag = random_dag(rng, 4 + static_cast<std::uint32_t>(rng.below(7)));
    TrajectorySpace space(dag);
    ForwardPolicy pf = random_forward_policy(rng, dag);
    double z = 0.5 + 4.0 * rng.u01();
    TrajectoryFlow f = flow_from_forward(space, z, pf);
    FlowSummary s = summarize(space, f);
    CHECK(close(s.total_flow, z, 1e-10));
    TrajectoryFlow rebuilt = flow_from_forward(space, s.total_flow, s.forward_policy());
    for (std::size_t i = 0; i < space.size(); ++i) {
      CHECK(close(rebuilt.values[i], f.values[i], 1e-10));
    }
  }
}

TEST_CASE("terminating distribution sums to one and matches its definition",
          "[flow][property]") {
  Rng rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    DagPtr dag = random_dag(rng, 4 + static_cast<std::uint32_t>(rng.below(7)));
    TrajectorySpace space(dag);
    TrajectoryFlow f = random_flow(rng, space);
    FlowSummary s = summarize(space, f);
    double total = 0.0;
    for (double p : s.p_terminating) total += p;
    CHECK(close(total, 1.0, 1e-10));
    for (StateId t : dag->terminating_states()) {
      CHECK(close(s.p_terminating[dag->terminating_index(t)],
                  s.edge_flow[dag->edge_index(t, dag->sink())] / s.state_flow[0],
                  1e-12));
    }
  }
}

TEST_CASE("forward and backward factorizations agree for Markovian flows",
          "[flow][property]") {
  Rng rng(43);
  for (int rep = 0; rep < 15; ++rep) {
    DagPtr dag = random_dag(rng, 4 + static_cast<std::uint32_t>(rng.below(6)));
    TrajectorySpace space(dag);
    TrajectoryFlow f = flow_from_forward(space, 1.0 + rng.u01(),
                                         random_forward_policy(rng, dag));
    FlowSummary s = summarize(space, f);
    for (const Trajectory& t : space.trajectories()) {
      CHECK(close(forward_factorized_value(s, t), backward_factorized_value(s, t),
                  1e-9));
    }
  }
}

TEST_CASE("flow matching check", "[flow]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  FlowSummary s = summarize(space, kite_flow_a(space));

  CHECK(check_flow_matching(*dag, s.state_flow, s.edge_flow).ok);

  SECTION("perturbed state flow is localized") {
    std::vector<double> bad = s.state_flow;
    bad[2] = 5.1;  // true value 5 = 2 + 3
    ConditionCheck r = check_flow_matching(*dag, bad, s.edge_flow);
    CHECK_FALSE(r.ok);
    CHECK(r.worst_state == 2);
  }
  SECTION("any summarized random flow satisfies the conditions") {
    Rng rng(47);
    for (int rep = 0; rep < 10; ++rep) {
      FlowSummary rs = summarize(space, random_flow(rng, space));
      CHECK(check_flow_matching(*dag, rs.state_flow, rs.edge_flow).ok);
    }
  }
}

TEST_CASE("detailed balance check", "[flow]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  FlowSummary s = summarize(space, kite_flow_b(space));
  RewardFn reward = kite_reward();

  CHECK(check_detailed_balance(*dag, s.state_flow, s.p_forward, s.p_backward, reward)
            .ok);

  SECTION("perturbing one backward conditional is caught at that edge") {
    std::vector<double> bad = s.p_backward;
    const std::uint32_t e12 = dag->edge_index(1, 2);
    const std::uint32_t e02 = dag->edge_index(0, 2);
    bad[e12] += 0.1;
    bad[e02] -= 0.1;  // keep the row normalized
    ConditionCheck r =
        check_detailed_balance(*dag, s.state_flow, s.p_forward, bad, reward);
    CHECK_FALSE(r.ok);
    CHECK((r.worst_edge == e12 || r.worst_edge == e02));
  }
  SECTION("single-edge DAG with forced policies") {
    DagPtr tiny = build_dag(2, {{0, 1}});
    std::vector<double> sf{4.0, 4.0};
    std::vector<double> one{1.0};
    ConditionCheck r = check_detailed_balance(
        *tiny, sf, one, one, [](StateId) { return 4.0; });
    CHECK(r.ok);
  }
}

TEST_CASE("zero-flow states make strict policies unavailable", "[flow]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  // State 1 carries no flow.
  TrajectoryFlow f = flow_by_sequence(space, {{{0, 2, 4}, 1.0}, {{0, 2, 3, 4}, 2.0}});
  FlowSummary s = summarize(space, f);
  CHECK(std::isnan(s.p_forward[dag->edge_index(1, 2)]));
  CHECK_THROWS_AS(s.forward_policy(), ZeroStateFlowError);
  // Checks skip the undefined entries instead of failing on them.
  CHECK(check_flow_matching(*dag, s.state_flow, s.edge_flow).ok);
}

TEST_CASE("trajectory flow validation", "[flow]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  CHECK_THROWS(TrajectoryFlow::validated(space, {1.0, 2.0}));
  CHECK_THROWS(TrajectoryFlow::validated(space, {1.0, -0.5, 1.0, 1.0}));
  CHECK_THROWS(TrajectoryFlow::validated(space, {0.0, 0.0, 0.0, 0.0}));
}
