#include <catch2/catch_amalgamated.hpp>

#include "gfn/numeric.hpp"
#include "gfn/param.hpp"
#include "helpers.hpp"

using namespace gfn;
using namespace gfn::test;

TEST_CASE("edge-flow parameters induce the pinned-reward policy", "[param]") {
  // 0 -> a(1), a -> b(2), a -> sink, b -> sink; F(a->b) = 1, R(a) = 1.
  DagPtr dag = build_dag(4, {{0, 1}, {1, 2}, {1, 3}, {2, 3}});
  EdgeFlowParams p{dag, std::vector<double>(dag->nonterminal_edges().size(), 0.0)};
  RewardFn reward = [](StateId s) { return s == 1 ? 1.0 : 0.5; };

  ForwardPolicy pf = induced_forward_policy(p, reward);
  CHECK(pf.prob(dag->edge_index(1, 2)) == Catch::Approx(0.5));
  CHECK(pf.prob(dag->edge_index(1, 3)) == Catch::Approx(0.5));
  CHECK(pf.prob(dag->edge_index(0, 1)) == 1.0);  // single child
  CHECK(pf.prob(dag->edge_index(2, 3)) == 1.0);

  SECTION("reward handle is mandatory") {
    CHECK_THROWS_AS(induced_forward_policy(p, RewardFn{}), RewardUnavailable);
  }
}

TEST_CASE("uniform logits split evenly among children", "[param]") {
  DagPtr dag = kite_dag();
  Params p = default_params(dag, ParamKind::TrajectoryBalance);
  ForwardPolicy pf = induced_forward_policy(p);
  CHECK(pf.prob(dag->edge_index(0, 1)) == Catch::Approx(0.5));
  CHECK(pf.prob(dag->edge_index(0, 2)) == Catch::Approx(0.5));
  CHECK(pf.prob(dag->edge_index(1, 2)) == 1.0);
}

TEST_CASE("zero reward at a sink-only state falls back to the forced choice",
          "[param]") {
  DagPtr dag = build_dag(3, {{0, 1}, {1, 2}});
  EdgeFlowParams p{dag, std::vector<double>(dag->nonterminal_edges().size(), 0.0)};
  ForwardPolicy pf = induced_forward_policy(p, [](StateId) { return 0.0; });
  CHECK(pf.prob(dag->edge_index(1, 2)) == 1.0);
}

TEST_CASE("sampling follows a deterministic chain", "[param]") {
  DagPtr dag = build_dag(3, {{0, 1}, {1, 2}});
  Params p = default_params(dag, ParamKind::TrajectoryBalance);
  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    CHECK(sample_trajectory(p, {}, rng) == Trajectory{0, 1, 2});
  }
}

TEST_CASE("seeded sampling is reproducible bit for bit", "[param]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  Params p = params_from_summary(exact_flow_summary(space, kite_reward()),
                                 ParamKind::TrajectoryBalance);
  Rng a(99), b(99);
  for (int i = 0; i < 200; ++i) {
    CHECK(sample_trajectory(p, {}, a) == sample_trajectory(p, {}, b));
  }
}

TEST_CASE("sampling matches the exact terminating distribution", "[param][slow]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  FlowSummary s = summarize(space, kite_flow_b(space));
  ForwardPolicy pf = s.forward_policy();

  Rng rng(12345);
  const int n = 1'000'000;
  int hits2 = 0;
  for (int i = 0; i < n; ++i) {
    Trajectory t = sample_trajectory(pf, rng);
    if (t[t.size() - 2] == 2) ++hits2;
  }
  // Exact P_T(2) = 0.4; allow three binomial sigmas.
  const double sigma = std::sqrt(0.4 * 0.6 / n);
  CHECK(std::abs(hits2 / static_cast<double>(n) - 0.4) < 3.0 * sigma + 1e-12);
}

TEST_CASE("exact terminating distribution by dynamic programming", "[param]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  FlowSummary s = summarize(space, kite_flow_b(space));
  std::vector<double> p_t = terminating_distribution_exact(s.forward_policy());
  CHECK(p_t[dag->terminating_index(2)] == Catch::Approx(0.4).epsilon(1e-12));
  CHECK(p_t[dag->terminating_index(3)] == Catch::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("forced single path has a point-mass distribution", "[param]") {
  DagPtr dag = build_dag(3, {{0, 1}, {1, 2}});
  Params p = default_params(dag, ParamKind::Forward);
  std::vector<double> p_t = terminating_distribution_exact(p);
  CHECK(p_t == std::vector<double>{1.0});
}

TEST_CASE("DP distribution equals the enumeration route", "[param][property]") {
  Rng rng(53);
  for (int rep = 0; rep < 20; ++rep) {
    DagPtr dag = random_dag(rng, 4 + static_cast<std::uint32_t>(rng.below(7)));
    TrajectorySpace space(dag);
    ForwardPolicy pf = random_forward_policy(rng, dag);

    std::vector<double> dp = terminating_distribution_exact(pf);
    std::vector<double> brute(dag->terminating_states().size(), 0.0);
    for (const Trajectory& t : space.trajectories()) {
      brute[dag->terminating_index(t[t.size() - 2])] +=
          trajectory_probability_extension(pf, t);
    }
    for (std::size_t i = 0; i < dp.size(); ++i) {
      CHECK(close(dp[i], brute[i], 1e-10));
    }
    double total = 0.0;
    for (double v : dp) total += v;
    CHECK(close(total, 1.0, 1e-10));
  }
}

TEST_CASE("parametrization maps round-trip the example flow", "[param]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  TrajectoryFlow b = kite_flow_b(space);
  FlowSummary s = summarize(space, b);
  RewardFn reward = kite_reward();

  for (ParamKind kind : {ParamKind::EdgeFlow, ParamKind::Forward,
                         ParamKind::ForwardBackward, ParamKind::TrajectoryBalance}) {
    Params p = params_from_summary(s, kind);
    TrajectoryFlow rebuilt = to_markovian_flow(space, p, reward);
    for (std::size_t i = 0; i < space.size(); ++i) {
      INFO("kind " << to_string(kind));
      CHECK(close(rebuilt.values[i], b.values[i], 1e-10));
    }
  }
}

TEST_CASE("trajectory-balance parameters encode their own total flow", "[param]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  Rng rng(61);
  TrajectoryBalanceParams p{dag, 1.37, std::vector<double>(dag->num_edges()),
                            std::vector<double>(dag->nonterminal_edges().size()),
                            true};
  for (double& x : p.forward_logits) x = rng.normal();
  TrajectoryFlow f = to_markovian_flow(space, Params{p});
  FlowSummary s = summarize(space, f);
  CHECK(close(s.total_flow, std::exp(1.37), 1e-12));
}

TEST_CASE("distinct Markovian flows map to distinct parameters", "[param]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  FlowSummary sb = summarize(space, kite_flow_b(space));
  FlowSummary sd = summarize(space, kite_flow_d(space));

  for (ParamKind kind : {ParamKind::EdgeFlow, ParamKind::Forward,
                         ParamKind::ForwardBackward, ParamKind::TrajectoryBalance}) {
    Params pb = params_from_summary(sb, kind);
    Params pd = params_from_summary(sd, kind);
    bool all_equal = true;
    REQUIRE(parameter_count(pb) == parameter_count(pd));
    for (std::size_t i = 0; i < parameter_count(pb); ++i) {
      if (get_parameter(pb, i) != get_parameter(pd, i)) all_equal = false;
    }
    INFO("kind " << to_string(kind));
    CHECK_FALSE(all_equal);
  }
}

TEST_CASE("induced trajectory distribution equals F/Z", "[param][property]") {
  Rng rng(67);
  for (int rep = 0; rep < 10; ++rep) {
    DagPtr dag = random_dag(rng, 4 + static_cast<std::uint32_t>(rng.below(6)));
    TrajectorySpace space(dag);
    RewardFn reward = random_reward(rng, *dag);
    FlowSummary s = exact_flow_summary(space, reward);
    TrajectoryFlow f = flow_from_forward(space, s.total_flow, s.forward_policy());

    for (ParamKind kind : {ParamKind::EdgeFlow, ParamKind::Forward,
                           ParamKind::ForwardBackward, ParamKind::TrajectoryBalance}) {
      Params p = params_from_summary(s, kind);
      ForwardPolicy pf = induced_forward_policy(p, reward);
      for (std::size_t i = 0; i < space.size(); ++i) {
        CHECK(close(trajectory_probability_extension(pf, space[i]),
                    f.values[i] / s.total_flow, 1e-9));
      }
    }
  }
}

TEST_CASE("flat coordinate access covers every table", "[param]") {
  DagPtr dag = kite_dag();
  const std::size_t ne = dag->num_edges();
  const std::size_t nnt = dag->nonterminal_edges().size();
  const std::size_t ns = dag->num_states() - 1;

  Params edge = default_params(dag, ParamKind::EdgeFlow);
  CHECK(parameter_count(edge) == nnt);

  Params fwd = default_params(dag, ParamKind::Forward);
  CHECK(parameter_count(fwd) == ns + ne);

  Params fb_frozen = default_params(dag, ParamKind::ForwardBackward, true);
  CHECK(parameter_count(fb_frozen) == ns + ne);
  Params fb = default_params(dag, ParamKind::ForwardBackward, false);
  CHECK(parameter_count(fb) == ns + ne + nnt);

  Params tb = default_params(dag, ParamKind::TrajectoryBalance, false);
  CHECK(parameter_count(tb) == 1 + ne + nnt);

  for (std::size_t i = 0; i < parameter_count(tb); ++i) {
    set_parameter(tb, i, 0.25 * static_cast<double>(i));
  }
  for (std::size_t i = 0; i < parameter_count(tb); ++i) {
    CHECK(get_parameter(tb, i) == 0.25 * static_cast<double>(i));
  }
  CHECK(std::get<TrajectoryBalanceParams>(tb).log_z == 0.0);
  CHECK(std::get<TrajectoryBalanceParams>(tb).forward_logits[0] == 0.25);
}

TEST_CASE("parametrization maps require full support", "[param]") {
  DagPtr dag = kite_dag();
  TrajectorySpace space(dag);
  // Zero reward at state 2 kills the 2->sink edge flow.
  std::vector<double> term(dag->terminating_states().size(), 0.0);
  term[dag->terminating_index(3)] = 1.0;
  TrajectoryFlow f = flow_from_terminating_and_backward(
      space, term, uniform_backward_interior(*dag));
  FlowSummary s = summarize(space, f);
  CHECK_THROWS(params_from_summary(s, ParamKind::TrajectoryBalance));
}
