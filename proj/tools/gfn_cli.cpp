// Batch front end: build environments, verify exact flows, train
// parametrizations, and analyze results against brute-force targets.
//
// Exit codes: 0 all checks passed, 1 a check failed, 2 usage/parse errors.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gfn/gfn.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

struct CheckList {
  json checks = json::array();
  bool all_passed = true;

  void add(const std::string& name, bool pass, const std::string& detail = "") {
    json c;
    c["name"] = name;
    c["pass"] = pass;
    if (!detail.empty()) c["detail"] = detail;
    checks.push_back(c);
    all_passed = all_passed && pass;
  }
};

json summary_to_json(const gfn::FlowSummary& s, const gfn::Environment& env) {
  json out;
  out["total_flow"] = s.total_flow;
  out["state_flow"] = s.state_flow;
  json edges = json::array();
  for (std::uint32_t e = 0; e < env.dag->num_edges(); ++e) {
    json row;
    row["from"] = env.dag->edge(e).from;
    row["to"] = env.dag->edge(e).to;
    row["flow"] = s.edge_flow[e];
    edges.push_back(row);
  }
  out["edge_flow"] = edges;
  json pt = json::array();
  for (gfn::StateId t : env.dag->terminating_states()) {
    json row;
    row["state"] = t;
    row["label"] = env.label ? env.label(t) : std::to_string(t);
    row["p"] = s.p_terminating[env.dag->terminating_index(t)];
    pt.push_back(row);
  }
  out["p_terminating"] = pt;
  return out;
}

gfn::Environment environment_from_inputs(const std::string& dag_path,
                                         const std::string& config_path) {
  if (!dag_path.empty()) {
    return gfn::load_dag_file(dag_path).to_environment();
  }
  return gfn::load_experiment(config_path).env;
}

int cmd_verify(const std::string& dag_path, const std::string& config_path,
               const std::string& flow_path, bool require_markovian, double tol,
               std::uint64_t cap) {
  gfn::Environment env;
  bool has_target_rewards = true;
  if (!dag_path.empty()) {
    gfn::DagFile file = gfn::load_dag_file(dag_path);
    has_target_rewards = file.has_rewards;
    env = file.to_environment();
  } else {
    env = gfn::load_experiment(config_path).env;
  }
  json report;
  report["input"] = dag_path.empty() ? config_path : dag_path;
  CheckList checks;

  gfn::TrajectorySpace space(env.dag, cap);
  checks.add("enumerable", true,
             std::to_string(space.size()) + " complete trajectories");

  // The flow under test: supplied per trajectory, or constructed from the
  // terminal rewards with the uniform backward policy.
  gfn::TrajectoryFlow flow{{}};
  if (!flow_path.empty()) {
    flow = gfn::load_flow_file(flow_path, space);
    report["flow"] = flow_path;
  } else {
    flow = [&] {
      std::vector<double> term(env.dag->terminating_states().size());
      for (gfn::StateId t : env.dag->terminating_states()) {
        term[env.dag->terminating_index(t)] = env.reward(t);
      }
      return gfn::flow_from_terminating_and_backward(
          space, term, gfn::uniform_backward_interior(*env.dag));
    }();
    report["flow"] = "derived-from-rewards";
  }

  gfn::FlowSummary s = gfn::summarize(space, flow);
  report["summary"] = summary_to_json(s, env);

  double pt_total = 0.0;
  for (double p : s.p_terminating) pt_total += p;
  checks.add("terminating-distribution-normalized", gfn::close(pt_total, 1.0, tol),
             "sum = " + gfn::format_double(pt_total));

  gfn::ConditionCheck fm =
      gfn::check_flow_matching(*env.dag, s.state_flow, s.edge_flow, tol);
  checks.add("flow-matching", fm.ok,
             fm.ok ? "" : fm.detail + " (violation " +
                              gfn::format_double(fm.worst_violation) + ")");

  // Detailed balance against the declared rewards when present, otherwise
  // against the flow's own terminating flows (internal consistency only).
  gfn::RewardFn db_reward = env.reward;
  if (!has_target_rewards) {
    const gfn::PointedDag& dag = *env.dag;
    auto term = std::make_shared<std::vector<double>>(dag.num_states(), 0.0);
    for (gfn::StateId t : dag.terminating_states()) {
      (*term)[t] = s.edge_flow[dag.edge_index(t, dag.sink())];
    }
    db_reward = [term](gfn::StateId t) { return (*term)[t]; };
  }
  gfn::ConditionCheck db = gfn::check_detailed_balance(
      *env.dag, s.state_flow, s.p_forward, s.p_backward, db_reward, tol);
  checks.add("detailed-balance", db.ok,
             db.ok ? "" : db.detail + " (violation " +
                              gfn::format_double(db.worst_violation) + ")");

  gfn::MarkovCheck mk = gfn::is_markovian(space, flow, tol);
  report["markovian"] = mk.markovian;
  if (!mk.markovian) {
    json w;
    w["trajectory"] = *mk.witness;
    w["flow"] = mk.flow_value;
    w["factorized"] = mk.factorized_value;
    report["markov_witness"] = w;
  }
  if (require_markovian) {
    checks.add("markovian", mk.markovian,
               mk.markovian ? "" : "trajectory flow deviates from Z*prod(P_F)");
  }

  gfn::TrajectoryFlow projected = gfn::markovian_projection(space, flow);
  gfn::FlowSummary sp = gfn::summarize(space, projected);
  bool edges_preserved = true;
  for (std::uint32_t e = 0; e < env.dag->num_edges(); ++e) {
    edges_preserved =
        edges_preserved && gfn::close(sp.edge_flow[e], s.edge_flow[e], tol);
  }
  checks.add("projection-preserves-edge-flows", edges_preserved);
  checks.add("projection-markovian",
             gfn::is_markovian(space, projected, tol).markovian);

  try {
    gfn::ForwardPolicy pf = s.forward_policy();
    double total = 0.0;
    for (const gfn::Trajectory& t : space.trajectories()) {
      total += gfn::trajectory_probability_extension(pf, t);
    }
    checks.add("forward-extension-normalized", gfn::close(total, 1.0, tol),
               "sum over trajectories = " + gfn::format_double(total));
  } catch (const gfn::ZeroStateFlowError& e) {
    checks.add("forward-extension-normalized", true,
               std::string("skipped: ") + e.what());
  }

  report["checks"] = checks.checks;
  report["pass"] = checks.all_passed;
  std::cout << report.dump(2) << "\n";
  return checks.all_passed ? kExitOk : kExitCheckFailed;
}

int cmd_enumerate(const std::string& dag_path, const std::string& config_path,
                  std::uint64_t cap) {
  gfn::Environment env = environment_from_inputs(dag_path, config_path);
  std::vector<gfn::Trajectory> trajs =
      gfn::enumerate_complete_trajectories(*env.dag, cap);
  std::cout << "count " << trajs.size() << "\n";
  for (const gfn::Trajectory& t : trajs) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      std::cout << (i ? " " : "") << t[i];
    }
    std::cout << "\n";
  }
  return kExitOk;
}

void write_report_jsonl(const std::string& path, const gfn::TrainingReport& report,
                        bool timings) {
  std::ofstream out(path);
  if (!out) throw gfn::ParseError("cannot write '" + path + "'");
  for (const gfn::EvalRecord& r : report.evals) {
    json line;
    line["step"] = r.step;
    line["loss_mean"] = r.loss_mean;
    line["l1"] = r.l1;
    line["kl"] = r.kl;
    line["logZ_est"] = r.logz_est;
    if (timings) line["wall_ms"] = r.wall_ms;
    out << line.dump() << "\n";
  }
}

int run_one_training(const gfn::Experiment& ex, std::uint64_t seed,
                     const fs::path& out_dir) {
  gfn::TrainingConfig cfg = ex.training;
  cfg.seed = seed;
  gfn::Params params = ex.make_params();
  gfn::TrainingReport report = gfn::train(ex.env, params, cfg, ex.source);

  fs::create_directories(out_dir);
  write_report_jsonl((out_dir / "report.jsonl").string(), report, ex.timings);
  gfn::save_checkpoint((out_dir / "checkpoint.gfn").string(), params);

  const gfn::EvalRecord& last = report.evals.back();
  std::cout << "seed " << seed << ": steps " << last.step << ", loss_mean "
            << gfn::format_double(last.loss_mean) << ", l1 "
            << gfn::format_double(last.l1) << ", logZ_est "
            << gfn::format_double(last.logz_est) << "\n";
  if (report.zero_reward_skipped) {
    std::cout << "  skipped " << report.zero_reward_skipped
              << " zero-reward trajectories\n";
  }
  return kExitOk;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out_override, unsigned jobs) {
  gfn::Experiment ex = gfn::load_experiment(config_path);
  const std::uint64_t base_seed = seed.value_or(ex.training.seed);
  const fs::path out_dir = out_override.empty() ? ex.out_dir : out_override;

  if (jobs <= 1) {
    return run_one_training(ex, base_seed, out_dir);
  }
  // Independent seeds fan out to their own subdirectories.
  std::vector<std::thread> workers;
  std::vector<int> results(jobs, kExitOk);
  std::vector<std::string> errors(jobs);
  for (unsigned j = 0; j < jobs; ++j) {
    workers.emplace_back([&, j] {
      try {
        results[j] = run_one_training(ex, base_seed + j,
                                      out_dir / ("seed_" + std::to_string(base_seed + j)));
      } catch (const std::exception& e) {
        results[j] = kExitCheckFailed;
        errors[j] = e.what();
      }
    });
  }
  for (std::thread& w : workers) w.join();
  for (unsigned j = 0; j < jobs; ++j) {
    if (results[j] != kExitOk) {
      std::cerr << "seed " << base_seed + j << " failed: " << errors[j] << "\n";
      return results[j];
    }
  }
  return kExitOk;
}

int cmd_analyze(const std::string& config_path, const std::string& checkpoint_path,
                const std::string& out_override) {
  gfn::Experiment ex = gfn::load_experiment(config_path);
  gfn::Params params = gfn::load_checkpoint(checkpoint_path, ex.env.dag);

  gfn::RewardFn reward = ex.env.reward;
  if (ex.training.reward_transform) {
    gfn::RewardFn base = ex.env.reward;
    auto t = ex.training.reward_transform;
    reward = [base, t](gfn::StateId s) { return t(base(s)); };
  }
  gfn::Environment env = ex.env;
  env.reward = reward;

  gfn::EvalMetrics m = gfn::evaluate(params, env);
  json out;
  out["environment"] = env.name;
  out["num_states"] = env.dag->num_states();
  out["num_edges"] = env.dag->num_edges();
  out["parametrization"] = gfn::to_string(gfn::kind_of(params));
  out["logZ_target"] = std::log(env.reward_total());
  out["logZ_est"] = m.logz_est;
  out["l1"] = m.l1;
  out["max_abs"] = m.max_abs;
  out["kl"] = m.kl;

  std::cout << "terminating distribution (learned vs target):\n";
  json pt = json::array();
  for (gfn::StateId t : env.dag->terminating_states()) {
    const std::uint32_t i = env.dag->terminating_index(t);
    json row;
    row["state"] = t;
    row["label"] = env.label ? env.label(t) : std::to_string(t);
    row["p_t"] = m.p_t[i];
    row["target"] = m.target[i];
    pt.push_back(row);
    std::cout << "  " << (env.label ? env.label(t) : std::to_string(t)) << ": "
              << gfn::format_double(m.p_t[i]) << " vs "
              << gfn::format_double(m.target[i]) << "\n";
  }
  out["p_t"] = pt;
  std::cout << "l1 " << gfn::format_double(m.l1) << ", kl "
            << gfn::format_double(m.kl) << ", logZ_est "
            << gfn::format_double(m.logz_est) << "\n";

  double learned_entropy = 0.0;
  for (double p : m.p_t) {
    if (p > 0.0) learned_entropy -= p * std::log(p);
  }
  out["entropy_learned"] = learned_entropy;

  if (ex.analysis.free_energy) {
    gfn::FreeEnergyTable fe = gfn::free_energy_table(env);
    out["marginal"] = fe.marginal;
    out["free_energy"] = fe.free_energy;
  }
  if (ex.analysis.entropy) {
    try {
      out["entropy_target"] = gfn::entropy_estimate(env);
    } catch (const gfn::AnalysisError&) {
      out["entropy_target"] = nullptr;  // rewards not in (0,1); keep reporting
    }
  }
  if (ex.analysis.expected_reward) {
    out["expected_reward"] = gfn::expected_reward(env, env.dag->source());
    out["value_table"] = gfn::expected_reward_table(env);
    std::cout << "expected terminal reward from source: "
              << gfn::format_double(out["expected_reward"].get<double>()) << "\n";
  }
  if (ex.analysis.greedy) {
    auto [terminal, r] = gfn::greedy_rollout(env);
    json g;
    g["choice"] = gfn::greedy_policy(env);
    g["terminal"] = terminal;
    g["terminal_label"] = env.label ? env.label(terminal) : std::to_string(terminal);
    g["reward"] = r;
    out["greedy"] = g;
    std::cout << "greedy rollout terminates at "
              << (env.label ? env.label(terminal) : std::to_string(terminal))
              << " with reward " << gfn::format_double(r) << "\n";
  }

  const fs::path out_dir = out_override.empty() ? ex.out_dir : out_override;
  fs::create_directories(out_dir);
  std::ofstream file(out_dir / "analysis.json");
  if (!file) throw gfn::ParseError("cannot write analysis.json");
  file << out.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete flow-network engine and trainer"};
  app.require_subcommand(1);

  std::string dag_path, config_path, flow_path, checkpoint_path, out_dir;
  bool require_markovian = false;
  double tol = 1e-9;
  std::uint64_t cap = gfn::kDefaultEnumerationCap;
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;

  CLI::App* verify = app.add_subcommand("verify", "check exact-flow properties");
  verify->add_option("--dag", dag_path, "explicit DAG file");
  verify->add_option("--config", config_path, "experiment config");
  verify->add_option("--flow", flow_path, "per-trajectory flow values");
  verify->add_flag("--require-markovian", require_markovian,
                   "fail when the flow is not Markovian");
  verify->add_option("--tol", tol, "comparison tolerance");
  verify->add_option("--cap", cap, "enumeration cap");

  CLI::App* enumerate = app.add_subcommand("enumerate", "list complete trajectories");
  enumerate->add_option("--dag", dag_path, "explicit DAG file");
  enumerate->add_option("--config", config_path, "experiment config");
  enumerate->add_option("--cap", cap, "enumeration cap");

  CLI::App* train = app.add_subcommand("train", "train a parametrization");
  train->add_option("--config", config_path, "experiment config")->required();
  train->add_option("--seed", seed, "override the config seed");
  train->add_option("--out", out_dir, "override the output directory");
  train->add_option("--jobs", jobs, "fan out N independent seeds");

  CLI::App* analyze = app.add_subcommand("analyze", "report metrics for a checkpoint");
  analyze->add_option("--config", config_path, "experiment config")->required();
  analyze->add_option("--checkpoint", checkpoint_path, "trained checkpoint")
      ->required();
  analyze->add_option("--out", out_dir, "override the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (verify->parsed() || enumerate->parsed()) {
      if (dag_path.empty() == config_path.empty()) {
        std::cerr << "give exactly one of --dag or --config\n";
        return kExitUsage;
      }
    }
    if (verify->parsed()) {
      return cmd_verify(dag_path, config_path, flow_path, require_markovian, tol, cap);
    }
    if (enumerate->parsed()) {
      return cmd_enumerate(dag_path, config_path, cap);
    }
    if (train->parsed()) {
      return cmd_train(config_path, seed, out_dir, jobs);
    }
    return cmd_analyze(config_path, checkpoint_path, out_dir);
  } catch (const gfn::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const gfn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}
