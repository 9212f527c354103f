#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "gfn/environments.hpp"
#include "gfn/errors.hpp"
#include "gfn/losses.hpp"
#include "gfn/param.hpp"
#include "gfn/random.hpp"

namespace gfn {

class EmptyDataset : public Error {
 public:
  EmptyDataset() : Error("training source has no data") {}
};

enum class OptimizerKind { Sgd, Adam };

struct TrainingConfig {
  LossSpec loss;
  std::uint64_t steps = 1000;
  std::uint32_t batch_size = 16;
  double learning_rate = 1e-2;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double exploration_epsilon = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t eval_every = 100;
  // log Z usually has to travel further than any logit; it gets its own
  // learning-rate multiplier.
  double logz_lr_multiplier = 10.0;
  // Applied to raw rewards before training and evaluation (identity if
  // empty); the target distribution is proportional to the transformed
  // reward.
  std::function<double(double)> reward_transform;
};

/// Where training trajectories come from (the training distribution).
struct OnPolicy {};
struct EpsilonUniformMix {
  double epsilon = 0.1;  // per-step probability of a uniform child
};
struct OfflineReplay {
  std::vector<Trajectory> trajectories;
};
/// Anchors trajectories at known terminating states by walking the backward
/// policy to the source. Data alone has no support guarantee; explore_mix
/// blends in epsilon-uniform on-policy rollouts to restore full support.
struct BackwardFromData {
  std::vector<StateId> states;
  double explore_mix = 0.0;
  double explore_epsilon = 0.1;
};

using TrainingSource =
    std::variant<OnPolicy, EpsilonUniformMix, OfflineReplay, BackwardFromData>;

namespace detail {

inline Trajectory rollout_epsilon_uniform(const ForwardPolicy& policy, double epsilon,
                                          Rng& rng) {
  const PointedDag& dag = policy.dag();
  Trajectory traj{dag.source()};
  std::vector<double> weights;
  while (traj.back() != dag.sink()) {
    auto edges = dag.out_edges(traj.back());
    std::uint32_t e;
    if (epsilon > 0.0 && rng.u01() < epsilon) {
      e = edges[rng.below(edges.size())];
    } else {
      weights.resize(edges.size());
      for (std::size_t i = 0; i < edges.size(); ++i) weights[i] = policy.prob(edges[i]);
      e = edges[rng.categorical(weights)];
    }
    traj.push_back(dag.edge(e).to);
  }
  return traj;
}

inline Trajectory walk_backward_from(const PointedDag& dag, StateId anchor,
                                     std::span<const double> backward_interior,
                                     Rng& rng) {
  Trajectory reversed{anchor};
  std::vector<double> weights;
  while (reversed.back() != dag.source()) {
    auto edges = dag.in_edges(reversed.back());
    weights.resize(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i) {
      weights[i] = backward_interior[dag.nonterminal_index(edges[i])];
    }
    reversed.push_back(dag.edge(edges[rng.categorical(weights)]).from);
  }
  Trajectory traj(reversed.rbegin(), reversed.rend());
  traj.push_back(dag.sink());
  return traj;
}

inline std::vector<double> backward_interior_of(const Params& params) {
  if (const auto* p = std::get_if<ForwardBackwardParams>(&params)) {
    return backward_interior_probs(*p);
  }
  if (const auto* p = std::get_if<TrajectoryBalanceParams>(&params)) {
    return backward_interior_probs(*p);
  }
  return uniform_backward_interior(dag_of(params));
}

}  // namespace detail

/// One trajectory from the training distribution. OnPolicy samples the
/// parameters' own policy; EpsilonUniformMix takes each forward step uniform
/// with probability epsilon; OfflineReplay replays a fixed list;
/// BackwardFromData anchors at a dataset terminating state and walks the
/// backward policy to the source.
inline Trajectory sample_training_trajectory(const TrainingSource& source,
                                             const Params& params,
                                             const ForwardPolicy& policy, Rng& rng) {
  if (std::holds_alternative<OnPolicy>(source)) {
    return sample_trajectory(policy, rng);
  }
  if (const auto* s = std::get_if<EpsilonUniformMix>(&source)) {
    return detail::rollout_epsilon_uniform(policy, s->epsilon, rng);
  }
  if (const auto* s = std::get_if<OfflineReplay>(&source)) {
    if (s->trajectories.empty()) throw EmptyDataset();
    return s->trajectories[rng.below(s->trajectories.size())];
  }
  const auto& s = std::get<BackwardFromData>(source);
  if (s.explore_mix > 0.0 && rng.u01() < s.explore_mix) {
    return detail::rollout_epsilon_uniform(policy, s.explore_epsilon, rng);
  }
  if (s.states.empty()) throw EmptyDataset();
  const PointedDag& dag = dag_of(params);
  const StateId anchor = s.states[rng.below(s.states.size())];
  if (!dag.is_terminating(anchor)) {
    throw Error("data state " + std::to_string(anchor) +
                " is not a terminating state");
  }
  if (anchor == dag.source()) return Trajectory{dag.source(), dag.sink()};
  return detail::walk_backward_from(dag, anchor,
                                    detail::backward_interior_of(params), rng);
}

inline Trajectory sample_training_trajectory(const TrainingSource& source,
                                             const Params& params,
                                             const RewardFn& reward, Rng& rng) {
  return sample_training_trajectory(source, params,
                                    induced_forward_policy(params, reward), rng);
}

struct EvalMetrics {
  std::vector<double> p_t;     // learned terminating distribution
  std::vector<double> target;  // R/Z
  double l1 = 0.0;
  double max_abs = 0.0;
  double kl = 0.0;  // KL(target || learned), over the target's support
  double logz_est = 0.0;
};

/// Exact comparison of the learned terminating distribution against R/Z.
inline EvalMetrics evaluate(const Params& params, const Environment& env,
                            const std::function<double(double)>& transform = {}) {
  RewardFn reward = env.reward;
  if (transform) {
    RewardFn base = env.reward;
    reward = [base, transform](StateId s) { return transform(base(s)); };
  }
  const PointedDag& dag = dag_of(params);
  EvalMetrics m;
  m.p_t = terminating_distribution_exact(params, reward);
  m.target.resize(dag.terminating_states().size());
  double z = 0.0;
  for (StateId t : dag.terminating_states()) {
    m.target[dag.terminating_index(t)] = reward(t);
    z += reward(t);
  }
  for (double& v : m.target) v /= z;
  for (std::size_t i = 0; i < m.p_t.size(); ++i) {
    const double d = std::abs(m.p_t[i] - m.target[i]);
    m.l1 += d;
    m.max_abs = std::max(m.max_abs, d);
    if (m.target[i] > 0.0 && m.p_t[i] > 0.0) {
      m.kl += m.target[i] * std::log(m.target[i] / m.p_t[i]);
    } else if (m.target[i] > 0.0) {
      m.kl = HUGE_VAL;
    }
  }
  m.logz_est = std::log(z_equivalent(params, reward));
  return m;
}

struct EvalRecord {
  std::uint64_t step = 0;
  double loss_mean = 0.0;  // batch-mean unit loss at this step
  double l1 = 0.0;
  double max_abs = 0.0;
  double kl = 0.0;
  double logz_est = 0.0;
  std::uint64_t wall_ms = 0;
};

struct TrainingReport {
  std::vector<double> loss_curve;  // batch-mean unit loss per step
  std::vector<EvalRecord> evals;
  std::uint64_t zero_reward_skipped = 0;  // TB units dropped for R = 0
};

namespace detail {

struct Optimizer {
  OptimizerKind kind;
  double lr, beta1, beta2, eps;
  std::vector<double> lr_scale;  // per coordinate
  std::vector<double> m, v;
  std::uint64_t t = 0;

  Optimizer(const TrainingConfig& cfg, const Params& params)
      : kind(cfg.optimizer),
        lr(cfg.learning_rate),
        beta1(cfg.beta1),
        beta2(cfg.beta2),
        eps(cfg.adam_epsilon),
        lr_scale(parameter_count(params), 1.0),
        m(parameter_count(params), 0.0),
        v(parameter_count(params), 0.0) {
    if (kind_of(params) == ParamKind::TrajectoryBalance) {
      lr_scale[0] = cfg.logz_lr_multiplier;
    }
  }

  void step(Params& params, std::span<const double> grad) {
    ++t;
    if (kind == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < grad.size(); ++i) {
        set_parameter(params, i,
                      get_parameter(params, i) - lr * lr_scale[i] * grad[i]);
      }
      return;
    }
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < grad.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
      set_parameter(params, i, get_parameter(params, i) - lr * lr_scale[i] * update);
    }
  }
};

}  // namespace detail

/// Stochastic-gradient minimization of the configured loss against the
/// environment's reward. Mutates `params` in place and reports the loss
/// curve plus periodic exact evaluations. Bit-reproducible for a fixed
/// config and seed.
inline TrainingReport train(const Environment& env, Params& params,
                            const TrainingConfig& config,
                            const TrainingSource& source = OnPolicy{}) {
  require_compatible(params, config.loss);
  if (dag_of(params).hash() != env.dag->hash()) {
    throw Error("parameters were built for a different DAG than the environment");
  }
  const PointedDag& dag = *env.dag;

  RewardFn reward = env.reward;
  if (config.reward_transform) {
    RewardFn base = env.reward;
    auto transform = config.reward_transform;
    reward = [base, transform](StateId s) { return transform(base(s)); };
  }
  const bool stochastic_reward = static_cast<bool>(env.reward_sampler);
  auto sampled_reward = [&](StateId s, Rng& rng) {
    double r = env.sample_reward(s, rng);
    return config.reward_transform ? config.reward_transform(r) : r;
  };

  Rng rng(config.seed);
  detail::Optimizer opt(config, params);
  TrainingReport report;
  report.loss_curve.reserve(config.steps);
  std::vector<double> grad(parameter_count(params), 0.0);
  std::vector<Trajectory> batch(config.batch_size);
  const auto started = std::chrono::steady_clock::now();

  for (std::uint64_t step = 1; step <= config.steps; ++step) {
    const ForwardPolicy policy = induced_forward_policy(params, reward);
    for (std::uint32_t b = 0; b < config.batch_size; ++b) {
      batch[b] = sample_training_trajectory(source, params, policy, rng);
    }

    std::fill(grad.begin(), grad.end(), 0.0);
    double loss_sum = 0.0;
    std::uint64_t units = 0;

    switch (config.loss.kind) {
      case LossKind::FlowMatching: {
        const auto& p = std::get<EdgeFlowParams>(params);
        for (const Trajectory& traj : batch) {
          for (std::size_t i = 1; i + 1 < traj.size(); ++i) {
            loss_sum += fm_loss_at_state(p, reward, traj[i], config.loss.delta);
            accumulate_fm_gradient(p, reward, traj[i], config.loss.delta, 1.0, grad);
            ++units;
          }
        }
        break;
      }
      case LossKind::DetailedBalance: {
        const auto& p = std::get<ForwardBackwardParams>(params);
        const PolicyTables tables = make_policy_tables(p);
        for (const Trajectory& traj : batch) {
          for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
            const std::uint32_t e = dag.edge_index(traj[i], traj[i + 1]);
            loss_sum += db_loss_at_edge(p, tables, reward, e, config.loss.delta);
            accumulate_db_gradient(p, tables, reward, e, config.loss.delta, 1.0,
                                   grad);
            ++units;
          }
        }
        break;
      }
      case LossKind::TrajectoryBalance: {
        const auto& p = std::get<TrajectoryBalanceParams>(params);
        const PolicyTables tables = make_policy_tables(p);
        for (const Trajectory& traj : batch) {
          const StateId terminal = traj[traj.size() - 2];
          const double r =
              stochastic_reward ? sampled_reward(terminal, rng) : reward(terminal);
          if (!(r > 0.0)) {
            ++report.zero_reward_skipped;
            continue;
          }
          loss_sum += tb_loss_at_trajectory(p, tables, r, traj);
          accumulate_tb_gradient(p, tables, r, traj, 1.0, grad);
          ++units;
        }
        break;
      }
    }

    const double loss_mean = units ? loss_sum / static_cast<double>(units) : 0.0;
    report.loss_curve.push_back(loss_mean);
    if (!std::isfinite(loss_mean)) {
      throw TrainingError(step, "non-finite batch loss " + std::to_string(loss_mean));
    }
    if (units) {
      const double inv = 1.0 / static_cast<double>(units);
      for (double& g : grad) {
        g *= inv;
        if (!std::isfinite(g)) {
          throw TrainingError(step, "non-finite gradient");
        }
      }
      opt.step(params, grad);
    } else {
      opt.t++;  // keep schedules aligned even for all-skipped batches
    }

    const bool eval_now = (config.eval_every && step % config.eval_every == 0) ||
                          step == config.steps;
    if (eval_now) {
      EvalMetrics m = evaluate(params, env, config.reward_transform);
      const auto elapsed = std::chrono::steady_clock::now() - started;
      report.evals.push_back(EvalRecord{
          step, loss_mean, m.l1, m.max_abs, m.kl, m.logz_est,
          static_cast<std::uint64_t>(
              std::chrono::duration_cast<std::chrono::milliseconds>(elapsed)
                  .count())});
    }
  }
  if (report.evals.empty()) {  // steps == 0: still report where we stand
    EvalMetrics m = evaluate(params, env, config.reward_transform);
    report.evals.push_back(EvalRecord{0, 0.0, m.l1, m.max_abs, m.kl, m.logz_est, 0});
  }
  return report;
}

}  // namespace gfn
