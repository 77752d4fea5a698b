#pragma once

#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "sfm/actor.hpp"
#include "sfm/demos.hpp"
#include "sfm/env.hpp"
#include "sfm/features.hpp"
#include "sfm/replay.hpp"
#include "sfm/sf_net.hpp"
#include "sfm/witness.hpp"

namespace sfm {

struct TrainerConfig {
  int64_t steps = 60000;
  int64_t warmup_steps = 1000;
  int batch_size = 256;
  size_t buffer_capacity = 100000;
  double gamma = 0.99;
  double lr_actor = 5e-4;
  double lr_sf = 5e-4;
  double lr_features = 5e-4;
  double action_noise = 0.1;
  double target_noise = 0.2;
  double target_noise_clip = 0.5;
  int hidden = 64;
  int features_dim = 32;
  FeatureKind features_kind = FeatureKind::Fdm;
  ActorKind actor_kind = ActorKind::Deterministic;
  SfMode sf_mode = SfMode::Td7;
  int update_interval = 250;
  double polyak_alpha = 0.995;
  double entropy_coeff = 1e-3;
  double feature_tau = 0.9;
  double ema_rate = 0.01;
  bool witness_normalize = false;
  double witness_bound = 1.0;
  int64_t eval_interval = 2000;
  int eval_episodes = 10;
  int norm_episodes = 30;  // episodes for the random/expert normalization constants
};

struct MetricsRow {
  int64_t step = 0;
  double episode_return = 0.0;
  double normalized_return = 0.0;
  double feature_gap = 0.0;
  double sf_td_loss = 0.0;
  double feature_loss = 0.0;
  double witness_norm = 0.0;
  double checkpoint_score = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "step,episode_return,normalized_return,feature_gap,sf_td_loss,feature_loss,witness_norm,"
    "checkpoint_score";

inline void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open metrics file for writing: " + path);
  std::fprintf(f, "%s\n", kMetricsHeader);
  for (const auto& r : rows)
    std::fprintf(f, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                 static_cast<long long>(r.step), r.episode_return, r.normalized_return,
                 r.feature_gap, r.sf_td_loss, r.feature_loss, r.witness_norm,
                 r.checkpoint_score);
  std::fclose(f);
}

struct TrainState {
  int64_t step = 0;
  std::unique_ptr<FeatureLearner> features;
  std::unique_ptr<SfEstimator> sf;
  std::unique_ptr<Policy> actor;
  ActorKind actor_kind = ActorKind::Deterministic;
  ExpertSfTracker tracker;
  Vector best_actor_params;
  double best_checkpoint_score = -std::numeric_limits<double>::infinity();
};

struct TrainResult {
  TrainState state;
  std::vector<MetricsRow> metrics;
  double expert_return = 0.0;
  double random_return = 0.0;
  // the delivered policy is the best checkpoint, per the proxy score
  double best_checkpoint_return = 0.0;
  double best_checkpoint_normalized_return = 0.0;
};

struct TrainHooks {
  std::function<void(const char*)> trace;  // per-event call-order probe
  std::function<void(const MetricsRow&)> on_eval;
};

class TrainAbort : public NumericError {
 public:
  TrainAbort(int64_t step, const std::string& what, std::string dump)
      : NumericError("training aborted at step " + std::to_string(step) + ": " + what),
        step_(step), dump_(std::move(dump)) {}
  int64_t step() const { return step_; }
  const std::string& state_dump() const { return dump_; }

 private:
  int64_t step_;
  std::string dump_;
};

inline double evaluate_return(const ContinuousEnv& env, const Policy& policy, int n_episodes,
                              uint64_t seed) {
  if (n_episodes < 1) throw std::invalid_argument("evaluate: need at least one episode");
  Rng rng(seed);
  double sum = 0.0;
  for (int e = 0; e < n_episodes; ++e)
    sum += rollout_episode(env, policy, rng, /*state_only=*/true).episode_return;
  return sum / n_episodes;
}

inline double normalize_return(double ret, double random_return, double expert_return) {
  const double span = expert_return - random_return;
  if (std::abs(span) < 1e-12) return 0.0;
  return (ret - random_return) / span;
}

// Negative MSE between the agent's rollout feature sums and the expert's
// expected SF; the reward-free proxy used to pick the best checkpoint.
inline double checkpoint_score(const ContinuousEnv& env, const Policy& actor,
                               const FeatureLearner& features, const Vector& expert_sf,
                               double gamma, int n_episodes, uint64_t seed) {
  if (n_episodes < 1) throw std::invalid_argument("checkpoint_score: need at least one episode");
  Rng rng(seed);
  Vector mean_sf = Vector::Zero(features.dim());
  for (int e = 0; e < n_episodes; ++e) {
    const auto ep = rollout_episode(env, actor, rng, /*state_only=*/true, /*explore=*/false,
                                    /*query_reward=*/false);
    mean_sf += expert_sf_from_demos({ep.trajectory}, features, gamma);
  }
  mean_sf /= n_episodes;
  return -(mean_sf - expert_sf).squaredNorm();
}

// Supervised reference learner: regresses demo actions on demo states.
inline double bc_train(const std::vector<Trajectory>& demos, Mlp& net, AdamState& opt,
                       int epochs, int batch_size, uint64_t seed) {
  std::vector<std::pair<const Vector*, const Vector*>> pairs;
  for (const auto& traj : demos) {
    if (traj.state_only()) throw std::invalid_argument("actions required");
    for (size_t t = 0; t < traj.actions.size(); ++t)
      pairs.emplace_back(&traj.states[t], &traj.actions[t]);
  }
  if (pairs.empty()) throw std::invalid_argument("bc_train: no transitions in demos");
  Rng rng(seed);
  double last_loss = 0.0;
  std::vector<int> order(pairs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(i + 1)]);
    for (size_t start = 0; start < order.size(); start += batch_size) {
      const size_t n = std::min<size_t>(batch_size, order.size() - start);
      Matrix s(n, net.in_dim()), a(n, net.out_dim());
      for (size_t i = 0; i < n; ++i) {
        s.row(i) = pairs[order[start + i]].first->transpose();
        a.row(i) = pairs[order[start + i]].second->transpose();
      }
      MlpWorkspace ws;
      const Matrix pred = forward_batch(net, s, &ws);
      const Matrix err = pred - a;
      last_loss = err.squaredNorm() / n;
      adam_step(opt, net.params, backward_batch(net, ws, 2.0 * err / n).param_grad);
    }
  }
  return last_loss;
}

namespace detail {

inline std::unique_ptr<Policy> make_actor(ActorKind kind, int state_dim, int action_dim,
                                          const ActorSettings& cfg, uint64_t seed) {
  if (kind == ActorKind::Deterministic)
    return std::make_unique<DeterministicActor>(state_dim, action_dim, cfg, seed);
  return std::make_unique<GaussianActor>(state_dim, action_dim, cfg, seed);
}

inline Vector actor_params(const Policy& actor, ActorKind kind) {
  if (kind == ActorKind::Deterministic)
    return static_cast<const DeterministicActor&>(actor).net().params;
  const auto& g = static_cast<const GaussianActor&>(actor);
  Vector v(g.mean_net().params.size() + g.std_net().params.size());
  v << g.mean_net().params, g.std_net().params;
  return v;
}

inline void set_actor_params(Policy& actor, ActorKind kind, const Vector& v) {
  if (kind == ActorKind::Deterministic) {
    static_cast<DeterministicActor&>(actor).mutable_net().params = v;
    return;
  }
  auto& g = static_cast<GaussianActor&>(actor);
  g.mutable_mean_net().params = v.head(g.mean_net().params.size());
  g.mutable_std_net().params = v.tail(g.std_net().params.size());
}

}  // namespace detail

// Algorithm: per environment step (post warmup) run, in order: expert-SF EMA
// update, independent minibatch draws D and D', SF TD update on D, witness
// estimate from D', actor policy-gradient step on D with the witness frozen,
// and one base-feature step on D. Fully deterministic given (config, seed).
inline TrainResult train(const ContinuousEnv& env, const DemoSet& demos,
                         const TrainerConfig& cfg, uint64_t seed,
                         const TrainHooks& hooks = {}) {
  if (demos.env_name != env.name())
    throw std::invalid_argument("demo/env mismatch: demos recorded on '" + demos.env_name +
                                "', training on '" + env.name() + "'");
  if (demos.trajectories.empty()) throw std::invalid_argument("train: demo file has no trajectories");
  for (const auto& t : demos.trajectories)
    if (t.states.empty() || t.states[0].size() != env.state_dim())
      throw std::invalid_argument("demo/env mismatch: state dimension");

  const auto trace = [&](const char* ev) {
    if (hooks.trace) hooks.trace(ev);
  };

  TrainResult result;
  TrainState& st = result.state;
  st.actor_kind = cfg.actor_kind;

  FeatureSettings fcfg;
  fcfg.dim = cfg.features_dim;
  fcfg.hidden = cfg.hidden;
  fcfg.lr = cfg.lr_features;
  fcfg.expectile_tau = cfg.feature_tau;
  fcfg.gamma = cfg.gamma;
  st.features = std::make_unique<FeatureLearner>(cfg.features_kind, env.state_dim(),
                                                 env.action_dim(), fcfg,
                                                 Rng::derive_seed(seed, 11));
  SfSettings scfg;
  scfg.dim = cfg.features_dim;
  scfg.hidden = cfg.hidden;
  scfg.lr = cfg.lr_sf;
  scfg.mode = cfg.sf_mode;
  scfg.update_interval = cfg.update_interval;
  scfg.polyak_alpha = cfg.polyak_alpha;
  scfg.target_noise = cfg.target_noise;
  scfg.target_noise_clip = cfg.target_noise_clip;
  st.sf = std::make_unique<SfEstimator>(env.state_dim(), env.action_dim(), scfg,
                                        Rng::derive_seed(seed, 12));
  ActorSettings acfg;
  acfg.hidden = cfg.hidden;
  acfg.lr = cfg.lr_actor;
  acfg.exploration_noise = cfg.action_noise;
  acfg.entropy_coeff = cfg.entropy_coeff;
  st.actor = detail::make_actor(cfg.actor_kind, env.state_dim(), env.action_dim(), acfg,
                                Rng::derive_seed(seed, 13));
  st.tracker.ema_rate = cfg.ema_rate;
  st.tracker.gamma = cfg.gamma;

  ReplayBuffer buffer(cfg.buffer_capacity, Rng::derive_seed(seed, 14));
  Rng rs_env(Rng::derive_seed(seed, 21));
  Rng rs_explore(Rng::derive_seed(seed, 22));
  Rng rs_target(Rng::derive_seed(seed, 23));
  Rng rs_witness(Rng::derive_seed(seed, 24));
  Rng rs_goals(Rng::derive_seed(seed, 25));
  Rng rs_actor_noise(Rng::derive_seed(seed, 26));
  Rng rs_gap(Rng::derive_seed(seed, 27));
  const uint64_t eval_seed = Rng::derive_seed(seed, 900);
  const uint64_t ckpt_seed = Rng::derive_seed(seed, 901);

  // normalization constants (ground-truth reward used for reporting only)
  const auto expert = make_expert(env);
  const UniformRandomPolicy random_policy(env.action_dim());
  result.expert_return =
      evaluate_return(env, *expert, cfg.norm_episodes, Rng::derive_seed(seed, 902));
  result.random_return =
      evaluate_return(env, random_policy, cfg.norm_episodes, Rng::derive_seed(seed, 903));

  // expert state stack for the adversarial feature kind
  int n_demo_states = 0;
  for (const auto& t : demos.trajectories) n_demo_states += static_cast<int>(t.states.size());
  Matrix expert_states(n_demo_states, env.state_dim());
  {
    int r = 0;
    for (const auto& t : demos.trajectories)
      for (const auto& s : t.states) expert_states.row(r++) = s.transpose();
  }

  st.tracker.update(demos.trajectories, *st.features);

  double last_td_loss = 0.0, last_feature_loss = 0.0, last_witness_norm = 0.0;

  const auto run_eval = [&](int64_t step) {
    MetricsRow row;
    row.step = step;
    row.episode_return = evaluate_return(env, *st.actor, cfg.eval_episodes, eval_seed);
    row.normalized_return =
        normalize_return(row.episode_return, result.random_return, result.expert_return);
    row.checkpoint_score = checkpoint_score(env, *st.actor, *st.features, st.tracker.ema,
                                            cfg.gamma, cfg.eval_episodes, ckpt_seed);
    if (row.checkpoint_score > st.best_checkpoint_score) {
      st.best_checkpoint_score = row.checkpoint_score;
      st.best_actor_params = detail::actor_params(*st.actor, cfg.actor_kind);
    }
    if (buffer.size() > 0) {
      const int n = static_cast<int>(std::min<size_t>(2048, buffer.size()));
      Matrix s, a, s2;
      buffer.gather(buffer.sample_indices(n, ReplayBuffer::Stream::DPrime), s, a, s2);
      // the D' stream keeps this draw independent of the actor batches; a
      // dedicated rng supplies the action samples
      const Vector agent_sf = agent_sf_estimate(*st.sf, *st.actor, s, s2, cfg.gamma, rs_gap);
      row.feature_gap = (st.tracker.ema - agent_sf).norm();
    } else {
      row.feature_gap = std::sqrt(std::max(0.0, -row.checkpoint_score));
    }
    row.sf_td_loss = last_td_loss;
    row.feature_loss = last_feature_loss;
    row.witness_norm = last_witness_norm;
    result.metrics.push_back(row);
    if (hooks.on_eval) hooks.on_eval(row);
  };

  if (cfg.steps > 0) run_eval(0);

  Vector cur = env.reset(rs_env);
  int t_in_ep = 0;
  for (int64_t step = 1; step <= cfg.steps; ++step) {
    st.step = step;
    trace("env_step");
    Vector action;
    if (step <= cfg.warmup_steps) {
      action = random_policy.act(cur, rs_explore, true);
    } else {
      action = st.actor->act(cur, rs_explore, /*explore=*/true);
    }
    if (!action.allFinite())
      throw TrainAbort(step, "non-finite action from actor", "{\"component\":\"actor\"}");
    const Vector next = env.step(cur, action, rs_env);
    ++t_in_ep;
    const bool trunc = t_in_ep >= env.horizon();
    buffer.push({cur, action, next, trunc});
    if (trunc) {
      cur = env.reset(rs_env);
      t_in_ep = 0;
    } else {
      cur = next;
    }

    if (step > cfg.warmup_steps) {
      const int64_t reward_queries_before = env.reward_queries();
      try {
        trace("expert_ema");
        st.tracker.update(demos.trajectories, *st.features);

        trace("sample_D");
        const auto idx_d = buffer.sample_indices(cfg.batch_size, ReplayBuffer::Stream::D);
        Matrix sd, ad, s2d;
        buffer.gather(idx_d, sd, ad, s2d);
        trace("sample_Dprime");
        const auto idx_dp =
            buffer.sample_indices(cfg.batch_size, ReplayBuffer::Stream::DPrime);
        Matrix sp, ap, s2p;
        buffer.gather(idx_dp, sp, ap, s2p);

        trace("sf_update");
        const Matrix phi_s = st.features->features_batch(sd);
        last_td_loss = st.sf->td_update(phi_s, sd, ad, s2d, *st.actor, cfg.gamma, rs_target);

        trace("witness");
        const Vector agent_sf =
            agent_sf_estimate(*st.sf, *st.actor, sp, s2p, cfg.gamma, rs_witness);
        const Witness wit = compute_witness(st.tracker.ema, agent_sf, cfg.witness_normalize,
                                            cfg.witness_bound);
        last_witness_norm = wit.w.norm();

        trace("actor_update");
        if (cfg.actor_kind == ActorKind::Deterministic) {
          deterministic_pg_step(static_cast<DeterministicActor&>(*st.actor), *st.sf, wit, sd);
        } else {
          Matrix eps(sd.rows(), env.action_dim());
          for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = rs_actor_noise.normal();
          gaussian_pg_step(static_cast<GaussianActor&>(*st.actor), *st.sf, wit, sd, eps);
        }

        trace("feature_update");
        const double progress =
            cfg.steps > cfg.warmup_steps
                ? static_cast<double>(step - cfg.warmup_steps) /
                      static_cast<double>(cfg.steps - cfg.warmup_steps)
                : 1.0;
        last_feature_loss =
            st.features->step(sd, ad, s2d, expert_states, rs_goals, progress);
      } catch (const NumericError& e) {
        throw TrainAbort(step, e.what(),
                         std::string("{\"step\":") + std::to_string(step) +
                             ",\"sf_td_loss\":" + std::to_string(last_td_loss) +
                             ",\"feature_loss\":" + std::to_string(last_feature_loss) +
                             ",\"witness_norm\":" + std::to_string(last_witness_norm) + "}");
      }
      if (!std::isfinite(last_td_loss) || !std::isfinite(last_feature_loss) ||
          !std::isfinite(last_witness_norm))
        throw TrainAbort(step, "non-finite loss",
                         std::string("{\"step\":") + std::to_string(step) +
                             ",\"sf_td_loss\":" + std::to_string(last_td_loss) +
                             ",\"feature_loss\":" + std::to_string(last_feature_loss) +
                             ",\"witness_norm\":" + std::to_string(last_witness_norm) + "}");
      if (env.reward_queries() != reward_queries_before)
        throw std::logic_error("reward hygiene violation: ground-truth reward was queried "
                               "inside the update path");
    }

    if (cfg.eval_interval > 0 && step % cfg.eval_interval == 0) run_eval(step);
  }

  if (st.best_actor_params.size() > 0) {
    const Vector final_params = detail::actor_params(*st.actor, cfg.actor_kind);
    detail::set_actor_params(*st.actor, cfg.actor_kind, st.best_actor_params);
    result.best_checkpoint_return =
        evaluate_return(env, *st.actor, cfg.eval_episodes, Rng::derive_seed(seed, 904));
    result.best_checkpoint_normalized_return = normalize_return(
        result.best_checkpoint_return, result.random_return, result.expert_return);
    detail::set_actor_params(*st.actor, cfg.actor_kind, final_params);
  }

  return result;
}

}  // namespace sfm
