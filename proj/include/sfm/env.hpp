#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sfm/mlp.hpp"
#include "sfm/rng.hpp"
#include "sfm/tabular.hpp"

namespace sfm {

// One environment step. Carries no reward on purpose: the learner never sees
// ground truth, only evaluation code queries ContinuousEnv::reward.
struct Transition {
  Vector state;
  Vector action;
  Vector next_state;
  bool truncated = false;  // time-limit marker; bootstrapping treats it as non-terminal
};

struct Trajectory {
  std::vector<Vector> states;   // s_1..s_T
  std::vector<Vector> actions;  // empty for state-only demos, else T-1 entries
  bool state_only() const { return actions.empty(); }
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual int action_dim() const = 0;
  virtual Vector act(const Vector& state, Rng& rng, bool explore) const = 0;
  virtual bool stochastic() const { return false; }

  // Row-per-state batched variant; overridden where a single forward pass
  // beats the per-row loop.
  virtual Matrix act_batch(const Matrix& states, Rng& rng, bool explore) const {
    Matrix out(states.rows(), action_dim());
    for (Eigen::Index i = 0; i < states.rows(); ++i)
      out.row(i) = act(states.row(i).transpose(), rng, explore).transpose();
    return out;
  }
};

struct ZeroPolicy final : Policy {
  int dim;
  explicit ZeroPolicy(int d) : dim(d) {}
  int action_dim() const override { return dim; }
  Vector act(const Vector&, Rng&, bool) const override { return Vector::Zero(dim); }
};

struct UniformRandomPolicy final : Policy {
  int dim;
  explicit UniformRandomPolicy(int d) : dim(d) {}
  int action_dim() const override { return dim; }
  Vector act(const Vector&, Rng& rng, bool) const override {
    Vector a(dim);
    for (int i = 0; i < dim; ++i) a[i] = rng.uniform(-1.0, 1.0);
    return a;
  }
  bool stochastic() const override { return true; }
};

// Environments are pure step rules: all mutable episode state lives in the
// caller, so instances can be shared across threads for evaluation.
class ContinuousEnv {
 public:
  virtual ~ContinuousEnv() = default;
  virtual std::string name() const = 0;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual int horizon() const = 0;
  virtual Vector reset(Rng& rng) const = 0;
  virtual Vector step(const Vector& state, const Vector& action, Rng& rng) const = 0;

  // Ground-truth reward, for evaluation and expert construction only. The
  // query counter backs the reward-hygiene assertion in the trainer.
  double reward(const Vector& state) const {
    ++reward_queries_;
    return reward_impl(state);
  }
  int64_t reward_queries() const { return reward_queries_; }

 protected:
  virtual double reward_impl(const Vector& state) const = 0;

 private:
  mutable int64_t reward_queries_ = 0;
};

// 8x8 gridworld with 4 deterministic moves, embedded as (x, y) in [-1,1]^2.
// A continuous 2-D action selects the move along its dominant axis. Episodes
// spawn uniformly over the grid.
class GridworldEnv final : public ContinuousEnv {
 public:
  explicit GridworldEnv(int side = 8, int horizon = 100, int goal_x = -1, int goal_y = -1)
      : side_(side), horizon_(horizon),
        goal_x_(goal_x < 0 ? side - 1 : goal_x), goal_y_(goal_y < 0 ? side - 1 : goal_y) {}

  std::string name() const override { return "gridworld"; }
  int state_dim() const override { return 2; }
  int action_dim() const override { return 2; }
  int horizon() const override { return horizon_; }
  int n_cells() const { return side_ * side_; }
  int side() const { return side_; }

  Vector embed(int ix, int iy) const {
    Vector s(2);
    s[0] = -1.0 + 2.0 * ix / (side_ - 1);
    s[1] = -1.0 + 2.0 * iy / (side_ - 1);
    return s;
  }
  int cell_x(const Vector& s) const {
    return std::clamp(static_cast<int>(std::lround((s[0] + 1.0) * (side_ - 1) / 2.0)), 0,
                      side_ - 1);
  }
  int cell_y(const Vector& s) const {
    return std::clamp(static_cast<int>(std::lround((s[1] + 1.0) * (side_ - 1) / 2.0)), 0,
                      side_ - 1);
  }
  int cell_index(const Vector& s) const { return cell_x(s) * side_ + cell_y(s); }

  // action order: +x, -x, +y, -y
  static int decode_action(const Vector& a) {
    if (std::abs(a[0]) >= std::abs(a[1])) return a[0] >= 0.0 ? 0 : 1;
    return a[1] >= 0.0 ? 2 : 3;
  }
  Vector action_embed(int a) const {
    Vector v = Vector::Zero(2);
    switch (a) {
      case 0: v[0] = 1.0; break;
      case 1: v[0] = -1.0; break;
      case 2: v[1] = 1.0; break;
      default: v[1] = -1.0; break;
    }
    return v;
  }

  Vector reset(Rng& rng) const override {
    const int c = rng.uniform_int(n_cells());
    return embed(c / side_, c % side_);
  }

  Vector step(const Vector& state, const Vector& action, Rng&) const override {
    int ix = cell_x(state), iy = cell_y(state);
    switch (decode_action(action)) {
      case 0: ix = std::min(ix + 1, side_ - 1); break;
      case 1: ix = std::max(ix - 1, 0); break;
      case 2: iy = std::min(iy + 1, side_ - 1); break;
      default: iy = std::max(iy - 1, 0); break;
    }
    return embed(ix, iy);
  }

  bool at_goal(const Vector& s) const { return cell_x(s) == goal_x_ && cell_y(s) == goal_y_; }

  // Exact tabular twin of this environment; Phi rows come from phi(embed(s)).
  template <typename FeatureFn>
  TabularMDP to_tabular(double gamma, FeatureFn&& phi) const {
    TabularMDP mdp;
    mdp.n_states = n_cells();
    mdp.n_actions = 4;
    mdp.gamma = gamma;
    mdp.P = Matrix::Zero(mdp.n_states * 4, mdp.n_states);
    Rng dummy(0);
    for (int s = 0; s < mdp.n_states; ++s) {
      const Vector es = embed(s / side_, s % side_);
      for (int a = 0; a < 4; ++a) {
        const Vector ns = step(es, action_embed(a), dummy);
        mdp.P(mdp.sa(s, a), cell_index(ns)) = 1.0;
      }
    }
    mdp.P0 = Vector::Constant(mdp.n_states, 1.0 / mdp.n_states);
    const Vector probe = phi(embed(0, 0));
    mdp.Phi.resize(mdp.n_states, probe.size());
    for (int s = 0; s < mdp.n_states; ++s) mdp.Phi.row(s) = phi(embed(s / side_, s % side_));
    return mdp;
  }

  Vector ground_truth_reward_table() const {
    Vector r = Vector::Zero(n_cells());
    r[goal_x_ * side_ + goal_y_] = 1.0;
    return r;
  }

 protected:
  double reward_impl(const Vector& state) const override { return at_goal(state) ? 1.0 : 0.0; }

 private:
  int side_;
  int horizon_;
  int goal_x_, goal_y_;
};

// 2-D point mass with velocity: state (px, py, vx, vy), bounded acceleration
// actions, linear dynamics with optional Gaussian noise on the velocity.
// Episodes start from a small box around a fixed spawn point and the
// ground-truth reward is the negative distance to the origin.
class PointMassEnv final : public ContinuousEnv {
 public:
  explicit PointMassEnv(int horizon = 200, double noise_sigma = 0.0)
      : horizon_(horizon), noise_sigma_(noise_sigma) {}

  std::string name() const override { return "pointmass"; }
  int state_dim() const override { return 4; }
  int action_dim() const override { return 2; }
  int horizon() const override { return horizon_; }
  double goal_radius() const { return goal_radius_; }

  Vector reset(Rng& rng) const override {
    Vector s = Vector::Zero(4);
    s[0] = start_x_ + rng.uniform(-start_spread_, start_spread_);
    s[1] = start_y_ + rng.uniform(-start_spread_, start_spread_);
    return s;
  }

  Vector step(const Vector& state, const Vector& action, Rng& rng) const override {
    Vector s(4);
    for (int i = 0; i < 2; ++i) {
      const double a = std::clamp(action[i], -1.0, 1.0);
      double v = state[2 + i] + dt_ * accel_ * a;
      if (noise_sigma_ > 0.0) v += noise_sigma_ * rng.normal();
      v = std::clamp(v, -vmax_, vmax_);
      s[2 + i] = v;
      s[i] = std::clamp(state[i] + dt_ * v, -1.0, 1.0);
    }
    return s;
  }

 protected:
  double reward_impl(const Vector& state) const override {
    return -state.head<2>().norm();
  }

 private:
  int horizon_;
  double noise_sigma_;
  double dt_ = 0.1;
  double accel_ = 1.0;
  double vmax_ = 1.0;
  double start_x_ = 0.7;
  double start_y_ = -0.55;
  double start_spread_ = 0.1;
  double goal_radius_ = 0.15;
};

inline std::unique_ptr<ContinuousEnv> make_env(const std::string& name, int horizon = -1,
                                               double noise_sigma = 0.0) {
  if (name == "gridworld") return std::make_unique<GridworldEnv>(8, horizon > 0 ? horizon : 100);
  if (name == "pointmass")
    return std::make_unique<PointMassEnv>(horizon > 0 ? horizon : 200, noise_sigma);
  throw std::invalid_argument("unknown environment: " + name);
}

// Greedy tabular policy lifted to the continuous gridworld interface.
class GridExpertPolicy final : public Policy {
 public:
  GridExpertPolicy(const GridworldEnv& env, TabularPolicy pol)
      : env_(&env), pol_(std::move(pol)) {}
  int action_dim() const override { return 2; }
  Vector act(const Vector& state, Rng&, bool) const override {
    return env_->action_embed(pol_.greedy_action(env_->cell_index(state)));
  }

 private:
  const GridworldEnv* env_;
  TabularPolicy pol_;
};

// Proportional-derivative controller driving the point mass to the origin.
class PointMassExpertPolicy final : public Policy {
 public:
  explicit PointMassExpertPolicy(double kp = 2.0, double kd = 3.0) : kp_(kp), kd_(kd) {}
  int action_dim() const override { return 2; }
  Vector act(const Vector& state, Rng&, bool) const override {
    Vector a(2);
    for (int i = 0; i < 2; ++i)
      a[i] = std::clamp(-kp_ * state[i] - kd_ * state[2 + i], -1.0, 1.0);
    return a;
  }

 private:
  double kp_, kd_;
};

inline std::unique_ptr<Policy> make_expert(const ContinuousEnv& env) {
  if (const auto* grid = dynamic_cast<const GridworldEnv*>(&env)) {
    const TabularMDP mdp = grid->to_tabular(0.99, [&](const Vector& s) { return s; });
    const auto vi = value_iteration(mdp, grid->ground_truth_reward_table());
    return std::make_unique<GridExpertPolicy>(*grid, vi.policy);
  }
  if (dynamic_cast<const PointMassEnv*>(&env) != nullptr)
    return std::make_unique<PointMassExpertPolicy>();
  throw std::invalid_argument("make_expert: no expert for environment " + env.name());
}

// Generates exactly n_steps transitions; episodes reset after env.horizon()
// steps with the final transition flagged truncated. Identical (env, policy,
// seed) triples yield bit-identical output.
inline std::vector<Transition> rollout(const ContinuousEnv& env, const Policy& policy,
                                       uint64_t rng_seed, int n_steps, bool explore = false) {
  if (policy.action_dim() != env.action_dim())
    throw std::invalid_argument("rollout: policy/env action dimension mismatch");
  Rng rng(rng_seed);
  std::vector<Transition> out;
  out.reserve(n_steps);
  Vector state = env.reset(rng);
  int t_in_ep = 0;
  for (int k = 0; k < n_steps; ++k) {
    const Vector action = policy.act(state, rng, explore);
    if (!action.allFinite())
      throw NumericError("rollout: non-finite action at step " + std::to_string(k));
    const Vector next = env.step(state, action, rng);
    ++t_in_ep;
    const bool trunc = t_in_ep >= env.horizon();
    out.push_back({state, action, next, trunc});
    if (trunc) {
      state = env.reset(rng);
      t_in_ep = 0;
    } else {
      state = next;
    }
  }
  return out;
}

// One full episode as a trajectory of horizon+1 states (and horizon actions
// unless state_only). Returns the undiscounted ground-truth return alongside.
struct EpisodeResult {
  Trajectory trajectory;
  double episode_return = 0.0;
};

inline EpisodeResult rollout_episode(const ContinuousEnv& env, const Policy& policy, Rng& rng,
                                     bool state_only = false, bool explore = false,
                                     bool query_reward = true) {
  EpisodeResult ep;
  Vector state = env.reset(rng);
  ep.trajectory.states.push_back(state);
  for (int t = 0; t < env.horizon(); ++t) {
    const Vector action = policy.act(state, rng, explore);
    if (!action.allFinite())
      throw NumericError("rollout_episode: non-finite action at step " + std::to_string(t));
    state = env.step(state, action, rng);
    ep.trajectory.states.push_back(state);
    if (!state_only) ep.trajectory.actions.push_back(action);
    if (query_reward) ep.episode_return += env.reward(state);
  }
  return ep;
}

}  // namespace sfm
