#pragma once

#include <string>

#include "sfm/adam.hpp"
#include "sfm/env.hpp"
#include "sfm/sf_net.hpp"
#include "sfm/witness.hpp"

namespace sfm {

enum class ActorKind { Deterministic, Gaussian };

inline std::string to_string(ActorKind k) {
  return k == ActorKind::Deterministic ? "deterministic" : "gaussian";
}
inline ActorKind actor_kind_from_string(const std::string& s) {
  if (s == "deterministic") return ActorKind::Deterministic;
  if (s == "gaussian") return ActorKind::Gaussian;
  throw std::invalid_argument("unknown actor kind: " + s);
}

struct ActorSettings {
  int hidden = 64;
  double lr = 5e-4;
  double exploration_noise = 0.1;  // deterministic actor
  double entropy_coeff = 1e-3;     // gaussian actor
  double std_floor = 1e-4;
};

// tanh-squashed deterministic policy; exploration adds clipped Gaussian noise.
class DeterministicActor final : public Policy {
 public:
  DeterministicActor(int state_dim, int action_dim, ActorSettings cfg, uint64_t seed)
      : cfg_(cfg) {
    net_ = Mlp::make({state_dim, cfg.hidden, cfg.hidden, action_dim},
                     {Act::Relu, Act::Relu, Act::Tanh}, Rng::derive_seed(seed, 1),
                     /*final_layer_scale=*/0.1);
    opt_ = AdamState::make(net_.params.size(), cfg.lr);
  }

  int action_dim() const override { return net_.out_dim(); }

  Vector act(const Vector& state, Rng& rng, bool explore) const override {
    Vector a = forward(net_, state);
    if (explore)
      for (int i = 0; i < a.size(); ++i)
        a[i] = std::clamp(a[i] + cfg_.exploration_noise * rng.normal(), -1.0, 1.0);
    return a;
  }

  Matrix act_batch(const Matrix& states, Rng& rng, bool explore) const override {
    Matrix a = forward_batch(net_, states);
    if (explore)
      for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
          a(i, j) = std::clamp(a(i, j) + cfg_.exploration_noise * rng.normal(), -1.0, 1.0);
    return a;
  }

  const Mlp& net() const { return net_; }
  Mlp& mutable_net() { return net_; }
  AdamState& optimizer() { return opt_; }
  const ActorSettings& settings() const { return cfg_; }

 private:
  ActorSettings cfg_;
  Mlp net_;
  AdamState opt_;
};

// Diagonal Gaussian policy: mean = tanh head, std = softplus head floored at
// std_floor. Sampling uses the reparameterization a = m(s) + sd(s) * eps.
class GaussianActor final : public Policy {
 public:
  GaussianActor(int state_dim, int action_dim, ActorSettings cfg, uint64_t seed) : cfg_(cfg) {
    mean_net_ = Mlp::make({state_dim, cfg.hidden, cfg.hidden, action_dim},
                          {Act::Relu, Act::Relu, Act::Tanh}, Rng::derive_seed(seed, 1),
                          /*final_layer_scale=*/0.1);
    std_net_ = Mlp::make({state_dim, cfg.hidden, cfg.hidden, action_dim},
                         {Act::Relu, Act::Relu, Act::Softplus}, Rng::derive_seed(seed, 2));
    mean_opt_ = AdamState::make(mean_net_.params.size(), cfg.lr);
    std_opt_ = AdamState::make(std_net_.params.size(), cfg.lr);
  }

  int action_dim() const override { return mean_net_.out_dim(); }
  bool stochastic() const override { return true; }

  Vector mean(const Vector& state) const { return forward(mean_net_, state); }
  Vector stddev(const Vector& state) const {
    return forward(std_net_, state).cwiseMax(cfg_.std_floor);
  }

  Vector act(const Vector& state, Rng& rng, bool explore) const override {
    Vector m = mean(state);
    if (!explore) return m;
    const Vector sd = stddev(state);
    for (int i = 0; i < m.size(); ++i) m[i] += sd[i] * rng.normal();
    return m;
  }

  Matrix act_batch(const Matrix& states, Rng& rng, bool explore) const override {
    Matrix m = forward_batch(mean_net_, states);
    if (!explore) return m;
    const Matrix sd = forward_batch(std_net_, states).cwiseMax(cfg_.std_floor);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) += sd(i, j) * rng.normal();
    return m;
  }

  const Mlp& mean_net() const { return mean_net_; }
  const Mlp& std_net() const { return std_net_; }
  Mlp& mutable_mean_net() { return mean_net_; }
  Mlp& mutable_std_net() { return std_net_; }
  AdamState& mean_optimizer() { return mean_opt_; }
  AdamState& std_optimizer() { return std_opt_; }
  const ActorSettings& settings() const { return cfg_; }

 private:
  ActorSettings cfg_;
  Mlp mean_net_;
  Mlp std_net_;
  AdamState mean_opt_, std_opt_;
};

// Ascent direction of E_S[psi_mean(S, pi(S))^T w] with the witness held
// constant; returns the parameter gradient so callers can inspect it.
inline Vector deterministic_pg_grad(const DeterministicActor& actor, const SfEstimator& sf,
                                    const Witness& witness, const Matrix& states) {
  if (states.rows() == 0) throw std::invalid_argument("deterministic_pg: empty batch");
  MlpWorkspace ws;
  const Matrix actions = forward_batch(actor.net(), states, &ws);
  const Matrix ga =
      sf.action_grad_vec_batch(states, actions, witness.w) / static_cast<double>(states.rows());
  return backward_batch(actor.net(), ws, ga).param_grad;
}

inline double deterministic_pg_step(DeterministicActor& actor, const SfEstimator& sf,
                                    const Witness& witness, const Matrix& states) {
  const Vector grad = deterministic_pg_grad(actor, sf, witness, states);
  if (!grad.allFinite()) throw NumericError("deterministic_pg_step: non-finite gradient");
  adam_step(actor.optimizer(), actor.mutable_net().params, (-grad).eval());
  return grad.norm();
}

struct GaussianPgGrad {
  Vector mean_grad;
  Vector std_grad;
};

// Reparameterized ascent direction of E[psi_mean(s, h(s,eps))^T w] plus the
// closed-form diagonal-Gaussian entropy bonus. noise rows are the eps draws.
inline GaussianPgGrad gaussian_pg_grad(const GaussianActor& actor, const SfEstimator& sf,
                                       const Witness& witness, const Matrix& states,
                                       const Matrix& noise) {
  if (states.rows() == 0) throw std::invalid_argument("gaussian_pg: empty batch");
  if (noise.rows() != states.rows() || noise.cols() != actor.action_dim())
    throw std::invalid_argument("gaussian_pg: noise batch shape mismatch");
  const auto batch = static_cast<double>(states.rows());
  MlpWorkspace ws_m, ws_s;
  const Matrix m = forward_batch(actor.mean_net(), states, &ws_m);
  const Matrix sd_raw = forward_batch(actor.std_net(), states, &ws_s);
  if (!sd_raw.allFinite()) throw NumericError("gaussian_pg: non-finite stddev head output");
  const Matrix sd = sd_raw.cwiseMax(actor.settings().std_floor);
  const Matrix actions = m + sd.cwiseProduct(noise);

  const Matrix ga = sf.action_grad_vec_batch(states, actions, witness.w) / batch;
  // d/d sd of the objective: reparameterization term plus entropy c * 1/sd,
  // masked where the softplus output sits below the floor
  Matrix gs = ga.cwiseProduct(noise) +
              (actor.settings().entropy_coeff / batch) * sd.cwiseInverse();
  gs = (sd_raw.array() >= actor.settings().std_floor).select(gs, 0.0);

  GaussianPgGrad out;
  out.mean_grad = backward_batch(actor.mean_net(), ws_m, ga).param_grad;
  out.std_grad = backward_batch(actor.std_net(), ws_s, gs).param_grad;
  return out;
}

inline double gaussian_pg_step(GaussianActor& actor, const SfEstimator& sf,
                               const Witness& witness, const Matrix& states,
                               const Matrix& noise) {
  const GaussianPgGrad g = gaussian_pg_grad(actor, sf, witness, states, noise);
  if (!g.mean_grad.allFinite() || !g.std_grad.allFinite())
    throw NumericError("gaussian_pg_step: non-finite gradient");
  adam_step(actor.mean_optimizer(), actor.mutable_mean_net().params, (-g.mean_grad).eval());
  adam_step(actor.std_optimizer(), actor.mutable_std_net().params, (-g.std_grad).eval());
  return std::sqrt(g.mean_grad.squaredNorm() + g.std_grad.squaredNorm());
}

// Mean closed-form entropy of the policy at the given states.
inline double gaussian_entropy(const GaussianActor& actor, const Matrix& states) {
  const Matrix sd =
      forward_batch(actor.std_net(), states).cwiseMax(actor.settings().std_floor);
  const double half_log_2pie = 0.5 * std::log(2.0 * M_PI * std::exp(1.0));
  return (sd.array().log() + half_log_2pie).rowwise().sum().mean();
}

}  // namespace sfm
