#pragma once

#include <string>

#include "sfm/adam.hpp"
#include "sfm/env.hpp"
#include "sfm/mlp.hpp"

namespace sfm {

enum class SfMode { Td7, Td3 };

inline std::string to_string(SfMode m) { return m == SfMode::Td7 ? "td7" : "td3"; }
inline SfMode sf_mode_from_string(const std::string& s) {
  if (s == "td7") return SfMode::Td7;
  if (s == "td3") return SfMode::Td3;
  throw std::invalid_argument("unknown sf mode: " + s);
}

struct SfSettings {
  int dim = 32;
  int hidden = 64;
  double lr = 5e-4;
  SfMode mode = SfMode::Td7;
  int update_interval = 250;   // td7: hard target refresh period
  double polyak_alpha = 0.995; // td3: moving-average factor
  double target_noise = 0.2;
  double target_noise_clip = 0.5;
};

enum class SfWhich { One, Two, Mean };

// Twin psi networks trained on the least-squares TD objective with mean
// bootstrapping and running elementwise value clipping of the bootstrap term.
class SfEstimator {
 public:
  SfEstimator(int state_dim, int action_dim, SfSettings cfg, uint64_t seed)
      : state_dim_(state_dim), action_dim_(action_dim), cfg_(cfg) {
    const std::vector<int> sizes = {state_dim + action_dim, cfg.hidden, cfg.hidden, cfg.dim};
    const std::vector<Act> acts = {Act::Relu, Act::Relu, Act::Identity};
    psi1_ = Mlp::make(sizes, acts, Rng::derive_seed(seed, 1));
    psi2_ = Mlp::make(sizes, acts, Rng::derive_seed(seed, 2));
    target1_ = psi1_;
    target2_ = psi2_;
    copy1_ = cfg.mode == SfMode::Td7 ? TargetCopy::hard(cfg.update_interval)
                                     : TargetCopy::polyak(cfg.polyak_alpha);
    copy2_ = copy1_;
    opt1_ = AdamState::make(psi1_.params.size(), cfg.lr);
    opt2_ = AdamState::make(psi2_.params.size(), cfg.lr);
    clip_low_ = Vector::Constant(cfg.dim, -1e18);
    clip_high_ = Vector::Constant(cfg.dim, 1e18);
  }

  const SfSettings& settings() const { return cfg_; }
  int dim() const { return cfg_.dim; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  const Mlp& psi1() const { return psi1_; }
  const Mlp& psi2() const { return psi2_; }
  Mlp& mutable_psi1() { return psi1_; }
  Mlp& mutable_psi2() { return psi2_; }
  const Mlp& target1() const { return target1_; }
  const Mlp& target2() const { return target2_; }
  const Vector& clip_low() const { return clip_low_; }
  const Vector& clip_high() const { return clip_high_; }
  bool bounds_defined() const { return bounds_defined_; }

  // Relabeling the twins must leave every mean-bootstrapped quantity intact.
  void swap_twins() {
    std::swap(psi1_, psi2_);
    std::swap(target1_, target2_);
    std::swap(copy1_, copy2_);
    std::swap(opt1_, opt2_);
  }

  Matrix predict_batch(const Matrix& states, const Matrix& actions, SfWhich which) const {
    Matrix in(states.rows(), state_dim_ + action_dim_);
    in << states, actions;
    switch (which) {
      case SfWhich::One: return forward_batch(psi1_, in);
      case SfWhich::Two: return forward_batch(psi2_, in);
      case SfWhich::Mean:
        return 0.5 * (forward_batch(psi1_, in) + forward_batch(psi2_, in));
    }
    return {};
  }

  Vector predict(const Vector& state, const Vector& action, SfWhich which = SfWhich::Mean) const {
    Matrix s(1, state_dim_), a(1, action_dim_);
    s.row(0) = state.transpose();
    a.row(0) = action.transpose();
    return predict_batch(s, a, which).row(0).transpose();
  }

  // Jacobian of the mean-twin output with respect to the action: dim x action_dim.
  Matrix action_grad(const Vector& state, const Vector& action) const {
    Matrix in(cfg_.dim, state_dim_ + action_dim_);
    in.rowwise() = concat(state, action).transpose();
    const Matrix eye = Matrix::Identity(cfg_.dim, cfg_.dim);
    Matrix jac = Matrix::Zero(cfg_.dim, state_dim_ + action_dim_);
    for (const Mlp* net : {&psi1_, &psi2_}) {
      MlpWorkspace ws;
      forward_batch(*net, in, &ws);
      jac += 0.5 * backward_batch(*net, ws, eye).input_grad;
    }
    return jac.rightCols(action_dim_);
  }

  // d(psi_mean(s,a)^T w)/da for every batch row: batch x action_dim.
  Matrix action_grad_vec_batch(const Matrix& states, const Matrix& actions,
                               const Vector& w) const {
    Matrix in(states.rows(), state_dim_ + action_dim_);
    in << states, actions;
    Matrix grad = Matrix::Zero(states.rows(), state_dim_ + action_dim_);
    Matrix upstream(states.rows(), cfg_.dim);
    upstream.rowwise() = (0.5 * w).transpose();
    for (const Mlp* net : {&psi1_, &psi2_}) {
      MlpWorkspace ws;
      forward_batch(*net, in, &ws);
      grad += backward_batch(*net, ws, upstream).input_grad;
    }
    return grad.rightCols(action_dim_);
  }

  // One TD step for both twins on a batch of transitions. phi_s holds the
  // base features of the current states; next actions come from the policy
  // (with clipped Gaussian smoothing noise for deterministic policies).
  double td_update(const Matrix& phi_s, const Matrix& states, const Matrix& actions,
                   const Matrix& next_states, const Policy& policy, double gamma, Rng& rng) {
    if (states.rows() == 0) throw std::invalid_argument("sf_td_update: empty batch");
    const auto batch = states.rows();
    Matrix next_actions = policy.act_batch(next_states, rng, policy.stochastic());
    if (!policy.stochastic()) {
      for (Eigen::Index i = 0; i < batch; ++i)
        for (int k = 0; k < action_dim_; ++k) {
          const double eps = std::clamp(cfg_.target_noise * rng.normal(),
                                        -cfg_.target_noise_clip, cfg_.target_noise_clip);
          next_actions(i, k) = std::clamp(next_actions(i, k) + eps, -1.0, 1.0);
        }
    }

    Matrix in2(batch, state_dim_ + action_dim_);
    in2 << next_states, next_actions;
    Matrix boot = 0.5 * (forward_batch(target1_, in2) + forward_batch(target2_, in2));
    if (bounds_defined_) {
      for (Eigen::Index i = 0; i < batch; ++i)
        boot.row(i) =
            boot.row(i).cwiseMax(clip_low_.transpose()).cwiseMin(clip_high_.transpose());
    }
    const Matrix target = phi_s + gamma * boot;
    for (Eigen::Index i = 0; i < batch; ++i)
      if (!target.row(i).allFinite())
        throw NumericError("sf_td_update: non-finite target for transition " + std::to_string(i));

    Matrix in(batch, state_dim_ + action_dim_);
    in << states, actions;
    double loss = 0.0;
    for (auto [net, opt] : {std::pair{&psi1_, &opt1_}, std::pair{&psi2_, &opt2_}}) {
      MlpWorkspace ws;
      const Matrix pred = forward_batch(*net, in, &ws);
      const Matrix err = pred - target;
      loss += err.squaredNorm() / batch;
      adam_step(*opt, net->params, backward_batch(*net, ws, 2.0 * err / batch).param_grad);
    }

    // bounds only ever widen: min over observed targets falls, max rises
    const Vector batch_min = target.colwise().minCoeff().transpose();
    const Vector batch_max = target.colwise().maxCoeff().transpose();
    if (!bounds_defined_) {
      clip_low_ = batch_min;
      clip_high_ = batch_max;
      bounds_defined_ = true;
    } else {
      clip_low_ = clip_low_.cwiseMin(batch_min);
      clip_high_ = clip_high_.cwiseMax(batch_max);
    }

    copy1_.tick(target1_.params, psi1_.params);
    copy2_.tick(target2_.params, psi2_.params);
    return loss / 2.0;
  }

 private:
  Vector concat(const Vector& s, const Vector& a) const {
    Vector v(state_dim_ + action_dim_);
    v << s, a;
    return v;
  }

  int state_dim_, action_dim_;
  SfSettings cfg_;
  Mlp psi1_, psi2_;
  Mlp target1_, target2_;
  TargetCopy copy1_, copy2_;
  AdamState opt1_, opt2_;
  Vector clip_low_, clip_high_;
  bool bounds_defined_ = false;
};

}  // namespace sfm
