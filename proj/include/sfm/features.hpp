#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sfm/adam.hpp"
#include "sfm/mlp.hpp"
#include "sfm/rng.hpp"

namespace sfm {

enum class FeatureKind { Random, Ae, Idm, Fdm, Hilbert, Adversarial };

inline std::string to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::Random: return "random";
    case FeatureKind::Ae: return "ae";
    case FeatureKind::Idm: return "idm";
    case FeatureKind::Fdm: return "fdm";
    case FeatureKind::Hilbert: return "hilbert";
    case FeatureKind::Adversarial: return "adversarial";
  }
  return "?";
}

inline FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "random") return FeatureKind::Random;
  if (s == "ae") return FeatureKind::Ae;
  if (s == "idm") return FeatureKind::Idm;
  if (s == "fdm") return FeatureKind::Fdm;
  if (s == "hilbert") return FeatureKind::Hilbert;
  if (s == "adversarial") return FeatureKind::Adversarial;
  throw std::invalid_argument("unknown feature kind: " + s);
}

struct FeatureSettings {
  int dim = 32;
  int hidden = 64;
  double lr = 5e-4;
  double expectile_tau = 0.9;    // hilbert
  double gamma = 0.99;           // hilbert temporal-distance discount
  double target_alpha = 0.995;   // hilbert target network polyak factor
  double adv_lr_scale = 0.2;     // adversarial lr relative to base lr
  double state_match_tol = 1e-9; // hilbert I(S != G) comparison tolerance
};

// Uniformly sampled goal rows from the batch's states.
inline std::vector<int> hilbert_goal_indices(int batch, Rng& rng) {
  if (batch <= 0) throw std::invalid_argument("hilbert_goal_sample: empty batch");
  std::vector<int> idx(batch);
  for (auto& i : idx) i = rng.uniform_int(batch);
  return idx;
}

inline Matrix hilbert_goal_sample(const Matrix& states, Rng& rng) {
  const auto idx = hilbert_goal_indices(static_cast<int>(states.rows()), rng);
  Matrix goals(states.rows(), states.cols());
  for (Eigen::Index i = 0; i < states.rows(); ++i) goals.row(i) = states.row(idx[i]);
  return goals;
}

// expectile loss l^2_tau(u) = |tau - I(u<0)| u^2
inline double expectile_loss(double u, double tau) {
  return std::abs(tau - (u < 0.0 ? 1.0 : 0.0)) * u * u;
}

// phi : S -> R^d plus the per-kind auxiliary head and loss. All six kinds
// share this interface; the trainer never branches on the kind.
class FeatureLearner {
 public:
  FeatureLearner(FeatureKind kind, int state_dim, int action_dim, FeatureSettings cfg,
                 uint64_t seed)
      : kind_(kind), state_dim_(state_dim), action_dim_(action_dim), cfg_(cfg) {
    const int h = cfg.hidden, d = cfg.dim;
    phi_ = Mlp::make({state_dim, h, h, d}, {Act::LayernormTanh, Act::Relu, Act::L2Norm},
                     Rng::derive_seed(seed, 1));
    switch (kind) {
      case FeatureKind::Ae:
        aux_ = Mlp::make({d, h, h, state_dim}, {Act::Relu, Act::Relu, Act::Identity},
                         Rng::derive_seed(seed, 2));
        break;
      case FeatureKind::Idm:
        aux_ = Mlp::make({2 * d, h, h, action_dim}, {Act::Relu, Act::Relu, Act::Identity},
                         Rng::derive_seed(seed, 2));
        break;
      case FeatureKind::Fdm:
        aux_ = Mlp::make({d + action_dim, h, h, state_dim},
                         {Act::Relu, Act::Relu, Act::Identity}, Rng::derive_seed(seed, 2));
        break;
      case FeatureKind::Hilbert:
        phi_target_ = phi_;
        break;
      default:
        break;
    }
    if (kind != FeatureKind::Random) {
      phi_opt_ = AdamState::make(phi_.params.size(), cfg.lr);
      if (aux_) aux_opt_ = AdamState::make(aux_->params.size(), cfg.lr);
    }
  }

  FeatureKind kind() const { return kind_; }
  int dim() const { return cfg_.dim; }
  int state_dim() const { return state_dim_; }
  const Mlp& phi() const { return phi_; }
  Mlp& mutable_phi() { return phi_; }
  const std::optional<Mlp>& aux() const { return aux_; }
  Mlp& mutable_aux() { return *aux_; }
  const std::optional<Mlp>& phi_target() const { return phi_target_; }

  Vector features(const Vector& state) const { return forward(phi_, state); }
  Matrix features_batch(const Matrix& states) const { return forward_batch(phi_, states); }

  uint64_t parameter_hash() const {
    uint64_t h = param_hash(phi_.params);
    if (aux_) h = hash_bytes(aux_->params.data(), sizeof(double) * aux_->params.size(), h);
    return h;
  }

  struct LossGrad {
    double loss = 0.0;
    Vector phi_grad;
    Vector aux_grad;  // empty when the kind has no auxiliary net
  };

  // Loss and analytic gradients per the kind's objective. `actions` may be
  // empty only for kinds that do not need them; `goals`/`expert_states` are
  // consumed by hilbert/adversarial respectively and ignored otherwise.
  LossGrad loss_and_grad(const Matrix& states, const Matrix& actions, const Matrix& next_states,
                         const Matrix& goals = Matrix(), const Matrix& expert_states = Matrix()) const {
    if (states.rows() == 0) throw std::invalid_argument("feature loss: empty batch");
    const auto batch = static_cast<double>(states.rows());
    LossGrad out;
    out.phi_grad = Vector::Zero(phi_.params.size());
    if (aux_) out.aux_grad = Vector::Zero(aux_->params.size());

    switch (kind_) {
      case FeatureKind::Random:
        return out;  // frozen features, loss identically zero

      case FeatureKind::Ae: {
        MlpWorkspace ws_phi, ws_aux;
        const Matrix z = forward_batch(phi_, states, &ws_phi);
        const Matrix rec = forward_batch(*aux_, z, &ws_aux);
        const Matrix err = rec - states;
        out.loss = err.squaredNorm() / batch;
        const BatchGrad ga = backward_batch(*aux_, ws_aux, 2.0 * err / batch);
        out.aux_grad = ga.param_grad;
        out.phi_grad = backward_batch(phi_, ws_phi, ga.input_grad).param_grad;
        return out;
      }

      case FeatureKind::Idm: {
        require_actions(actions);
        MlpWorkspace ws_s, ws_s2, ws_aux;
        const Matrix z = forward_batch(phi_, states, &ws_s);
        const Matrix z2 = forward_batch(phi_, next_states, &ws_s2);
        Matrix in(z.rows(), 2 * cfg_.dim);
        in << z, z2;
        const Matrix pred = forward_batch(*aux_, in, &ws_aux);
        const Matrix err = pred - actions;
        out.loss = err.squaredNorm() / batch;
        const BatchGrad ga = backward_batch(*aux_, ws_aux, 2.0 * err / batch);
        out.aux_grad = ga.param_grad;
        out.phi_grad = backward_batch(phi_, ws_s, ga.input_grad.leftCols(cfg_.dim)).param_grad +
                       backward_batch(phi_, ws_s2, ga.input_grad.rightCols(cfg_.dim)).param_grad;
        return out;
      }

      case FeatureKind::Fdm: {
        require_actions(actions);
        MlpWorkspace ws_phi, ws_aux;
        const Matrix z = forward_batch(phi_, states, &ws_phi);
        Matrix in(z.rows(), cfg_.dim + action_dim_);
        in << z, actions;
        const Matrix pred = forward_batch(*aux_, in, &ws_aux);
        const Matrix err = pred - next_states;
        out.loss = err.squaredNorm() / batch;
        const BatchGrad ga = backward_batch(*aux_, ws_aux, 2.0 * err / batch);
        out.aux_grad = ga.param_grad;
        out.phi_grad = backward_batch(phi_, ws_phi, ga.input_grad.leftCols(cfg_.dim)).param_grad;
        return out;
      }

      case FeatureKind::Hilbert: {
        if (goals.rows() != states.rows())
          throw std::invalid_argument("hilbert loss: goals batch required");
        MlpWorkspace ws_s, ws_g;
        const Matrix zs = forward_batch(phi_, states, &ws_s);
        const Matrix zg = forward_batch(phi_, goals, &ws_g);
        // target term f*(S', G) under the delayed network; no gradient flows here
        const Matrix tz2 = forward_batch(*phi_target_, next_states);
        const Matrix tzg = forward_batch(*phi_target_, goals);
        Matrix gs = Matrix::Zero(zs.rows(), zs.cols());
        Matrix gg = Matrix::Zero(zg.rows(), zg.cols());
        for (Eigen::Index i = 0; i < states.rows(); ++i) {
          const double not_goal =
              ((states.row(i) - goals.row(i)).lpNorm<Eigen::Infinity>() > cfg_.state_match_tol)
                  ? 1.0
                  : 0.0;
          const double f = (zs.row(i) - zg.row(i)).norm();
          const double f_tgt = (tz2.row(i) - tzg.row(i)).norm();
          const double u = -not_goal - cfg_.gamma * f_tgt + f;
          const double wgt = std::abs(cfg_.expectile_tau - (u < 0.0 ? 1.0 : 0.0));
          out.loss += wgt * u * u / batch;
          if (f > 1e-12) {
            const Eigen::RowVectorXd diff = zs.row(i) - zg.row(i);
            const double dldf = 2.0 * wgt * u / batch;
            gs.row(i) = dldf * diff / f;
            gg.row(i) = -dldf * diff / f;
          }
        }
        out.phi_grad = backward_batch(phi_, ws_s, gs).param_grad +
                       backward_batch(phi_, ws_g, gg).param_grad;
        return out;
      }

      case FeatureKind::Adversarial: {
        if (expert_states.rows() == 0)
          throw std::invalid_argument("adversarial loss: expert state batch required");
        MlpWorkspace ws_a, ws_e;
        const Matrix za = forward_batch(phi_, states, &ws_a);
        const Matrix ze = forward_batch(phi_, expert_states, &ws_e);
        const Vector gap = za.colwise().mean().transpose() - ze.colwise().mean().transpose();
        out.loss = -gap.squaredNorm();
        // descend the loss = ascend the gap
        const Matrix ga = Matrix::Constant(za.rows(), 1, -2.0 / za.rows()) * gap.transpose();
        const Matrix ge = Matrix::Constant(ze.rows(), 1, 2.0 / ze.rows()) * gap.transpose();
        out.phi_grad = backward_batch(phi_, ws_a, ga).param_grad +
                       backward_batch(phi_, ws_e, ge).param_grad;
        return out;
      }
    }
    return out;
  }

  // One training step. progress in [0,1] drives the adversarial lr decay;
  // expert_states are ignored by the non-adversarial kinds.
  double step(const Matrix& states, const Matrix& actions, const Matrix& next_states,
              const Matrix& expert_states, Rng& goal_rng, double progress = 0.0) {
    Matrix goals;
    if (kind_ == FeatureKind::Hilbert) goals = hilbert_goal_sample(states, goal_rng);
    const LossGrad lg = loss_and_grad(states, actions, next_states, goals, expert_states);
    if (kind_ == FeatureKind::Random) return 0.0;
    if (kind_ == FeatureKind::Adversarial) {
      phi_opt_->learning_rate =
          cfg_.lr * cfg_.adv_lr_scale * std::max(0.0, 1.0 - progress);  // linear decay to 0
    }
    adam_step(*phi_opt_, phi_.params, lg.phi_grad);
    if (aux_) adam_step(*aux_opt_, aux_->params, lg.aux_grad);
    if (phi_target_) {
      TargetCopy tc = TargetCopy::polyak(cfg_.target_alpha);
      tc.tick(phi_target_->params, phi_.params);
    }
    return lg.loss;
  }

 private:
  void require_actions(const Matrix& actions) const {
    if (actions.rows() == 0) throw std::invalid_argument("actions required");
  }

  FeatureKind kind_;
  int state_dim_;
  int action_dim_;
  FeatureSettings cfg_;
  Mlp phi_;
  std::optional<Mlp> aux_;
  std::optional<Mlp> phi_target_;
  std::optional<AdamState> phi_opt_;
  std::optional<AdamState> aux_opt_;
};

}  // namespace sfm
