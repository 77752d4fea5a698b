#pragma once

#include <vector>

#include "sfm/env.hpp"
#include "sfm/features.hpp"
#include "sfm/sf_net.hpp"

namespace sfm {

// (1/M) sum_i sum_{t=1..T_i} gamma^{t-1} phi(s_t^i). FeatureFn maps a batch of
// state rows to a batch of feature rows.
template <typename FeatureFn>
Vector expert_sf_from_demos_fn(const std::vector<Trajectory>& demos, FeatureFn&& phi, int dim,
                               double gamma) {
  if (demos.empty()) throw std::invalid_argument("expert_sf_from_demos: no demonstrations");
  Vector acc = Vector::Zero(dim);
  for (const auto& traj : demos) {
    if (traj.states.empty())
      throw std::invalid_argument("expert_sf_from_demos: empty trajectory");
    Matrix states(traj.states.size(), traj.states[0].size());
    for (size_t t = 0; t < traj.states.size(); ++t) states.row(t) = traj.states[t].transpose();
    const Matrix phis = phi(states);
    double discount = 1.0;
    for (Eigen::Index t = 0; t < phis.rows(); ++t) {
      acc += discount * phis.row(t).transpose();
      discount *= gamma;
    }
  }
  return acc / static_cast<double>(demos.size());
}

inline Vector expert_sf_from_demos(const std::vector<Trajectory>& demos,
                                   const FeatureLearner& features, double gamma) {
  return expert_sf_from_demos_fn(
      demos, [&](const Matrix& s) { return features.features_batch(s); }, features.dim(), gamma);
}

// Tracks the expert expected SF under the drifting feature map. The raw sum
// is recomputed over all demo states each update; the EMA smooths phi drift.
struct ExpertSfTracker {
  double ema_rate = 0.01;
  double gamma = 0.99;
  Vector raw;
  Vector ema;
  bool initialized = false;

  void update(const std::vector<Trajectory>& demos, const FeatureLearner& features) {
    raw = expert_sf_from_demos(demos, features, gamma);
    if (!initialized) {
      ema = raw;
      initialized = true;
    } else {
      ema += ema_rate * (raw - ema);
    }
  }
};

// Buffer estimator of the agent's initial-state expected SF:
// (1-gamma)^{-1} E[(psi_mean(S, A) - gamma psi_mean(S', A'))], A ~ pi(.|S).
inline Vector agent_sf_estimate(const SfEstimator& sf, const Policy& policy, const Matrix& states,
                                const Matrix& next_states, double gamma, Rng& rng) {
  if (states.rows() == 0) throw std::invalid_argument("agent_sf_estimate: empty batch");
  const Matrix a = policy.act_batch(states, rng, policy.stochastic());
  const Matrix a2 = policy.act_batch(next_states, rng, policy.stochastic());
  const Matrix psi_s = sf.predict_batch(states, a, SfWhich::Mean);
  const Matrix psi_s2 = sf.predict_batch(next_states, a2, SfWhich::Mean);
  const Vector mean_diff =
      (psi_s.colwise().mean() - gamma * psi_s2.colwise().mean()).transpose();
  return mean_diff / (1.0 - gamma);
}

struct Witness {
  Vector w;
  bool normalized = false;
  double bound = 1.0;
  bool degenerate = false;  // zero gap: downstream gradients vanish
};

inline Witness compute_witness(const Vector& expert_sf, const Vector& agent_sf, bool normalize,
                               double bound) {
  if (expert_sf.size() != agent_sf.size())
    throw std::invalid_argument("compute_witness: dimension mismatch");
  if (!expert_sf.allFinite() || !agent_sf.allFinite())
    throw NumericError("compute_witness: non-finite inputs");
  Witness wit;
  wit.normalized = normalize;
  wit.bound = bound;
  wit.w = expert_sf - agent_sf;
  const double norm = wit.w.norm();
  if (norm == 0.0) {
    wit.degenerate = true;
    return wit;
  }
  if (normalize) wit.w *= bound / norm;
  return wit;
}

inline double witness_reward(const FeatureLearner& features, const Witness& witness,
                             const Vector& state) {
  if (witness.w.size() != features.dim())
    throw std::invalid_argument("witness_reward: dimension mismatch");
  return features.features(state).dot(witness.w);
}

}  // namespace sfm
