#pragma once

#include "sfm/mlp.hpp"

namespace sfm {

struct AdamState {
  int64_t step = 0;
  Vector first_moment;
  Vector second_moment;
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState make(Eigen::Index n, double lr) {
    AdamState s;
    s.first_moment = Vector::Zero(n);
    s.second_moment = Vector::Zero(n);
    s.learning_rate = lr;
    return s;
  }
};

// Standard Adam with bias correction. Minimizes: params move against grad.
inline void adam_step(AdamState& state, Vector& params, const Vector& grad) {
  if (!grad.allFinite()) throw NumericError("adam_step: non-finite gradient");
  if (grad.size() != params.size() || state.first_moment.size() != params.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  state.step += 1;
  state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad;
  state.second_moment.array() = state.beta2 * state.second_moment.array() +
                                (1.0 - state.beta2) * grad.array().square();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.learning_rate * (state.first_moment.array() / c1) /
                    ((state.second_moment.array() / c2).sqrt() + state.epsilon);
}

struct TargetCopy {
  enum class Mode { Hard, Polyak };
  Mode mode = Mode::Hard;
  int interval = 250;     // hard: refresh period in updates
  double alpha = 0.995;   // polyak: target <- alpha*target + (1-alpha)*source
  int64_t age = 0;

  static TargetCopy hard(int interval) { return {Mode::Hard, interval, 0.0, 0}; }
  static TargetCopy polyak(double alpha) { return {Mode::Polyak, 0, alpha, 0}; }

  // call exactly once per tracked-network update
  void tick(Vector& target_params, const Vector& source_params) {
    if (mode == Mode::Hard) {
      if (++age >= interval) {
        target_params = source_params;
        age = 0;
      }
    } else {
      target_params = alpha * target_params + (1.0 - alpha) * source_params;
    }
  }
};

}  // namespace sfm
