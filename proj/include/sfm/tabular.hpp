#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

#include "sfm/mlp.hpp"
#include "sfm/rng.hpp"

namespace sfm {

// Exact finite MDP. P rows are indexed (s * n_actions + a) and hold the
// next-state distribution; Phi holds phi(s) per state for oracle use.
struct TabularMDP {
  int n_states = 0;
  int n_actions = 0;
  Matrix P;    // (S*A) x S
  Vector P0;   // S
  double gamma = 0.99;
  Matrix Phi;  // S x d

  int sa(int s, int a) const { return s * n_actions + a; }
  int feature_dim() const { return static_cast<int>(Phi.cols()); }

  void validate() const {
    if (n_states <= 0 || n_actions <= 0) throw std::invalid_argument("TabularMDP: empty");
    if (P.rows() != n_states * n_actions || P.cols() != n_states)
      throw std::invalid_argument("TabularMDP: P shape");
    if (P0.size() != n_states) throw std::invalid_argument("TabularMDP: P0 shape");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("TabularMDP: gamma not in [0,1)");
    for (Eigen::Index r = 0; r < P.rows(); ++r) {
      if (P.row(r).minCoeff() < 0.0) throw std::invalid_argument("TabularMDP: negative P entry");
      if (std::abs(P.row(r).sum() - 1.0) > 1e-12)
        throw std::invalid_argument("TabularMDP: P row " + std::to_string(r) + " does not sum to 1");
    }
    if (P0.minCoeff() < 0.0 || std::abs(P0.sum() - 1.0) > 1e-12)
      throw std::invalid_argument("TabularMDP: P0 not a distribution");
  }
};

struct TabularPolicy {
  Matrix probs;  // S x A, rows sum to 1

  static TabularPolicy uniform(int n_states, int n_actions) {
    TabularPolicy p;
    p.probs = Matrix::Constant(n_states, n_actions, 1.0 / n_actions);
    return p;
  }
  static TabularPolicy deterministic(int n_states, int n_actions,
                                     const std::vector<int>& actions) {
    TabularPolicy p;
    p.probs = Matrix::Zero(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) p.probs(s, actions[s]) = 1.0;
    return p;
  }
  static TabularPolicy random(int n_states, int n_actions, Rng& rng) {
    TabularPolicy p;
    p.probs.resize(n_states, n_actions);
    for (int s = 0; s < n_states; ++s) {
      double sum = 0.0;
      for (int a = 0; a < n_actions; ++a) {
        p.probs(s, a) = -std::log(1.0 - rng.uniform());
        sum += p.probs(s, a);
      }
      p.probs.row(s) /= sum;
    }
    return p;
  }
  int greedy_action(int s) const {
    Eigen::Index a;
    probs.row(s).maxCoeff(&a);
    return static_cast<int>(a);
  }
};

// State-action transition matrix under pi: row (s,a) -> column (s',a') weight
// P(s'|s,a) * pi(a'|s').
inline Matrix policy_transition_sa(const TabularMDP& mdp, const TabularPolicy& pi) {
  const int S = mdp.n_states, A = mdp.n_actions;
  Matrix out(S * A, S * A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a)
      for (int s2 = 0; s2 < S; ++s2)
        for (int a2 = 0; a2 < A; ++a2)
          out(mdp.sa(s, a), mdp.sa(s2, a2)) = mdp.P(mdp.sa(s, a), s2) * pi.probs(s2, a2);
  return out;
}

// Exact successor features: solves (I - gamma*P_pi) Psi = Phi_sa. The system
// is nonsingular for gamma < 1; the residual is still checked.
inline Matrix oracle_sf(const TabularMDP& mdp, const TabularPolicy& pi) {
  mdp.validate();
  const int S = mdp.n_states, A = mdp.n_actions;
  Matrix phi_sa(S * A, mdp.feature_dim());
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) phi_sa.row(mdp.sa(s, a)) = mdp.Phi.row(s);
  const Matrix ppi = policy_transition_sa(mdp, pi);
  const Matrix lhs = Matrix::Identity(S * A, S * A) - mdp.gamma * ppi;
  Eigen::PartialPivLU<Matrix> lu(lhs);
  const Matrix psi = lu.solve(phi_sa);
  const double residual = (lhs * psi - phi_sa).cwiseAbs().maxCoeff();
  if (!psi.allFinite() || residual > 1e-10)
    throw NumericError("oracle_sf: singular or ill-conditioned solve, residual " +
                       std::to_string(residual));
  return psi;
}

// Discounted state-action occupancy: mu(s,a) = (1-gamma) pi(a|s) sum_t gamma^t p_t(s).
// Output is a probability vector over (s,a) pairs.
inline Vector oracle_occupancy(const TabularMDP& mdp, const TabularPolicy& pi) {
  mdp.validate();
  const int S = mdp.n_states, A = mdp.n_actions;
  Matrix m(S, S);  // state-to-state chain under pi
  for (int s = 0; s < S; ++s) {
    for (int s2 = 0; s2 < S; ++s2) {
      double v = 0.0;
      for (int a = 0; a < A; ++a) v += pi.probs(s, a) * mdp.P(mdp.sa(s, a), s2);
      m(s, s2) = v;
    }
  }
  const Matrix lhs = Matrix::Identity(S, S) - mdp.gamma * m.transpose();
  const Vector d = Eigen::PartialPivLU<Matrix>(lhs).solve(mdp.P0);
  Vector mu(S * A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) mu[mdp.sa(s, a)] = (1.0 - mdp.gamma) * d[s] * pi.probs(s, a);
  return mu;
}

// Exact Q^pi for a state-based reward vector r (length S).
inline Vector exact_q_values(const TabularMDP& mdp, const TabularPolicy& pi, const Vector& r) {
  const int S = mdp.n_states, A = mdp.n_actions;
  Vector r_sa(S * A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) r_sa[mdp.sa(s, a)] = r[s];
  const Matrix lhs = Matrix::Identity(S * A, S * A) - mdp.gamma * policy_transition_sa(mdp, pi);
  return Eigen::PartialPivLU<Matrix>(lhs).solve(r_sa);
}

struct ValueIterationResult {
  Vector values;
  TabularPolicy policy;
  double residual = 0.0;
  int sweeps = 0;
};

inline ValueIterationResult value_iteration(const TabularMDP& mdp, const Vector& reward,
                                            double tol = 1e-10, int max_sweeps = 100000) {
  mdp.validate();
  const int S = mdp.n_states, A = mdp.n_actions;
  Vector v = Vector::Zero(S);
  double residual = 0.0;
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    Vector next(S);
    for (int s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a)
        best = std::max(best, reward[s] + mdp.gamma * mdp.P.row(mdp.sa(s, a)).dot(v));
      next[s] = best;
    }
    residual = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (residual < tol) break;
  }
  if (residual >= tol)
    throw NumericError("value_iteration: no convergence after " + std::to_string(max_sweeps) +
                       " sweeps (residual " + std::to_string(residual) + ")");
  std::vector<int> greedy(S);
  for (int s = 0; s < S; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < A; ++a) {
      const double q = reward[s] + mdp.gamma * mdp.P.row(mdp.sa(s, a)).dot(v);
      if (q > best + 1e-13) {
        best = q;
        greedy[s] = a;
      }
    }
  }
  return {v, TabularPolicy::deterministic(S, A, greedy), residual, sweep + 1};
}

struct TabularTransition {
  int state;
  int action;
  int next_state;
};

inline int sample_categorical(const Eigen::Ref<const Eigen::RowVectorXd>& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size() - 1);
}

// Continuing rollout through the exact chain; no resets.
inline std::vector<TabularTransition> tabular_rollout(const TabularMDP& mdp,
                                                      const TabularPolicy& pi, uint64_t seed,
                                                      int n_steps) {
  Rng rng(seed);
  std::vector<TabularTransition> out;
  out.reserve(n_steps);
  int s = sample_categorical(mdp.P0.transpose(), rng);
  for (int k = 0; k < n_steps; ++k) {
    const int a = sample_categorical(pi.probs.row(s), rng);
    const int s2 = sample_categorical(mdp.P.row(mdp.sa(s, a)), rng);
    out.push_back({s, a, s2});
    s = s2;
  }
  return out;
}

// Random MDP generator used by the verification suites and property tests.
inline TabularMDP make_random_mdp(Rng& rng, int max_states = 8, int max_actions = 4,
                                  int feature_dim = 4, double gamma_lo = 0.5,
                                  double gamma_hi = 0.99) {
  TabularMDP mdp;
  mdp.n_states = 2 + rng.uniform_int(max_states - 1);
  mdp.n_actions = 1 + rng.uniform_int(max_actions);
  mdp.gamma = rng.uniform(gamma_lo, gamma_hi);
  mdp.P.resize(mdp.n_states * mdp.n_actions, mdp.n_states);
  for (Eigen::Index r = 0; r < mdp.P.rows(); ++r) {
    double sum = 0.0;
    for (int s2 = 0; s2 < mdp.n_states; ++s2) {
      mdp.P(r, s2) = -std::log(1.0 - rng.uniform());
      sum += mdp.P(r, s2);
    }
    mdp.P.row(r) /= sum;
  }
  mdp.P0.resize(mdp.n_states);
  double sum = 0.0;
  for (int s = 0; s < mdp.n_states; ++s) {
    mdp.P0[s] = -std::log(1.0 - rng.uniform());
    sum += mdp.P0[s];
  }
  mdp.P0 /= sum;
  mdp.Phi.resize(mdp.n_states, feature_dim);
  for (Eigen::Index i = 0; i < mdp.Phi.size(); ++i) mdp.Phi.data()[i] = rng.uniform(-1.0, 1.0);
  mdp.validate();
  return mdp;
}

}  // namespace sfm
