#pragma once

// Test-only oracles: independent reference computations that the
// implementation under test is checked against. Nothing here calls back into
// the code paths being verified.

#include <functional>
#include <vector>

#include "sfm/mlp.hpp"
#include "sfm/tabular.hpp"

namespace oracles {

using sfm::Matrix;
using sfm::Vector;

// Central finite differences of a scalar function of a parameter vector.
inline Vector finite_difference(Vector& params, const std::function<double()>& f,
                                double h = 1e-5) {
  Vector g(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double p0 = params[i];
    params[i] = p0 + h;
    const double up = f();
    params[i] = p0 - h;
    const double dn = f();
    params[i] = p0;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

inline double max_rel_err(const Vector& a, const Vector& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), 1e-12);
}

// Successor features by truncated series: psi_T = sum_{t<T} gamma^t P_pi^t Phi_sa.
inline Matrix truncated_series_sf(const sfm::TabularMDP& mdp, const sfm::TabularPolicy& pi,
                                  int terms) {
  const int S = mdp.n_states, A = mdp.n_actions;
  Matrix phi_sa(S * A, mdp.feature_dim());
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) phi_sa.row(mdp.sa(s, a)) = mdp.Phi.row(s);
  const Matrix ppi = sfm::policy_transition_sa(mdp, pi);
  Matrix acc = phi_sa;
  Matrix term = phi_sa;
  for (int t = 1; t < terms; ++t) {
    term = mdp.gamma * (ppi * term);
    acc += term;
  }
  return acc;
}

// Occupancy by truncated series: mu_T(s,a) = (1-gamma) sum_{t<T} gamma^t P(S_t=s) pi(a|s).
inline Vector truncated_series_occupancy(const sfm::TabularMDP& mdp,
                                         const sfm::TabularPolicy& pi, int terms) {
  const int S = mdp.n_states, A = mdp.n_actions;
  Matrix chain(S, S);
  for (int s = 0; s < S; ++s)
    for (int s2 = 0; s2 < S; ++s2) {
      double v = 0.0;
      for (int a = 0; a < A; ++a) v += pi.probs(s, a) * mdp.P(mdp.sa(s, a), s2);
      chain(s, s2) = v;
    }
  Vector p = mdp.P0;
  Vector acc = p;
  double discount = 1.0;
  for (int t = 1; t < terms; ++t) {
    p = chain.transpose() * p;
    discount *= mdp.gamma;
    acc += discount * p;
  }
  acc *= (1.0 - mdp.gamma);
  Vector mu(S * A);
  for (int s = 0; s < S; ++s)
    for (int a = 0; a < A; ++a) mu[mdp.sa(s, a)] = acc[s] * pi.probs(s, a);
  return mu;
}

// Chi-square statistic against a uniform null over k cells.
inline double chi_square_uniform(const std::vector<int>& counts, int total) {
  const double expected = static_cast<double>(total) / counts.size();
  double stat = 0.0;
  for (int c : counts) stat += (c - expected) * (c - expected) / expected;
  return stat;
}

}  // namespace oracles
