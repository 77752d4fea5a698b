#include <catch2/catch.hpp>

#include "sfm/actor.hpp"
#include "sfm/witness.hpp"
#include "support/oracles.hpp"

using namespace sfm;

namespace {

FeatureSettings feat_settings() {
  FeatureSettings cfg;
  cfg.dim = 6;
  cfg.hidden = 12;
  return cfg;
}

Trajectory trajectory_from_states(const std::vector<Vector>& states) {
  Trajectory t;
  t.states = states;
  return t;
}

}  // namespace

TEST_CASE("a single-state demo returns its feature vector") {
  const FeatureLearner phi(FeatureKind::Random, 3, 2, feat_settings(), 3);
  Vector s(3);
  s << 0.2, -0.6, 0.9;
  const Vector sf = expert_sf_from_demos({trajectory_from_states({s})}, phi, 0.9);
  REQUIRE((sf - phi.features(s)).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("gamma=0 keeps only the first state of each demo") {
  const FeatureLearner phi(FeatureKind::Random, 3, 2, feat_settings(), 5);
  Rng rng(7);
  std::vector<Trajectory> demos;
  Vector mean = Vector::Zero(6);
  for (int i = 0; i < 4; ++i) {
    std::vector<Vector> states;
    for (int t = 0; t < 5; ++t) {
      Vector s(3);
      for (int k = 0; k < 3; ++k) s[k] = rng.uniform(-1, 1);
      states.push_back(s);
    }
    demos.push_back(trajectory_from_states(states));
    mean += phi.features(states[0]);
  }
  mean /= 4.0;
  REQUIRE((expert_sf_from_demos(demos, phi, 0.0) - mean).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("discount weights follow gamma^(t-1)") {
  const FeatureLearner phi(FeatureKind::Random, 2, 1, feat_settings(), 11);
  std::vector<Vector> states;
  for (int t = 0; t < 3; ++t) {
    Vector s(2);
    s << 0.1 * t, -0.2 * t;
    states.push_back(s);
  }
  const double g = 0.75;
  const Vector expected = phi.features(states[0]) + g * phi.features(states[1]) +
                          g * g * phi.features(states[2]);
  REQUIRE((expert_sf_from_demos({trajectory_from_states(states)}, phi, g) - expected)
              .cwiseAbs()
              .maxCoeff() <= 1e-14);
}

TEST_CASE("empty demo lists and empty trajectories are rejected") {
  const FeatureLearner phi(FeatureKind::Random, 2, 1, feat_settings(), 13);
  REQUIRE_THROWS_AS(expert_sf_from_demos({}, phi, 0.9), std::invalid_argument);
  REQUIRE_THROWS_AS(expert_sf_from_demos({Trajectory{}}, phi, 0.9), std::invalid_argument);
}

TEST_CASE("tracker ema decays geometrically under a frozen feature map") {
  const FeatureLearner phi(FeatureKind::Random, 3, 2, feat_settings(), 17);
  Rng rng(19);
  std::vector<Vector> states;
  for (int t = 0; t < 10; ++t) {
    Vector s(3);
    for (int k = 0; k < 3; ++k) s[k] = rng.uniform(-1, 1);
    states.push_back(s);
  }
  const std::vector<Trajectory> demos = {trajectory_from_states(states)};
  ExpertSfTracker tracker;
  tracker.ema_rate = 0.1;
  tracker.gamma = 0.95;
  tracker.update(demos, phi);
  tracker.ema.array() += 2.0;
  const double d0 = (tracker.ema - tracker.raw).norm();
  for (int k = 1; k <= 20; ++k) {
    tracker.update(demos, phi);
    REQUIRE((tracker.ema - tracker.raw).norm() ==
            Approx(std::pow(0.9, k) * d0).epsilon(1e-9));
  }
}

TEST_CASE("agent estimate with S'=S and a deterministic policy averages psi(S,pi(S))") {
  SfSettings scfg;
  scfg.dim = 6;
  scfg.hidden = 10;
  const SfEstimator sf(3, 2, scfg, 23);
  ActorSettings acfg;
  acfg.hidden = 8;
  const DeterministicActor actor(3, 2, acfg, 29);
  Rng rng(31);
  Matrix s(12, 3);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.uniform(-1, 1);
  const double gamma = 0.9;
  Rng est_rng(37);
  const Vector est = agent_sf_estimate(sf, actor, s, s, gamma, est_rng);
  Rng act_rng(41);
  const Matrix a = actor.act_batch(s, act_rng, false);
  const Vector direct = sf.predict_batch(s, a, SfWhich::Mean).colwise().mean().transpose();
  REQUIRE((est - direct).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("monte-carlo agent estimate error shrinks like 1/sqrt(N)") {
  // exact tabular psi stands in for the network; transitions sampled from a
  // mixture occupancy, estimator compared to the closed-form expectation
  Rng rng(43);
  const TabularMDP mdp = make_random_mdp(rng, 6, 3, 4, 0.8, 0.9);
  const TabularPolicy pi = TabularPolicy::random(mdp.n_states, mdp.n_actions, rng);
  const Matrix psi = oracle_sf(mdp, pi);
  Matrix psi_bar = Matrix::Zero(mdp.n_states, 4);
  for (int s = 0; s < mdp.n_states; ++s)
    for (int a = 0; a < mdp.n_actions; ++a)
      psi_bar.row(s) += pi.probs(s, a) * psi.row(mdp.sa(s, a));
  const Vector truth = psi_bar.transpose() * mdp.P0;
  const Vector mu = oracle_occupancy(mdp, pi);
  std::vector<double> log_n, log_rmse;
  for (const int n : {32, 128, 512, 2048}) {
    double mse = 0.0;
    const int trials = 30;
    for (int t = 0; t < trials; ++t) {
      Vector est = Vector::Zero(4);
      for (int i = 0; i < n; ++i) {
        const int sa = sample_categorical(mu.transpose(), rng);
        const int s = sa / mdp.n_actions, a = sa % mdp.n_actions;
        const int s2 = sample_categorical(mdp.P.row(mdp.sa(s, a)), rng);
        est += psi_bar.row(s).transpose() - mdp.gamma * psi_bar.row(s2).transpose();
      }
      est /= n * (1.0 - mdp.gamma);
      mse += (est - truth).squaredNorm();
    }
    log_n.push_back(std::log(double(n)));
    log_rmse.push_back(0.5 * std::log(mse / trials));
  }
  // least-squares slope over the log-log curve
  const double mx = (log_n[0] + log_n[1] + log_n[2] + log_n[3]) / 4;
  const double my = (log_rmse[0] + log_rmse[1] + log_rmse[2] + log_rmse[3]) / 4;
  double num = 0, den = 0;
  for (int i = 0; i < 4; ++i) {
    num += (log_n[i] - mx) * (log_rmse[i] - my);
    den += (log_n[i] - mx) * (log_n[i] - mx);
  }
  REQUIRE(num / den == Approx(-0.5).margin(0.1));
}

TEST_CASE("witness forms: difference, normalized, degenerate") {
  Vector e(2), a(2);
  SECTION("unnormalized difference") {
    e << 3.0, 4.0;
    a << 1.0, 1.0;
    const Witness w = compute_witness(e, a, false, 1.0);
    REQUIRE_FALSE(w.degenerate);
    REQUIRE(w.w[0] == 2.0);
    REQUIRE(w.w[1] == 3.0);
  }
  SECTION("normalized to the bound") {
    e << 3.0, 4.0;
    a << 0.0, 0.0;
    const Witness w = compute_witness(e, a, true, 1.0);
    REQUIRE(w.w[0] == Approx(0.6));
    REQUIRE(w.w[1] == Approx(0.8));
    REQUIRE(w.w.norm() == Approx(1.0));
  }
  SECTION("equal inputs are degenerate") {
    e << 0.5, -0.5;
    const Witness w = compute_witness(e, e, true, 2.0);
    REQUIRE(w.degenerate);
    REQUIRE(w.w.cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("non-finite inputs are rejected") {
    e << 1.0, std::numeric_limits<double>::quiet_NaN();
    a << 0.0, 0.0;
    REQUIRE_THROWS_AS(compute_witness(e, a, false, 1.0), NumericError);
  }
}

TEST_CASE("normalized witness dominates random vectors in the ball") {
  Rng rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    Vector diff(8);
    for (int i = 0; i < 8; ++i) diff[i] = rng.uniform(-1, 1);
    const double bound = rng.uniform(0.5, 2.0);
    const Witness w = compute_witness(diff, Vector::Zero(8), true, bound);
    const double best = diff.dot(w.w);
    for (int k = 0; k < 1000; ++k) {
      Vector other(8);
      for (int i = 0; i < 8; ++i) other[i] = rng.normal();
      other *= bound * std::pow(rng.uniform(), 0.125) / other.norm();
      REQUIRE(diff.dot(other) <= best + 1e-12);
    }
  }
}

TEST_CASE("witness reward is the feature inner product") {
  const FeatureLearner phi(FeatureKind::Random, 3, 2, feat_settings(), 53);
  Vector s(3);
  s << 0.4, 0.4, -0.2;
  SECTION("zero witness gives zero reward") {
    Witness w;
    w.w = Vector::Zero(6);
    REQUIRE(witness_reward(phi, w, s) == 0.0);
  }
  SECTION("matches the dot product") {
    Witness w;
    w.w = Vector::LinSpaced(6, -1.0, 1.0);
    REQUIRE(witness_reward(phi, w, s) == Approx(phi.features(s).dot(w.w)));
  }
  SECTION("dimension mismatch is rejected") {
    Witness w;
    w.w = Vector::Zero(5);
    REQUIRE_THROWS_AS(witness_reward(phi, w, s), std::invalid_argument);
  }
}

TEST_CASE("policy evaluation of the witness reward factorizes through psi") {
  // tabular: Q^pi for r(s) = phi(s)^T w equals psi(s,a)^T w
  Rng rng(59);
  const TabularMDP mdp = make_random_mdp(rng, 6, 3, 5, 0.7, 0.95);
  const TabularPolicy pi = TabularPolicy::random(mdp.n_states, mdp.n_actions, rng);
  Vector w(5);
  for (int i = 0; i < 5; ++i) w[i] = rng.uniform(-1, 1);
  const Vector q = exact_q_values(mdp, pi, mdp.Phi * w);
  const Vector q_sf = oracle_sf(mdp, pi) * w;
  REQUIRE((q - q_sf).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("one-hot witness reward picks out single states") {
  // with a tabular one-hot feature table, r(s) = I(s = k)
  const int n = 4;
  Matrix one_hot = Matrix::Identity(n, n);
  Vector w = Vector::Zero(n);
  w[2] = 1.0;
  for (int s = 0; s < n; ++s) {
    const double r = one_hot.row(s).dot(w);
    REQUIRE(r == (s == 2 ? 1.0 : 0.0));
  }
}
