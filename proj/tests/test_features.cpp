#include <catch2/catch.hpp>

#include "sfm/features.hpp"
#include "support/oracles.hpp"

using namespace sfm;

namespace {

FeatureSettings small_settings() {
  FeatureSettings cfg;
  cfg.dim = 6;
  cfg.hidden = 12;
  cfg.lr = 1e-3;
  cfg.gamma = 0.9;
  return cfg;
}

struct Batch {
  Matrix s, a, s2;
};

Batch random_batch(int n, int sdim, int adim, uint64_t seed) {
  Rng rng(seed);
  Batch b{Matrix(n, sdim), Matrix(n, adim), Matrix(n, sdim)};
  for (Eigen::Index i = 0; i < b.s.size(); ++i) b.s.data()[i] = rng.uniform(-1, 1);
  for (Eigen::Index i = 0; i < b.a.size(); ++i) b.a.data()[i] = rng.uniform(-1, 1);
  for (Eigen::Index i = 0; i < b.s2.size(); ++i) b.s2.data()[i] = rng.uniform(-1, 1);
  return b;
}

}  // namespace

TEST_CASE("features are deterministic and unit-bounded") {
  const FeatureLearner f(FeatureKind::Random, 3, 2, small_settings(), 5);
  Rng rng(1);
  for (int i = 0; i < 30; ++i) {
    Vector s(3);
    for (int k = 0; k < 3; ++k) s[k] = rng.uniform(-5, 5);
    const Vector phi1 = f.features(s);
    const Vector phi2 = f.features(s);
    REQUIRE((phi1.array() == phi2.array()).all());
    REQUIRE(phi1.norm() <= 1.0 + 1e-9);
  }
}

TEST_CASE("random features never change") {
  FeatureLearner f(FeatureKind::Random, 3, 2, small_settings(), 5);
  const uint64_t h0 = f.parameter_hash();
  const Batch b = random_batch(16, 3, 2, 7);
  Rng goal_rng(2);
  for (int step = 0; step < 25; ++step)
    REQUIRE(f.step(b.s, b.a, b.s2, Matrix(), goal_rng, 0.0) == 0.0);
  REQUIRE(f.parameter_hash() == h0);
}

TEST_CASE("every learner kind exposes the same training interface") {
  const Batch b = random_batch(12, 3, 2, 11);
  Rng goal_rng(3);
  for (const FeatureKind kind :
       {FeatureKind::Random, FeatureKind::Ae, FeatureKind::Idm, FeatureKind::Fdm,
        FeatureKind::Hilbert, FeatureKind::Adversarial}) {
    FeatureLearner f(kind, 3, 2, small_settings(), 19);
    double loss = 0.0;
    for (int i = 0; i < 3; ++i) loss = f.step(b.s, b.a, b.s2, b.s2, goal_rng, 0.1);
    REQUIRE(std::isfinite(loss));
    REQUIRE(f.features(Vector::Zero(3)).size() == 6);
  }
}

TEST_CASE("fdm loss equals an independent forward-pass recomputation") {
  const FeatureLearner f(FeatureKind::Fdm, 3, 2, small_settings(), 23);
  const Batch b = random_batch(10, 3, 2, 29);
  const auto lg = f.loss_and_grad(b.s, b.a, b.s2);
  // recompute by hand from the nets
  double expected = 0.0;
  for (int i = 0; i < 10; ++i) {
    const Vector z = forward(f.phi(), b.s.row(i).transpose());
    Vector in(6 + 2);
    in << z, b.a.row(i).transpose();
    expected += (forward(*f.aux(), in) - b.s2.row(i).transpose()).squaredNorm();
  }
  expected /= 10.0;
  REQUIRE(lg.loss == Approx(expected).epsilon(1e-12));
}

TEST_CASE("ae loss is zero when the decoder inverts phi on the batch") {
  FeatureLearner f(FeatureKind::Ae, 3, 2, small_settings(), 113);
  Vector s0(3);
  s0 << 0.3, -0.4, 0.7;
  // constant decoder aux(z) = s0 makes aux(phi(s)) the identity on the batch {s0}
  Mlp& aux = f.mutable_aux();
  aux.params.setZero();
  aux.bias(aux.n_layers() - 1) = s0;
  Matrix batch(4, 3);
  for (int r = 0; r < 4; ++r) batch.row(r) = s0.transpose();
  const auto lg = f.loss_and_grad(batch, Matrix(), batch);
  REQUIRE(lg.loss == 0.0);
  REQUIRE(lg.phi_grad.cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(lg.aux_grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("ae and idm losses are nonnegative and report analytic gradients") {
  const Batch b = random_batch(8, 3, 2, 31);
  for (const FeatureKind kind : {FeatureKind::Ae, FeatureKind::Idm, FeatureKind::Fdm}) {
    FeatureLearner f(kind, 3, 2, small_settings(), 37);
    const auto lg = f.loss_and_grad(b.s, b.a, b.s2);
    REQUIRE(lg.loss >= 0.0);
    // gradient against finite differences of the loss in phi parameters
    Mlp& phi = f.mutable_phi();
    const Vector fd = oracles::finite_difference(
        phi.params, [&] { return f.loss_and_grad(b.s, b.a, b.s2).loss; });
    REQUIRE(oracles::max_rel_err(lg.phi_grad, fd) <= 1e-4);
  }
}

TEST_CASE("idm and fdm demand action labels") {
  const FeatureLearner idm(FeatureKind::Idm, 3, 2, small_settings(), 41);
  const Batch b = random_batch(4, 3, 2, 43);
  REQUIRE_THROWS_WITH(idm.loss_and_grad(b.s, Matrix(), b.s2),
                      Catch::Matchers::Contains("actions required"));
  const FeatureLearner fdm(FeatureKind::Fdm, 3, 2, small_settings(), 41);
  REQUIRE_THROWS_WITH(fdm.loss_and_grad(b.s, Matrix(), b.s2),
                      Catch::Matchers::Contains("actions required"));
}

TEST_CASE("expectile loss at tau=0.5 is half the squared loss") {
  Rng rng(47);
  for (int i = 0; i < 100; ++i) {
    const double u = rng.uniform(-3, 3);
    REQUIRE(expectile_loss(u, 0.5) == Approx(0.5 * u * u));
  }
}

TEST_CASE("hilbert loss gradient matches finite differences") {
  FeatureSettings cfg = small_settings();
  cfg.expectile_tau = 0.9;
  FeatureLearner f(FeatureKind::Hilbert, 3, 2, cfg, 53);
  const Batch b = random_batch(8, 3, 2, 59);
  Rng goal_rng(61);
  const Matrix goals = hilbert_goal_sample(b.s, goal_rng);
  const auto lg = f.loss_and_grad(b.s, b.a, b.s2, goals);
  REQUIRE(lg.loss >= 0.0);
  Mlp& phi = f.mutable_phi();
  const Vector fd = oracles::finite_difference(
      phi.params, [&] { return f.loss_and_grad(b.s, b.a, b.s2, goals).loss; }, 1e-6);
  REQUIRE(oracles::max_rel_err(lg.phi_grad, fd) <= 1e-3);
}

TEST_CASE("hilbert target network receives no gradient") {
  FeatureSettings cfg = small_settings();
  cfg.target_alpha = 1.0;  // freeze the polyak blend so only gradients could move it
  FeatureLearner f(FeatureKind::Hilbert, 3, 2, cfg, 67);
  const Vector target0 = f.phi_target()->params;
  const Batch b = random_batch(16, 3, 2, 71);
  Rng goal_rng(73);
  for (int i = 0; i < 10; ++i) f.step(b.s, b.a, b.s2, Matrix(), goal_rng, 0.0);
  REQUIRE((f.phi_target()->params.array() == target0.array()).all());
  // while the online net did move
  REQUIRE(f.parameter_hash() != FeatureLearner(FeatureKind::Hilbert, 3, 2, cfg, 67).parameter_hash());
}

TEST_CASE("hilbert goals come uniformly from the batch") {
  SECTION("singleton batch returns that state") {
    Matrix s(1, 3);
    s << 0.1, 0.2, 0.3;
    Rng rng(1);
    const Matrix g = hilbert_goal_sample(s, rng);
    REQUIRE((g.row(0).array() == s.row(0).array()).all());
  }
  SECTION("seeded draws are reproducible") {
    Rng r1(5), r2(5);
    REQUIRE(hilbert_goal_indices(100, r1) == hilbert_goal_indices(100, r2));
  }
  SECTION("empirical distribution is uniform at three sigma") {
    Rng rng(9);
    const int batch = 20, draws = 40000;
    std::vector<int> counts(batch, 0);
    for (int i = 0; i < draws / batch; ++i)
      for (int idx : hilbert_goal_indices(batch, rng)) ++counts[idx];
    // chi-square with k-1 = 19 dof: mean 19, sd sqrt(38)
    REQUIRE(oracles::chi_square_uniform(counts, draws) <= 19.0 + 3.0 * std::sqrt(38.0));
  }
}

TEST_CASE("adversarial gradient vanishes when the batches coincide") {
  const FeatureLearner f(FeatureKind::Adversarial, 3, 2, small_settings(), 79);
  const Batch b = random_batch(12, 3, 2, 83);
  const auto lg = f.loss_and_grad(b.s, b.a, b.s2, Matrix(), b.s);
  REQUIRE(lg.loss == Approx(0.0).margin(1e-18));
  REQUIRE(lg.phi_grad.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("adversarial gradient matches the hand-derived singleton case") {
  // with one agent state and one expert state the gap is phi(sa) - phi(se),
  // and d(-gap^2)/dparams = -2 (phi(sa)-phi(se)) (dphi(sa) - dphi(se))
  const FeatureLearner f(FeatureKind::Adversarial, 3, 2, small_settings(), 89);
  Matrix sa(1, 3), se(1, 3);
  sa << 0.4, -0.2, 0.8;
  se << -0.6, 0.3, 0.1;
  const auto lg = f.loss_and_grad(sa, Matrix(), sa, Matrix(), se);
  const Vector gap = f.features(sa.row(0).transpose()) - f.features(se.row(0).transpose());
  REQUIRE(lg.loss == Approx(-gap.squaredNorm()).epsilon(1e-12));
  const auto [ga, _ia] = backward(f.phi(), sa.row(0).transpose(), (-2.0 * gap).eval());
  const auto [ge, _ie] = backward(f.phi(), se.row(0).transpose(), (2.0 * gap).eval());
  REQUIRE((lg.phi_grad - ga - ge).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("adversarial expert batch is required") {
  const FeatureLearner f(FeatureKind::Adversarial, 3, 2, small_settings(), 97);
  const Batch b = random_batch(4, 3, 2, 101);
  REQUIRE_THROWS_AS(f.loss_and_grad(b.s, b.a, b.s2), std::invalid_argument);
}

TEST_CASE("adversarial learning rate decays to zero by the end of training") {
  FeatureLearner f(FeatureKind::Adversarial, 3, 2, small_settings(), 103);
  const Batch b = random_batch(8, 3, 2, 107);
  Rng goal_rng(1);
  const uint64_t before = f.parameter_hash();
  f.step(b.s, b.a, b.s2, b.s2, goal_rng, 1.0);  // progress = 1 -> lr 0
  REQUIRE(f.parameter_hash() == before);
  f.step(b.s, b.a, b.s2, b.s2, goal_rng, 0.0);  // full rate moves parameters
  REQUIRE(f.parameter_hash() != before);
}

TEST_CASE("empty batches are rejected") {
  const FeatureLearner f(FeatureKind::Ae, 3, 2, small_settings(), 109);
  REQUIRE_THROWS_AS(f.loss_and_grad(Matrix(), Matrix(), Matrix()), std::invalid_argument);
}
