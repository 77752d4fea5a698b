#include <catch2/catch.hpp>

#include <cstdio>

#include "sfm/mlp.hpp"
#include "support/oracles.hpp"

using namespace sfm;

TEST_CASE("parameter count matches sum of (fan_in+1)*fan_out") {
  const Mlp net = Mlp::make({3, 16, 8, 2}, {Act::Relu, Act::Elu, Act::Identity}, 0);
  REQUIRE(net.params.size() == (3 + 1) * 16 + (16 + 1) * 8 + (8 + 1) * 2);
  REQUIRE(Mlp::param_count({5, 7}) == 42);
}

TEST_CASE("zero final layer yields zero output") {
  Mlp net = Mlp::make({4, 8, 3}, {Act::Relu, Act::Identity}, 1);
  const int off = net.layer_offset(1);
  net.params.segment(off, net.params.size() - off).setZero();
  Vector x(4);
  x << 0.3, -0.7, 1.1, 0.0;
  REQUIRE(forward(net, x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single identity layer is an affine map") {
  Mlp net = Mlp::make({3, 2}, {Act::Identity}, 7);
  Matrix a(2, 3);
  a << 1.0, 2.0, -1.0, 0.5, 0.0, 3.0;
  Vector b(2);
  b << -0.25, 1.5;
  net.weight(0) = a;
  net.bias(0) = b;
  Vector x(3);
  x << 0.2, -0.4, 0.9;
  REQUIRE((forward(net, x) - (a * x + b)).norm() == Approx(0.0).margin(1e-15));

  // input gradient of <g, Ax+b> is exactly A^T g
  Vector g(2);
  g << 0.7, -1.2;
  const auto [pg, ig] = backward(net, x, g);
  REQUIRE((ig - a.transpose() * g).norm() == Approx(0.0).margin(1e-15));
}

TEST_CASE("forward is deterministic for a fixed seed") {
  const Mlp n1 = Mlp::make({5, 32, 4}, {Act::Tanh, Act::Identity}, 123);
  const Mlp n2 = Mlp::make({5, 32, 4}, {Act::Tanh, Act::Identity}, 123);
  Rng rng(5);
  for (int i = 0; i < 10; ++i) {
    Vector x(5);
    for (int k = 0; k < 5; ++k) x[k] = rng.uniform(-2.0, 2.0);
    REQUIRE((forward(n1, x) - forward(n2, x)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("analytic gradients match finite differences across every activation") {
  const std::vector<Act> tags = {Act::Identity, Act::Relu,   Act::Elu,       Act::Tanh,
                                 Act::LayernormTanh, Act::L2Norm, Act::AvgL1Norm, Act::Softplus};
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Act hidden_act = tags[trial % tags.size()];
    const Act out_act = tags[(trial / tags.size()) % tags.size()];
    Mlp net = Mlp::make({4, 9, 3}, {hidden_act, out_act}, rng.next_u64());
    Vector x(4), g(3);
    for (int k = 0; k < 4; ++k) x[k] = rng.uniform(-1.5, 1.5);
    for (int k = 0; k < 3; ++k) g[k] = rng.uniform(-1.0, 1.0);
    const auto [pg, ig] = backward(net, x, g);
    const Vector fd = oracles::finite_difference(
        net.params, [&] { return g.dot(forward(net, x)); });
    worst = std::max(worst, oracles::max_rel_err(pg, fd));
    // input gradient against finite differences too
    Vector xc = x;
    const Vector fdx = oracles::finite_difference(xc, [&] { return g.dot(forward(net, xc)); });
    worst = std::max(worst, oracles::max_rel_err(ig, fdx));
  }
  REQUIRE(worst <= 1e-4);
}

TEST_CASE("batched backward equals the sum of per-sample gradients") {
  Rng rng(99);
  Mlp net = Mlp::make({3, 12, 2}, {Act::LayernormTanh, Act::Identity}, 17);
  Matrix x(5, 3), g(5, 2);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.uniform(-1, 1);
  MlpWorkspace ws;
  forward_batch(net, x, &ws);
  const BatchGrad bg = backward_batch(net, ws, g);
  Vector acc = Vector::Zero(net.params.size());
  for (int i = 0; i < 5; ++i)
    acc += backward(net, x.row(i).transpose(), g.row(i).transpose()).first;
  REQUIRE((bg.param_grad - acc).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("layernorm-tanh output is bounded in (-1,1)") {
  Rng rng(3);
  const Mlp net = Mlp::make({4, 16, 16}, {Act::Identity, Act::LayernormTanh}, 8);
  for (int i = 0; i < 50; ++i) {
    Vector x(4);
    for (int k = 0; k < 4; ++k) x[k] = rng.uniform(-50.0, 50.0);
    const Vector y = forward(net, x);
    REQUIRE(y.cwiseAbs().maxCoeff() < 1.0);
  }
}

TEST_CASE("l2norm output never exceeds unit norm") {
  Rng rng(4);
  const Mlp net = Mlp::make({3, 8, 6}, {Act::Relu, Act::L2Norm}, 9);
  for (int i = 0; i < 50; ++i) {
    Vector x(3);
    for (int k = 0; k < 3; ++k) x[k] = rng.uniform(-10.0, 10.0);
    REQUIRE(forward(net, x).norm() <= 1.0 + 1e-9);
  }
}

TEST_CASE("avgl1norm matches its definition") {
  const Mlp net = Mlp::make({3, 3}, {Act::AvgL1Norm}, 10);
  Vector x(3);
  x << 1.0, -2.0, 3.0;
  const Vector z = net.weight(0) * x + net.bias(0);
  const Vector expected = z / (z.cwiseAbs().mean());
  REQUIRE((forward(net, x) - expected).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("non-finite upstream gradient is rejected") {
  Mlp net = Mlp::make({2, 3}, {Act::Identity}, 1);
  Vector x(2);
  x << 1.0, 2.0;
  Vector g(3);
  g << 1.0, std::numeric_limits<double>::quiet_NaN(), 0.0;
  REQUIRE_THROWS_AS(backward(net, x, g), NumericError);
}

TEST_CASE("dimension mismatch is rejected") {
  const Mlp net = Mlp::make({2, 3}, {Act::Identity}, 1);
  Vector x(5);
  x.setZero();
  REQUIRE_THROWS_AS(forward(net, x), std::invalid_argument);
}

TEST_CASE("checkpoint round-trips parameters bit-exactly") {
  const std::string path = std::string(SFM_TEST_TMPDIR) + "/mlp_ckpt.bin";
  Mlp net = Mlp::make({4, 8, 2}, {Act::Elu, Act::Tanh}, 33);
  save_params(path, net);
  Mlp other = Mlp::make({4, 8, 2}, {Act::Elu, Act::Tanh}, 77);
  REQUIRE_FALSE((other.params.array() == net.params.array()).all());
  load_params(path, other);
  REQUIRE((other.params.array() == net.params.array()).all());

  Mlp wrong = Mlp::make({4, 9, 2}, {Act::Elu, Act::Tanh}, 1);
  REQUIRE_THROWS(load_params(path, wrong));
  std::remove(path.c_str());
}

TEST_CASE("vector checkpoint round-trips") {
  const std::string path = std::string(SFM_TEST_TMPDIR) + "/vec_ckpt.bin";
  Vector v(5);
  v << 1.0, -2.5, 3.25, 0.0, 1e-18;
  save_vector_checkpoint(path, v);
  REQUIRE((load_vector_checkpoint(path).array() == v.array()).all());
  std::remove(path.c_str());
}
