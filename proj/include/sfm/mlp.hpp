#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfm/rng.hpp"

namespace sfm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Act { Identity, Relu, Elu, Tanh, LayernormTanh, L2Norm, AvgL1Norm, Softplus };

inline constexpr double kLayernormEps = 1e-5;
inline constexpr double kNormEps = 1e-8;  // division floor for L2Norm / AvgL1Norm

// Feed-forward net with per-layer activation tags and a flat parameter
// vector. Gradients are exact analytic compositions; there is no autodiff
// graph. Layer l computes act_l(H_{l-1} W_l^T + b_l) with W_l (out x in).
struct Mlp {
  std::vector<int> layer_sizes;  // n_layers + 1 entries
  std::vector<Act> activations;  // one per layer
  Vector params;
  uint64_t rng_seed = 0;

  static int param_count(const std::vector<int>& sizes) {
    int n = 0;
    for (size_t l = 0; l + 1 < sizes.size(); ++l) n += (sizes[l] + 1) * sizes[l + 1];
    return n;
  }

  static Mlp make(std::vector<int> sizes, std::vector<Act> acts, uint64_t seed,
                  double final_layer_scale = 1.0) {
    if (sizes.size() < 2 || acts.size() != sizes.size() - 1)
      throw std::invalid_argument("Mlp::make: need n+1 sizes and n activations");
    Mlp net;
    net.layer_sizes = std::move(sizes);
    net.activations = std::move(acts);
    net.rng_seed = seed;
    net.params = Vector::Zero(param_count(net.layer_sizes));
    Rng rng(seed);
    for (int l = 0; l < net.n_layers(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(net.layer_sizes[l]));
      const double scale = (l == net.n_layers() - 1) ? final_layer_scale : 1.0;
      auto w = net.weight(l);
      for (int j = 0; j < w.size(); ++j) w.data()[j] = scale * rng.uniform(-bound, bound);
      auto b = net.bias(l);
      for (int j = 0; j < b.size(); ++j) b[j] = scale * rng.uniform(-bound, bound);
    }
    return net;
  }

  int n_layers() const { return static_cast<int>(activations.size()); }
  int in_dim() const { return layer_sizes.front(); }
  int out_dim() const { return layer_sizes.back(); }

  int layer_offset(int l) const {
    int off = 0;
    for (int k = 0; k < l; ++k) off += (layer_sizes[k] + 1) * layer_sizes[k + 1];
    return off;
  }

  Eigen::Map<Matrix> weight(int l) {
    return {params.data() + layer_offset(l), layer_sizes[l + 1], layer_sizes[l]};
  }
  Eigen::Map<const Matrix> weight(int l) const {
    return {params.data() + layer_offset(l), layer_sizes[l + 1], layer_sizes[l]};
  }
  Eigen::Map<Vector> bias(int l) {
    return {params.data() + layer_offset(l) + layer_sizes[l] * layer_sizes[l + 1],
            layer_sizes[l + 1]};
  }
  Eigen::Map<const Vector> bias(int l) const {
    return {params.data() + layer_offset(l) + layer_sizes[l] * layer_sizes[l + 1],
            layer_sizes[l + 1]};
  }
};

// Caches every pre/post activation of a forward pass for the backward pass.
struct MlpWorkspace {
  Matrix input;              // batch x in
  std::vector<Matrix> pre;   // Z_l, batch x out_l
  std::vector<Matrix> post;  // H_l = act(Z_l)
};

namespace detail {

// tanh via the vectorizable exp kernel: Eigen's double tanh falls back to
// one libm call per coefficient, which dominates wide layers.
inline Matrix fast_tanh(const Matrix& z) {
  const auto t = (-2.0 * z.array().abs()).exp();
  return (z.array().sign() * (1.0 - t) / (1.0 + t)).matrix();
}

inline void activation_forward(Act act, const Matrix& z, Matrix& h) {
  switch (act) {
    case Act::Identity:
      h = z;
      break;
    case Act::Relu:
      h = z.cwiseMax(0.0);
      break;
    case Act::Elu:
      h = (z.array() > 0.0).select(z.array(), z.array().exp() - 1.0);
      break;
    case Act::Tanh:
      h = fast_tanh(z);
      break;
    case Act::Softplus:
      // log1p(exp(z)) with overflow guard
      h = (z.array() > 30.0).select(z.array(), (z.array().exp() + 1.0).log());
      break;
    case Act::LayernormTanh: {
      const Vector mu = z.rowwise().mean();
      Matrix centered = z.colwise() - mu;
      const Vector inv_sd =
          ((centered.array().square().rowwise().mean() + kLayernormEps).sqrt()).inverse();
      centered.array().colwise() *= inv_sd.array();
      h = fast_tanh(centered);
      break;
    }
    case Act::L2Norm: {
      const Vector inv = z.rowwise().norm().cwiseMax(kNormEps).cwiseInverse();
      h = z.array().colwise() * inv.array();
      break;
    }
    case Act::AvgL1Norm: {
      const Vector inv = (z.cwiseAbs().rowwise().mean()).cwiseMax(kNormEps).cwiseInverse();
      h = z.array().colwise() * inv.array();
      break;
    }
  }
}

inline Matrix activation_backward(Act act, const Matrix& z, const Matrix& h, const Matrix& g) {
  switch (act) {
    case Act::Identity:
      return g;
    case Act::Relu:
      return (z.array() > 0.0).select(g, 0.0);
    case Act::Elu:
      return (z.array() > 0.0).select(g.array(), g.array() * z.array().exp());
    case Act::Tanh:
      return g.array() * (1.0 - h.array().square());
    case Act::Softplus:
      return g.array() * (1.0 / (1.0 + (-z.array()).exp()));
    case Act::LayernormTanh: {
      const Vector mu = z.rowwise().mean();
      Matrix u = z.colwise() - mu;
      const Vector inv_sd =
          ((u.array().square().rowwise().mean() + kLayernormEps).sqrt()).inverse();
      u.array().colwise() *= inv_sd.array();
      Matrix du = g.array() * (1.0 - h.array().square());
      const Vector du_mean = du.rowwise().mean();
      const Vector duu_mean = du.cwiseProduct(u).rowwise().mean();
      du.colwise() -= du_mean;
      du -= (u.array().colwise() * duu_mean.array()).matrix();
      du.array().colwise() *= inv_sd.array();
      return du;
    }
    case Act::L2Norm: {
      const Vector n = z.rowwise().norm();
      const Eigen::ArrayXd small = (n.array() <= kNormEps).cast<double>();
      const Vector hg = h.cwiseProduct(g).rowwise().sum();
      Matrix out = g - (h.array().colwise() * hg.array()).matrix();
      out.array().colwise() /= n.array().max(kNormEps);
      // rows at the division floor keep the constant-denominator gradient
      out.array().colwise() *= (1.0 - small);
      out += (g.array().colwise() * (small / kNormEps)).matrix();
      return out;
    }
    case Act::AvgL1Norm: {
      const int k = static_cast<int>(z.cols());
      const Vector m = z.cwiseAbs().rowwise().mean();
      const Eigen::ArrayXd small = (m.array() <= kNormEps).cast<double>();
      const Vector gz = g.cwiseProduct(z).rowwise().sum();
      const Eigen::ArrayXd mm = m.array().max(kNormEps);
      Matrix out = (g.array().colwise() / mm).matrix() -
                   (z.array().sign().colwise() * (gz.array() / (k * mm * mm))).matrix();
      out.array().colwise() *= (1.0 - small);
      out += (g.array().colwise() * (small / kNormEps)).matrix();
      return out;
    }
  }
  return g;  // unreachable
}

}  // namespace detail

// X is batch x in_dim, rows are samples. Pass a workspace to enable backward.
inline Matrix forward_batch(const Mlp& net, const Matrix& x, MlpWorkspace* ws = nullptr) {
  if (x.cols() != net.in_dim())
    throw std::invalid_argument("Mlp forward: input has " + std::to_string(x.cols()) +
                                " columns, expected " + std::to_string(net.in_dim()));
  if (ws) {
    ws->input = x;
    ws->pre.resize(net.n_layers());
    ws->post.resize(net.n_layers());
    const Matrix* below = &ws->input;
    for (int l = 0; l < net.n_layers(); ++l) {
      ws->pre[l].noalias() = *below * net.weight(l).transpose();
      ws->pre[l].rowwise() += net.bias(l).transpose();
      detail::activation_forward(net.activations[l], ws->pre[l], ws->post[l]);
      below = &ws->post[l];
    }
    return ws->post.back();
  }
  Matrix h = x;
  for (int l = 0; l < net.n_layers(); ++l) {
    Matrix z;
    z.noalias() = h * net.weight(l).transpose();
    z.rowwise() += net.bias(l).transpose();
    detail::activation_forward(net.activations[l], z, h);
  }
  return h;
}

struct BatchGrad {
  Vector param_grad;
  Matrix input_grad;
};

// Gradient of sum_i <g_i, f(x_i)> with respect to parameters and inputs.
// The workspace must come from a forward_batch call on the same net.
inline BatchGrad backward_batch(const Mlp& net, const MlpWorkspace& ws, const Matrix& g) {
  if (!g.allFinite()) throw NumericError("Mlp backward: non-finite upstream gradient");
  if (g.rows() != ws.input.rows() || g.cols() != net.out_dim())
    throw std::invalid_argument("Mlp backward: upstream gradient shape mismatch");
  BatchGrad out;
  out.param_grad = Vector::Zero(net.params.size());
  Matrix gh = g;
  for (int l = net.n_layers() - 1; l >= 0; --l) {
    const Matrix gz = detail::activation_backward(net.activations[l], ws.pre[l], ws.post[l], gh);
    const Matrix& below = (l == 0) ? ws.input : ws.post[l - 1];
    const int off = net.layer_offset(l);
    Eigen::Map<Matrix> gw(out.param_grad.data() + off, net.layer_sizes[l + 1],
                          net.layer_sizes[l]);
    gw.noalias() = gz.transpose() * below;
    Eigen::Map<Vector> gb(out.param_grad.data() + off +
                              net.layer_sizes[l] * net.layer_sizes[l + 1],
                          net.layer_sizes[l + 1]);
    gb = gz.colwise().sum().transpose();
    gh.noalias() = gz * net.weight(l);
  }
  out.input_grad = std::move(gh);
  return out;
}

inline Vector forward(const Mlp& net, const Vector& x) {
  return forward_batch(net, x.transpose()).row(0).transpose();
}

// (param_grad, input_grad) of <g, forward(net, x)>
inline std::pair<Vector, Vector> backward(const Mlp& net, const Vector& x, const Vector& g) {
  MlpWorkspace ws;
  forward_batch(net, x.transpose(), &ws);
  BatchGrad bg = backward_batch(net, ws, g.transpose());
  return {std::move(bg.param_grad), bg.input_grad.row(0).transpose()};
}

inline uint64_t hash_bytes(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t param_hash(const Vector& params) {
  return hash_bytes(params.data(), sizeof(double) * params.size());
}

// Checkpoint format: magic "SFM1", u32 layer count, u32 sizes, then the flat
// parameter vector as little-endian 64-bit floats.
inline void save_params(const std::string& path, const Mlp& net) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write("SFM1", 4);
  const auto n = static_cast<uint32_t>(net.layer_sizes.size());
  f.write(reinterpret_cast<const char*>(&n), 4);
  for (int s : net.layer_sizes) {
    const auto v = static_cast<uint32_t>(s);
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  f.write(reinterpret_cast<const char*>(net.params.data()),
          static_cast<std::streamsize>(sizeof(double) * net.params.size()));
  if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

inline std::vector<int> checkpoint_layer_sizes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "SFM1", 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  uint32_t n = 0;
  f.read(reinterpret_cast<char*>(&n), 4);
  if (!f || n < 1 || n > 64) throw std::runtime_error("corrupt checkpoint header in " + path);
  std::vector<int> sizes(n);
  for (auto& s : sizes) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    s = static_cast<int>(v);
  }
  if (!f) throw std::runtime_error("corrupt checkpoint header in " + path);
  return sizes;
}

// Bare vectors (e.g. SF clip bounds) reuse the container with a single size.
inline void save_vector_checkpoint(const std::string& path, const Vector& v) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  f.write("SFM1", 4);
  const uint32_t n = 1;
  f.write(reinterpret_cast<const char*>(&n), 4);
  const auto len = static_cast<uint32_t>(v.size());
  f.write(reinterpret_cast<const char*>(&len), 4);
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(sizeof(double) * v.size()));
}

inline Vector load_vector_checkpoint(const std::string& path) {
  const auto sizes = checkpoint_layer_sizes(path);
  if (sizes.size() != 1) throw std::runtime_error("not a vector checkpoint: " + path);
  std::ifstream f(path, std::ios::binary);
  f.seekg(4 + 4 + 4);
  Vector v(sizes[0]);
  f.read(reinterpret_cast<char*>(v.data()),
         static_cast<std::streamsize>(sizeof(double) * v.size()));
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);
  return v;
}

inline void load_params(const std::string& path, Mlp& net) {
  const auto sizes = checkpoint_layer_sizes(path);
  if (sizes != net.layer_sizes)
    throw std::runtime_error("checkpoint layer sizes do not match target network: " + path);
  std::ifstream f(path, std::ios::binary);
  f.seekg(4 + 4 + 4 * static_cast<std::streamoff>(sizes.size()));
  f.read(reinterpret_cast<char*>(net.params.data()),
         static_cast<std::streamsize>(sizeof(double) * net.params.size()));
  if (!f) throw std::runtime_error("truncated checkpoint: " + path);
}

}  // namespace sfm
