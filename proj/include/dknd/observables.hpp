#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dknd/errors.hpp"
#include "dknd/linalg.hpp"
#include "dknd/types.hpp"

namespace dknd {

enum class Activation { ReLU };

/// Layer widths [n, h1, ..., r]. Hidden layers use `activation`; the output
/// layer is linear.
struct NetArchitecture {
  std::vector<int> layer_dims;
  Activation activation = Activation::ReLU;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  std::size_t num_layers() const { return layer_dims.size() - 1; }

  std::size_t parameter_count() const {
    std::size_t p = 0;
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
      p += static_cast<std::size_t>(layer_dims[l]) * layer_dims[l + 1] + layer_dims[l + 1];
    }
    return p;
  }

  void validate() const {
    if (layer_dims.size() < 2) throw ConfigError("architecture needs at least two widths");
    for (int d : layer_dims) {
      if (d <= 0) throw ConfigError("architecture widths must be positive");
    }
  }

  bool operator==(const NetArchitecture&) const = default;
};

/// Observable architectures per benchmark: [n, 512, 128, r].
inline NetArchitecture default_observable_arch(int state_dim, int lift_dim) {
  return {{state_dim, 512, 128, lift_dim}, Activation::ReLU};
}

/// Per-layer activations kept by forward() for backward().
template <typename Scalar>
struct ForwardCache {
  std::vector<MatrixX<Scalar>> pre;   ///< pre[l]: affine output of layer l
  std::vector<MatrixX<Scalar>> post;  ///< post[0]: inputs; post[l+1]: activation of pre[l]
  Eigen::Index batch() const { return post.empty() ? 0 : post.front().cols(); }
};

/// Multilayer perceptron whose weights and biases live in one flat vector.
/// Layer l stores W_l (out x in, column-major) followed by b_l (out).
template <typename Scalar>
class ObservableNet {
public:
  using Mat = MatrixX<Scalar>;
  using Vec = VectorX<Scalar>;
  using MatMap = Eigen::Map<Mat>;
  using ConstMatMap = Eigen::Map<const Mat>;
  using VecMap = Eigen::Map<Vec>;
  using ConstVecMap = Eigen::Map<const Vec>;

  ObservableNet() = default;

  ObservableNet(NetArchitecture arch, Vec theta) : arch_(std::move(arch)), theta_(std::move(theta)) {
    arch_.validate();
    if (static_cast<std::size_t>(theta_.size()) != arch_.parameter_count()) {
      throw ShapeMismatch("parameter vector length " + std::to_string(theta_.size()) +
                          " does not match architecture (" +
                          std::to_string(arch_.parameter_count()) + ")");
    }
    compute_offsets();
  }

  const NetArchitecture& arch() const { return arch_; }
  const Vec& theta() const { return theta_; }
  Vec& theta() { return theta_; }
  std::size_t num_layers() const { return arch_.num_layers(); }

  MatMap weight(std::size_t l) {
    return MatMap(theta_.data() + offsets_[l], arch_.layer_dims[l + 1], arch_.layer_dims[l]);
  }
  ConstMatMap weight(std::size_t l) const {
    return ConstMatMap(theta_.data() + offsets_[l], arch_.layer_dims[l + 1], arch_.layer_dims[l]);
  }
  VecMap bias(std::size_t l) {
    return VecMap(theta_.data() + bias_offset(l), arch_.layer_dims[l + 1]);
  }
  ConstVecMap bias(std::size_t l) const {
    return ConstVecMap(theta_.data() + bias_offset(l), arch_.layer_dims[l + 1]);
  }

  std::size_t weight_offset(std::size_t l) const { return offsets_[l]; }
  std::size_t bias_offset(std::size_t l) const {
    return offsets_[l] + static_cast<std::size_t>(arch_.layer_dims[l]) * arch_.layer_dims[l + 1];
  }

private:
  void compute_offsets() {
    offsets_.clear();
    std::size_t off = 0;
    for (std::size_t l = 0; l < arch_.num_layers(); ++l) {
      offsets_.push_back(off);
      off += static_cast<std::size_t>(arch_.layer_dims[l]) * arch_.layer_dims[l + 1] +
             arch_.layer_dims[l + 1];
    }
  }

  NetArchitecture arch_;
  Vec theta_;
  std::vector<std::size_t> offsets_;
};

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
template <typename Scalar = double>
ObservableNet<Scalar> init_network(const NetArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  ObservableNet<Scalar> net(arch, VectorX<Scalar>::Zero(static_cast<Eigen::Index>(arch.parameter_count())));
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(arch.layer_dims[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto W = net.weight(l);
    for (Eigen::Index j = 0; j < W.cols(); ++j) {
      for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = static_cast<Scalar>(dist(rng));
    }
  }
  return net;
}

/// Evaluates g on every column of `inputs` (n x T) and returns (r x T, cache).
template <typename Scalar, typename Derived>
std::pair<MatrixX<Scalar>, ForwardCache<Scalar>> forward(const ObservableNet<Scalar>& net,
                                                         const Eigen::MatrixBase<Derived>& inputs) {
  if (inputs.rows() != net.arch().input_dim()) {
    throw ShapeMismatch("forward: input has " + std::to_string(inputs.rows()) + " rows, expected " +
                        std::to_string(net.arch().input_dim()));
  }
  ForwardCache<Scalar> cache;
  const std::size_t L = net.num_layers();
  cache.pre.reserve(L);
  cache.post.reserve(L + 1);
  cache.post.emplace_back(inputs);
  for (std::size_t l = 0; l < L; ++l) {
    MatrixX<Scalar> z = net.weight(l) * cache.post.back();
    z.colwise() += net.bias(l);
    cache.pre.push_back(std::move(z));
    if (l + 1 < L) {
      cache.post.emplace_back(cache.pre.back().cwiseMax(Scalar(0)));
    } else {
      cache.post.emplace_back(cache.pre.back());
    }
  }
  MatrixX<Scalar> out = cache.post.back();
  return {std::move(out), std::move(cache)};
}

/// Evaluation without keeping a cache.
template <typename Scalar, typename Derived>
MatrixX<Scalar> evaluate(const ObservableNet<Scalar>& net, const Eigen::MatrixBase<Derived>& inputs) {
  if (inputs.rows() != net.arch().input_dim()) {
    throw ShapeMismatch("evaluate: input row count does not match the network");
  }
  MatrixX<Scalar> a = inputs;
  const std::size_t L = net.num_layers();
  for (std::size_t l = 0; l < L; ++l) {
    MatrixX<Scalar> z = net.weight(l) * a;
    z.colwise() += net.bias(l);
    a = (l + 1 < L) ? MatrixX<Scalar>(z.cwiseMax(Scalar(0))) : std::move(z);
  }
  return a;
}

template <typename Scalar>
struct Gradients {
  VectorX<Scalar> theta;
  MatrixX<Scalar> inputs;
};

/// Reverse pass: gradients of <upstream, g(inputs, theta)> w.r.t. theta and
/// the inputs. The ReLU derivative at zero is taken as zero.
template <typename Scalar, typename Derived>
Gradients<Scalar> backward(const ObservableNet<Scalar>& net, const ForwardCache<Scalar>& cache,
                           const Eigen::MatrixBase<Derived>& upstream) {
  const std::size_t L = net.num_layers();
  if (cache.pre.size() != L || cache.post.size() != L + 1 ||
      cache.post.front().rows() != net.arch().input_dim() ||
      cache.pre.back().rows() != net.arch().output_dim()) {
    throw StaleCache("backward: cache does not belong to this network");
  }
  if (upstream.rows() != cache.pre.back().rows() || upstream.cols() != cache.batch()) {
    throw StaleCache("backward: upstream shape does not match the cached batch");
  }

  Gradients<Scalar> g;
  g.theta = VectorX<Scalar>::Zero(net.theta().size());
  MatrixX<Scalar> delta = upstream;
  for (std::size_t l = L; l-- > 0;) {
    if (l + 1 < L) delta.array() *= (cache.pre[l].array() > Scalar(0)).template cast<Scalar>();
    Eigen::Map<MatrixX<Scalar>> dW(g.theta.data() + net.weight_offset(l), net.arch().layer_dims[l + 1],
                                   net.arch().layer_dims[l]);
    dW.noalias() = delta * cache.post[l].transpose();
    g.theta.segment(static_cast<Eigen::Index>(net.bias_offset(l)), delta.rows()) = delta.rowwise().sum();
    MatrixX<Scalar> next = net.weight(l).transpose() * delta;
    delta = std::move(next);
  }
  g.inputs = std::move(delta);
  return g;
}

/// Product of layer spectral norms; ReLU is 1-Lipschitz, so this bounds L_g.
template <typename Scalar>
Scalar lipschitz_upper_bound(const ObservableNet<Scalar>& net) {
  Scalar bound(1);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const MatrixX<Scalar> W = net.weight(l);
    const auto f = svd(W);
    bound *= f.S.size() ? f.S(0) : Scalar(0);
  }
  return bound;
}

}  // namespace dknd
