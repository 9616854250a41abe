#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "dmaloc/errors.hpp"
#include "dmaloc/types.hpp"

namespace dmaloc {

/// Fully connected stack: ReLU after every layer except the last.
struct MlpSpec {
  int input_size = 0;
  std::vector<int> layer_output_sizes{625, 625, 625};

  int output_size() const { return layer_output_sizes.empty() ? 0 : layer_output_sizes.back(); }
  void validate() const {
    if (input_size <= 0 || layer_output_sizes.empty()) {
      throw Error(ErrorKind::InvalidArgument, "MLP needs a positive input size and >= 1 layer");
    }
    for (int s : layer_output_sizes)
      if (s <= 0) throw Error(ErrorKind::InvalidArgument, "MLP layer sizes must be positive");
  }
  bool operator==(const MlpSpec&) const = default;
};

template <typename Scalar>
struct DenseLayer {
  Matrix<Scalar> weight;  // out x in
  Vector<Scalar> bias;    // out
};

namespace detail {
inline std::uint64_t next_revision() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

template <typename Scalar>
class Mlp {
 public:
  Mlp() = default;

  /// Zero weights.
  explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    int fan_in = spec_.input_size;
    for (int out : spec_.layer_output_sizes) {
      layers_.push_back({Matrix<Scalar>::Zero(out, fan_in), Vector<Scalar>::Zero(out)});
      fan_in = out;
    }
  }

  /// Weights uniform in +-sqrt(6 / fan_in), zero biases.
  static Mlp random(const MlpSpec& spec, Rng& rng) {
    Mlp mlp(spec);
    for (auto& layer : mlp.layers_) {
      const double limit = std::sqrt(6.0 / double(layer.weight.cols()));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (Index k = 0; k < layer.weight.size(); ++k) {
        layer.weight.data()[k] = static_cast<Scalar>(dist(rng));
      }
    }
    return mlp;
  }

  const MlpSpec& spec() const { return spec_; }
  int input_size() const { return spec_.input_size; }
  int output_size() const { return spec_.output_size(); }
  std::size_t num_layers() const { return layers_.size(); }
  std::uint64_t revision() const { return revision_; }

  const std::vector<DenseLayer<Scalar>>& layers() const { return layers_; }
  /// Any mutable access invalidates caches taken from earlier forwards.
  std::vector<DenseLayer<Scalar>>& mutable_layers() {
    revision_ = detail::next_revision();
    return layers_;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  template <typename Other>
  Mlp<Other> cast() const {
    Mlp<Other> out(spec_);
    auto& dst = out.mutable_layers();
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      dst[l].weight = layers_[l].weight.template cast<Other>();
      dst[l].bias = layers_[l].bias.template cast<Other>();
    }
    return out;
  }

 private:
  MlpSpec spec_;
  std::vector<DenseLayer<Scalar>> layers_;
  std::uint64_t revision_ = detail::next_revision();
};

/// Activations retained by a forward pass for the matching backward pass.
template <typename Scalar>
struct MlpCache {
  std::vector<Matrix<Scalar>> inputs;  // input to each layer
  std::vector<Matrix<Scalar>> pre;     // pre-activation of each layer
  std::uint64_t revision = 0;
};

template <typename Scalar>
struct MlpGradients {
  std::vector<Matrix<Scalar>> weight;
  std::vector<Vector<Scalar>> bias;
  Matrix<Scalar> input;
};

/// Columns of `x` are independent samples.
template <typename Scalar>
Matrix<Scalar> mlp_forward(const Mlp<Scalar>& mlp,
                           const std::type_identity_t<Eigen::Ref<const Matrix<Scalar>>>& x,
                           MlpCache<Scalar>* cache = nullptr) {
  if (x.rows() != mlp.input_size()) {
    throw Error(ErrorKind::DimensionMismatch, "MLP expects input size " +
                                                  std::to_string(mlp.input_size()) + ", got " +
                                                  std::to_string(x.rows()));
  }
  const auto& layers = mlp.layers();
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
    cache->revision = mlp.revision();
  }
  Matrix<Scalar> a = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix<Scalar> pre(layers[l].weight.rows(), a.cols());
    pre.noalias() = layers[l].weight * a;
    pre.colwise() += layers[l].bias;
    const bool hidden = l + 1 < layers.size();
    if (cache) cache->inputs.push_back(std::move(a));
    a = hidden ? Matrix<Scalar>(pre.cwiseMax(Scalar(0))) : pre;
    if (cache) cache->pre.push_back(std::move(pre));
  }
  return a;
}

template <typename Scalar>
Vector<Scalar> mlp_forward(const Mlp<Scalar>& mlp, const Vector<Scalar>& x) {
  return mlp_forward(mlp, Eigen::Ref<const Matrix<Scalar>>(x)).col(0);
}

/// Exact gradients of sum(upstream .* output) w.r.t. weights, biases and input.
template <typename Scalar>
MlpGradients<Scalar> mlp_backward(const Mlp<Scalar>& mlp, const MlpCache<Scalar>& cache,
                                  const std::type_identity_t<Eigen::Ref<const Matrix<Scalar>>>& upstream) {
  const auto& layers = mlp.layers();
  if (cache.revision != mlp.revision() || cache.pre.size() != layers.size()) {
    throw Error(ErrorKind::StaleCache, "MLP cache does not belong to the current weights");
  }
  if (upstream.rows() != mlp.output_size() || upstream.cols() != cache.pre.back().cols()) {
    throw Error(ErrorKind::DimensionMismatch, "upstream gradient shape mismatch");
  }
  MlpGradients<Scalar> grads;
  grads.weight.resize(layers.size());
  grads.bias.resize(layers.size());
  Matrix<Scalar> delta = upstream;
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (l + 1 < layers.size()) {
      delta = delta.cwiseProduct((cache.pre[l].array() > Scalar(0)).template cast<Scalar>().matrix());
    }
    grads.weight[l].noalias() = delta * cache.inputs[l].transpose();
    grads.bias[l] = delta.rowwise().sum();
    Matrix<Scalar> next(layers[l].weight.cols(), delta.cols());
    next.noalias() = layers[l].weight.transpose() * delta;
    delta = std::move(next);
  }
  grads.input = std::move(delta);
  return grads;
}

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
struct AdamState {
  std::vector<Matrix<Scalar>> m_weight, v_weight;
  std::vector<Vector<Scalar>> m_bias, v_bias;
  long step = 0;

  AdamState() = default;
  explicit AdamState(const Mlp<Scalar>& mlp) {
    for (const auto& l : mlp.layers()) {
      m_weight.push_back(Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()));
      v_weight.push_back(Matrix<Scalar>::Zero(l.weight.rows(), l.weight.cols()));
      m_bias.push_back(Vector<Scalar>::Zero(l.bias.size()));
      v_bias.push_back(Vector<Scalar>::Zero(l.bias.size()));
    }
  }
};

namespace detail {
template <typename Param, typename Grad, typename Moment>
void adam_update(Param& w, const Grad& g, Moment& m, Moment& v, double b1, double b2, double lr_t,
                 double eps_t) {
  using S = typename Param::Scalar;
  m = S(b1) * m + S(1 - b1) * g;
  v = S(b2) * v + S(1 - b2) * g.cwiseProduct(g);
  w.array() -= S(lr_t) * m.array() / (v.array().sqrt() + S(eps_t));
}
}  // namespace detail

/// Adam with bias correction.
template <typename Scalar>
void adam_step(AdamState<Scalar>& state, Mlp<Scalar>& mlp, const MlpGradients<Scalar>& grads,
               const AdamConfig& config) {
  auto& layers = mlp.mutable_layers();
  if (grads.weight.size() != layers.size() || state.m_weight.size() != layers.size()) {
    throw Error(ErrorKind::DimensionMismatch, "Adam state/gradient layer count mismatch");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, double(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, double(state.step));
  // lr * mhat / (sqrt(vhat) + eps) rewritten on the raw moments.
  const double lr_t = config.lr * std::sqrt(c2) / c1;
  const double eps_t = config.epsilon * std::sqrt(c2);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (grads.weight[l].rows() != layers[l].weight.rows() ||
        grads.weight[l].cols() != layers[l].weight.cols()) {
      throw Error(ErrorKind::DimensionMismatch, "Adam gradient shape mismatch");
    }
    detail::adam_update(layers[l].weight, grads.weight[l], state.m_weight[l], state.v_weight[l],
                        config.beta1, config.beta2, lr_t, eps_t);
    detail::adam_update(layers[l].bias, grads.bias[l], state.m_bias[l], state.v_bias[l],
                        config.beta1, config.beta2, lr_t, eps_t);
  }
}

}  // namespace dmaloc
