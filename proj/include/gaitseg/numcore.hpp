#pragma once

// Dense multi-channel 1-D layers with hand-written reverse-mode gradients.
//
// A signal is a [channels x samples] matrix. Every op here is a free function
// templated on the scalar type; the library instantiates them for double.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "gaitseg/errors.hpp"

namespace gaitseg {

using Eigen::Index;

template <typename Scalar>
using Signal = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using FlatArray = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

using Signal2D = Signal<double>;

template <typename Scalar>
using SignalRef = Eigen::Ref<const Signal<std::type_identity_t<Scalar>>>;

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// Convolution

/// Weights are stored as [out x (kernel * in)]: tap k occupies the column
/// block [k*in, (k+1)*in). weight(o, i, k) gives the logical [out][in][kernel]
/// view used by checkpoints.
template <typename Scalar = double>
struct ConvParams {
  Signal<Scalar> weights;
  Vector<Scalar> bias;
  int kernel = 1;
  int dilation = 1;

  static ConvParams zeros(Index out_ch, Index in_ch, int kernel, int dilation = 1) {
    ConvParams p;
    p.weights = Signal<Scalar>::Zero(out_ch, in_ch * kernel);
    p.bias = Vector<Scalar>::Zero(out_ch);
    p.kernel = kernel;
    p.dilation = dilation;
    return p;
  }

  Index out_channels() const { return weights.rows(); }
  Index in_channels() const { return kernel > 0 ? weights.cols() / kernel : 0; }

  Scalar& weight(Index o, Index i, int k) { return weights(o, k * in_channels() + i); }
  Scalar weight(Index o, Index i, int k) const { return weights(o, k * in_channels() + i); }

  /// Reach of the kernel on each side, in samples.
  Index radius() const { return Index(kernel - 1) / 2 * dilation; }

  void validate() const {
    if (kernel < 1 || kernel % 2 == 0)
      throw ConfigError("convolution kernel must be a positive odd integer, got " +
                        std::to_string(kernel));
    if (dilation < 1)
      throw ConfigError("convolution dilation must be >= 1, got " + std::to_string(dilation));
    if (weights.cols() % kernel != 0 || bias.size() != weights.rows())
      throw ContractError("convolution parameter shapes are inconsistent");
  }
};

namespace detail {

inline Index checked_segment(Index cols, Index segment) {
  if (segment <= 0) segment = cols;
  if (cols == 0 || cols % segment != 0)
    throw ContractError("sample count " + std::to_string(cols) +
                        " is not a multiple of the segment length " + std::to_string(segment));
  return segment;
}

// For tap k (offset `shift` samples), the output range [lo, hi) within a
// segment reads input samples [lo + shift, hi + shift).
inline bool tap_range(Index segment, Index shift, Index& lo, Index& hi) {
  lo = std::max<Index>(0, -shift);
  hi = std::min<Index>(segment, segment - shift);
  return hi > lo;
}

}  // namespace detail

/// Same-length dilated convolution with zero padding. When `segment` is set,
/// the columns of x are treated as independent back-to-back sequences of that
/// length and padding is applied at every sequence boundary.
template <typename Scalar>
Signal<Scalar> conv1d_forward(const SignalRef<Scalar>& x, const ConvParams<Scalar>& p,
                              Index segment = 0) {
  p.validate();
  if (p.in_channels() != x.rows())
    throw ContractError("conv1d_forward: expected " + std::to_string(p.in_channels()) +
                        " input channels, got " + std::to_string(x.rows()));
  segment = detail::checked_segment(x.cols(), segment);
  const Index in = p.in_channels();
  const Index half = (p.kernel - 1) / 2;

  Signal<Scalar> out(p.out_channels(), x.cols());
  out.colwise() = p.bias;
  for (Index start = 0; start < x.cols(); start += segment) {
    for (int k = 0; k < p.kernel; ++k) {
      const Index shift = (k - half) * p.dilation;
      Index lo, hi;
      if (!detail::tap_range(segment, shift, lo, hi)) continue;
      out.middleCols(start + lo, hi - lo).noalias() +=
          p.weights.middleCols(k * in, in) * x.middleCols(start + lo + shift, hi - lo);
    }
  }
  return out;
}

template <typename Scalar = double>
struct ConvGrads {
  Signal<Scalar> grad_x;
  Signal<Scalar> grad_w;
  Vector<Scalar> grad_b;
};

template <typename Scalar>
ConvGrads<Scalar> conv1d_backward(const SignalRef<Scalar>& x, const ConvParams<Scalar>& p,
                                  const SignalRef<Scalar>& grad_out, Index segment = 0) {
  p.validate();
  if (p.in_channels() != x.rows() || grad_out.rows() != p.out_channels() ||
      grad_out.cols() != x.cols())
    throw ContractError("conv1d_backward: shapes of x, params and grad_out disagree");
  segment = detail::checked_segment(x.cols(), segment);
  const Index in = p.in_channels();
  const Index half = (p.kernel - 1) / 2;

  ConvGrads<Scalar> g;
  g.grad_x = Signal<Scalar>::Zero(x.rows(), x.cols());
  g.grad_w = Signal<Scalar>::Zero(p.weights.rows(), p.weights.cols());
  g.grad_b = grad_out.rowwise().sum();
  for (Index start = 0; start < x.cols(); start += segment) {
    for (int k = 0; k < p.kernel; ++k) {
      const Index shift = (k - half) * p.dilation;
      Index lo, hi;
      if (!detail::tap_range(segment, shift, lo, hi)) continue;
      const auto go = grad_out.middleCols(start + lo, hi - lo);
      g.grad_x.middleCols(start + lo + shift, hi - lo).noalias() +=
          p.weights.middleCols(k * in, in).transpose() * go;
      g.grad_w.middleCols(k * in, in).noalias() +=
          go * x.middleCols(start + lo + shift, hi - lo).transpose();
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalization over the sample axis

template <typename Scalar = double>
struct BatchNormParams {
  Vector<Scalar> gamma;
  Vector<Scalar> beta;
  Vector<Scalar> running_mean;
  Vector<Scalar> running_var;
  Scalar momentum = Scalar(0.1);
  Scalar epsilon = Scalar(1e-5);
  Mode mode = Mode::train;

  static BatchNormParams identity(Index channels) {
    BatchNormParams p;
    p.gamma = Vector<Scalar>::Ones(channels);
    p.beta = Vector<Scalar>::Zero(channels);
    p.running_mean = Vector<Scalar>::Zero(channels);
    p.running_var = Vector<Scalar>::Ones(channels);
    return p;
  }

  Index channels() const { return gamma.size(); }
};

namespace detail {

template <typename Scalar>
void check_bn(const SignalRef<Scalar>& x, const BatchNormParams<Scalar>& p, const char* op) {
  const Index c = p.channels();
  if (x.rows() != c || p.beta.size() != c || p.running_mean.size() != c ||
      p.running_var.size() != c)
    throw ContractError(std::string(op) + ": expected " + std::to_string(c) +
                        " channels, got " + std::to_string(x.rows()));
  if (!(p.epsilon > 0)) throw ConfigError(std::string(op) + ": epsilon must be positive");
}

template <typename Scalar>
void check_batch(const SignalRef<Scalar>& x, const char* op) {
  if (x.cols() < 2)
    throw ContractError(std::string(op) +
                        ": train-mode batch statistics need at least 2 samples per channel");
}

}  // namespace detail

/// Eval-mode normalization with the running statistics. Never mutates.
template <typename Scalar>
Signal<Scalar> batchnorm_eval(const SignalRef<Scalar>& x, const BatchNormParams<Scalar>& p) {
  detail::check_bn<Scalar>(x, p, "batchnorm_eval");
  const Vector<Scalar> scale =
      p.gamma.array() / (p.running_var.array() + p.epsilon).sqrt();
  const Vector<Scalar> shift = p.beta.array() - scale.array() * p.running_mean.array();
  Signal<Scalar> y = x;
  y.array().colwise() *= scale.array();
  y.colwise() += shift;
  return y;
}

/// Mode-dispatched forward. Train mode normalizes with per-channel batch
/// statistics and folds them into the running estimates (unbiased variance).
template <typename Scalar>
Signal<Scalar> batchnorm_forward(const SignalRef<Scalar>& x, BatchNormParams<Scalar>& p) {
  if (p.mode == Mode::eval) return batchnorm_eval<Scalar>(x, p);
  detail::check_bn<Scalar>(x, p, "batchnorm_forward");
  detail::check_batch<Scalar>(x, "batchnorm_forward");
  const Scalar n = Scalar(x.cols());
  const Vector<Scalar> mean = x.rowwise().mean();
  Signal<Scalar> y = x.colwise() - mean;
  const Vector<Scalar> var = y.array().square().rowwise().sum() / n;
  const Vector<Scalar> inv_std = (var.array() + p.epsilon).rsqrt();
  y.array().colwise() *= (inv_std.array() * p.gamma.array());
  y.colwise() += p.beta;

  p.running_mean = (1 - p.momentum) * p.running_mean + p.momentum * mean;
  p.running_var = (1 - p.momentum) * p.running_var + p.momentum * (var * (n / (n - 1)));
  return y;
}

template <typename Scalar = double>
struct BatchNormGrads {
  Signal<Scalar> grad_x;
  Vector<Scalar> grad_gamma;
  Vector<Scalar> grad_beta;
};

/// Gradients of the train-mode forward; batch statistics are recomputed from x.
template <typename Scalar>
BatchNormGrads<Scalar> batchnorm_backward(const SignalRef<Scalar>& x,
                                          const BatchNormParams<Scalar>& p,
                                          const SignalRef<Scalar>& grad_out) {
  detail::check_bn<Scalar>(x, p, "batchnorm_backward");
  detail::check_batch<Scalar>(x, "batchnorm_backward");
  if (grad_out.rows() != x.rows() || grad_out.cols() != x.cols())
    throw ContractError("batchnorm_backward: grad_out shape differs from x");
  const Scalar n = Scalar(x.cols());
  const Vector<Scalar> mean = x.rowwise().mean();
  Signal<Scalar> xhat = x.colwise() - mean;
  const Vector<Scalar> var = xhat.array().square().rowwise().sum() / n;
  const Vector<Scalar> inv_std = (var.array() + p.epsilon).rsqrt();
  xhat.array().colwise() *= inv_std.array();

  BatchNormGrads<Scalar> g;
  g.grad_beta = grad_out.rowwise().sum();
  g.grad_gamma = grad_out.cwiseProduct(xhat).rowwise().sum();
  // dx = gamma * inv_std / n * (n * dy - sum(dy) - xhat * sum(dy * xhat))
  g.grad_x = (n * grad_out).colwise() - g.grad_beta;
  xhat.array().colwise() *= g.grad_gamma.array();
  g.grad_x -= xhat;
  g.grad_x.array().colwise() *= (p.gamma.array() * inv_std.array() / n);
  return g;
}

// ---------------------------------------------------------------------------
// Activations

template <typename Derived>
Signal<typename Derived::Scalar> relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

/// Subgradient at 0 is taken as 0.
template <typename DerivedX, typename DerivedG>
Signal<typename DerivedX::Scalar> relu_backward(const Eigen::MatrixBase<DerivedX>& x,
                                                const Eigen::MatrixBase<DerivedG>& grad_out) {
  using Scalar = typename DerivedX::Scalar;
  if (x.rows() != grad_out.rows() || x.cols() != grad_out.cols())
    throw ContractError("relu_backward: shape mismatch");
  return (x.array() > Scalar(0)).select(grad_out, Scalar(0));
}

namespace detail {

template <typename Scalar>
Scalar stable_sigmoid(Scalar v) {
  constexpr Scalar lo = std::numeric_limits<Scalar>::denorm_min();
  const Scalar hi = Scalar(1) - std::numeric_limits<Scalar>::epsilon() / 2;
  Scalar s;
  if (v >= 0) {
    s = Scalar(1) / (Scalar(1) + std::exp(-v));
  } else {
    const Scalar e = std::exp(v);
    s = e / (Scalar(1) + e);
  }
  return std::clamp(s, lo, hi);
}

}  // namespace detail

/// Logistic function, clamped so every output stays strictly inside (0, 1).
template <typename Derived>
Signal<typename Derived::Scalar> sigmoid(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([](Scalar v) { return detail::stable_sigmoid(v); });
}

template <typename DerivedX, typename DerivedG>
Signal<typename DerivedX::Scalar> sigmoid_backward(const Eigen::MatrixBase<DerivedX>& x,
                                                   const Eigen::MatrixBase<DerivedG>& grad_out) {
  if (x.rows() != grad_out.rows() || x.cols() != grad_out.cols())
    throw ContractError("sigmoid_backward: shape mismatch");
  const auto s = sigmoid(x);
  return (grad_out.array() * s.array() * (1 - s.array())).matrix();
}

// ---------------------------------------------------------------------------
// Loss

template <typename Scalar = double>
struct LossResult {
  Scalar loss = 0;
  Signal<Scalar> grad;
};

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy over every cell. Predictions are clamped to
/// [1e-7, 1 - 1e-7]; the gradient is evaluated at the clamped value.
template <typename Scalar>
LossResult<Scalar> bce_loss(const SignalRef<Scalar>& pred, const SignalRef<Scalar>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ContractError("bce_loss: prediction and target shapes differ");
  if (pred.size() == 0) throw ContractError("bce_loss: empty input");
  const Scalar lo = Scalar(kBceClamp), hi = Scalar(1 - kBceClamp);
  const Scalar n = Scalar(pred.size());
  const auto p = pred.array().max(lo).min(hi);
  const auto t = target.array();

  LossResult<Scalar> r;
  r.loss = -(t * p.log() + (1 - t) * (1 - p).log()).sum() / n;
  r.grad = ((p - t) / (p * (1 - p)) / n).matrix();
  return r;
}

// ---------------------------------------------------------------------------
// Optimizer

template <typename Scalar = double>
struct AdamState {
  long step_count = 0;
  std::vector<FlatArray<Scalar>> first_moment;
  std::vector<FlatArray<Scalar>> second_moment;
  Scalar lr = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
};

/// A named, flattened view of one parameter tensor and its gradient.
template <typename Scalar = double>
struct ParamSlot {
  std::string name;
  Eigen::Map<FlatArray<Scalar>> value;
  Eigen::Map<const FlatArray<Scalar>> grad;

  template <typename P, typename G>
  ParamSlot(std::string n, P& param, const G& gradient)
      : name(std::move(n)),
        value(param.data(), param.size()),
        grad(gradient.data(), gradient.size()) {}
};

/// One bias-corrected Adam update over every slot. Gradients are checked for
/// finiteness before anything is modified.
template <typename Scalar>
void adam_step(std::span<ParamSlot<Scalar>> params, AdamState<Scalar>& state) {
  if (!(state.beta1 >= 0 && state.beta1 < 1 && state.beta2 >= 0 && state.beta2 < 1))
    throw ConfigError("adam: beta1 and beta2 must lie in [0, 1)");
  if (state.first_moment.empty() && state.step_count == 0) {
    for (const auto& slot : params) {
      state.first_moment.push_back(FlatArray<Scalar>::Zero(slot.value.size()));
      state.second_moment.push_back(FlatArray<Scalar>::Zero(slot.value.size()));
    }
  }
  if (state.first_moment.size() != params.size())
    throw ContractError("adam: optimizer state holds " +
                        std::to_string(state.first_moment.size()) + " tensors but " +
                        std::to_string(params.size()) + " were given");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& slot = params[i];
    if (slot.grad.size() != slot.value.size() ||
        state.first_moment[i].size() != slot.value.size())
      throw ContractError("adam: gradient for '" + slot.name + "' is not congruent");
    if (!slot.grad.allFinite())
      throw NumericalError("adam: non-finite gradient in '" + slot.name + "'");
  }

  ++state.step_count;
  const Scalar t = Scalar(state.step_count);
  const Scalar c1 = 1 - std::pow(state.beta1, t);
  const Scalar c2 = 1 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const auto& g = params[i].grad;
    m = state.beta1 * m + (1 - state.beta1) * g;
    v = state.beta2 * v + (1 - state.beta2) * g.square();
    params[i].value -= state.lr * (m / c1) / ((v / c2).sqrt() + state.eps);
  }
}

}  // namespace gaitseg
