// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ief/aligned.hpp"
#include "ief/pose.hpp"
#include "ief/rendering.hpp"
#include "ief/rng.hpp"

namespace ief {

/// Layer sizes of the correction network:
///   conv3x3(in -> conv1) ReLU maxpool2  conv3x3(conv1 -> conv2) ReLU maxpool2
///   fc(-> hidden) ReLU  fc(-> outputs)
/// Convolutions are stride 1 with zero padding 1. width and height must be
/// multiples of 4.
struct NetSpec {
  int width = 64;
  int height = 64;
  int image_channels = 1;
  int in_channels = 8;
  int conv1 = 16;
  int conv2 = 32;
  int hidden = 128;
  int outputs = 12;

  int pooled_features() const { return conv2 * (width / 4) * (height / 4); }
  void validate() const;
  friend bool operator==(const NetSpec&, const NetSpec&) = default;
};

template <typename Scalar>
struct Tensor {
  std::string name;
  std::vector<int> shape;
  AlignedVector<Scalar> values;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Weights and biases in fixed order (conv1.weight, conv1.bias, conv2.weight,
/// conv2.bias, fc1.weight, fc1.bias, fc2.weight, fc2.bias) plus one momentum
/// buffer per tensor. `version` increases on every update and is used to
/// detect stale forward caches.
template <typename Scalar>
struct PredictorParams {
  NetSpec spec;
  std::vector<Tensor<Scalar>> weights;
  std::vector<Tensor<Scalar>> momentum;
  std::uint64_t version = 0;

  std::size_t parameter_count() const;

  template <typename Other>
  PredictorParams<Other> cast() const;
};

enum ParamIndex : int {
  kConv1W = 0, kConv1B, kConv2W, kConv2B, kFc1W, kFc1B, kFc2W, kFc2B, kParamTensorCount
};

/// Zero-filled parameters and momentum with the right shapes.
template <typename Scalar>
PredictorParams<Scalar> zero_params(const NetSpec& spec);

/// Zero-mean Gaussian weights, zero biases. Image-channel filters and hidden
/// layers use He scaling; first-layer weights on heatmap channels use
/// std `heatmap_std`.
template <typename Scalar>
PredictorParams<Scalar> init_params(const NetSpec& spec, Rng& rng, double heatmap_std = 0.1);

/// Activations kept for the backward pass of one batch.
template <typename Scalar>
struct ForwardCache {
  int batch = 0;
  const void* owner = nullptr;
  std::uint64_t version = 0;

  std::vector<AlignedVector<float>> inputs;
  std::vector<AlignedVector<Scalar>> act1, pool1, act2;
  std::vector<std::vector<std::int32_t>> arg1, arg2;
  AlignedVector<Scalar> features;  // pooled_features x batch, column per example
  AlignedVector<Scalar> hidden;    // hidden x batch
  AlignedVector<Scalar> output;    // outputs x batch

  // im2col scratch, rebuilt per example in forward and backward.
  mutable AlignedVector<Scalar> cols1, cols2;
  mutable std::array<int, 3> cols1_shape{}, cols2_shape{};

  std::span<const Scalar> output_of(int b, int outputs) const {
    return {output.data() + std::size_t(b) * outputs, std::size_t(outputs)};
  }
};

template <typename Scalar>
void forward_batch(const PredictorParams<Scalar>& params, std::span<const AugmentedInput> inputs,
                   ForwardCache<Scalar>& cache);

/// Single example; returns the 2 * K_pred outputs ordered (dx0, dy0, dx1, ...).
template <typename Scalar>
std::vector<Scalar> forward(const PredictorParams<Scalar>& params, const AugmentedInput& input,
                            ForwardCache<Scalar>& cache);

template <typename Scalar>
struct LossAndGrad {
  Scalar loss = 0;
  std::vector<Scalar> grad;
};

/// Sum over masked-in keypoints of the squared error of both coordinates.
/// Gradient entries of masked-out keypoints are exactly zero.
template <typename Scalar>
LossAndGrad<Scalar> loss_and_grad(std::span<const Scalar> predicted, const Correction& target,
                                  const std::vector<bool>& mask);

/// Parameter gradients for the cached batch given dLoss/dOutput (outputs x
/// batch, column per example). Gradients are summed over the batch.
template <typename Scalar>
std::vector<Tensor<Scalar>> backward(const PredictorParams<Scalar>& params,
                                     const ForwardCache<Scalar>& cache,
                                     std::span<const Scalar> output_grad);

/// m <- momentum * m + g ; w <- w - lr * m. Throws DivergenceError naming the
/// tensor when a gradient is non-finite.
template <typename Scalar>
void sgd_update(PredictorParams<Scalar>& params, const std::vector<Tensor<Scalar>>& grads,
                double learning_rate, double momentum);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst_parameter;
};

/// Central differences (loss(w + eps) - loss(w - eps)) / (2 eps) against the
/// analytic gradient on `samples` randomly chosen parameters. The relative
/// error is |a - n| / max(1e-12, |a| + |n|).
GradientCheckResult gradient_check(const PredictorParams<double>& params, const AugmentedInput& input,
                                   const Correction& target, const std::vector<bool>& mask,
                                   double epsilon, int samples, Rng& rng);

}  // namespace ief
