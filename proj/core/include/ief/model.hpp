// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "ief/data.hpp"
#include "ief/pose.hpp"
#include "ief/predictor.hpp"
#include "ief/rendering.hpp"

namespace ief {

/// Which keypoints feed heatmap channels and which ones the network moves.
/// Indices refer to the full skeleton. Given keypoints are never predicted.
struct KeypointLayout {
  int keypoints = 0;
  std::vector<int> rendered;
  std::vector<int> predicted;
  std::vector<int> given;

  /// Every keypoint rendered, every non-given keypoint predicted.
  static KeypointLayout standard(const Skeleton& skeleton);

  /// Renders the listed keypoints (in skeleton order) and predicts the
  /// non-given ones among them. Throws ValidationError on an empty or
  /// out-of-range subset, or one with nothing to predict.
  static KeypointLayout subset(const Skeleton& skeleton, std::span<const int> keypoints);

  void validate() const;
  friend bool operator==(const KeypointLayout&, const KeypointLayout&) = default;
};

/// Network shape for a layout over images of the given size.
NetSpec net_spec_for(const KeypointLayout& layout, int width, int height, int image_channels);

/// Trained correction model: network, the keypoints it sees and moves, the
/// heatmap sigma and the mean pose it starts from.
struct Model {
  KeypointLayout layout;
  double sigma = 0.0;
  Pose init;
  PredictorParams<float> params;

  friend bool operator==(const Model& a, const Model& b) {
    return a.layout == b.layout && a.sigma == b.sigma && a.init == b.init &&
           a.params.spec == b.params.spec && a.params.weights == b.params.weights &&
           a.params.momentum == b.params.momentum && a.params.version == b.params.version;
  }
};

/// Network input for `pose`: image channels, then heatmaps of the rendered
/// keypoints. Training and inference both go through this.
AugmentedInput model_input(const Model& model, const ImageGrid& image, const Pose& pose);

/// Starting pose for one example: the model's mean pose moved onto the
/// example's marking points.
Pose initial_pose(const Model& model, std::span<const Vec2> given_points);

/// Writes manifest.txt (key=value, tensor shapes and byte offsets) and
/// tensors.bin (little-endian float32: weights, then momentum).
void save_model(const Model& model, const std::filesystem::path& dir);

/// Bit-exact inverse of save_model.
Model load_model(const std::filesystem::path& dir);

}  // namespace ief
