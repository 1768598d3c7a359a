// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <utility>
#include <vector>

#include "ief/pose.hpp"

namespace ief {

/// Planar float grid: channel c, row y, column x lives at
/// data[(c * height + y) * width + x].
struct Planes {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Planes() = default;
  Planes(int w, int h, int c) : width(w), height(h), channels(c), data(std::size_t(w) * h * c) {}

  std::size_t plane_size() const { return std::size_t(width) * height; }
  std::span<float> channel(int c) { return {data.data() + c * plane_size(), plane_size()}; }
  std::span<const float> channel(int c) const { return {data.data() + c * plane_size(), plane_size()}; }
  float at(int c, int y, int x) const { return data[(std::size_t(c) * height + y) * width + x]; }
  float& at(int c, int y, int x) { return data[(std::size_t(c) * height + y) * width + x]; }

  friend bool operator==(const Planes&, const Planes&) = default;
};

/// Input image, values in [0, 1].
struct ImageGrid : Planes {
  using Planes::Planes;
  void validate() const;
};

/// One peak-normalized Gaussian per keypoint.
struct HeatmapStack : Planes {
  using Planes::Planes;
};

/// Image channels first, then heatmap channels in keypoint order.
struct AugmentedInput : Planes {
  int image_channels = 0;

  AugmentedInput() = default;
  AugmentedInput(int w, int h, int image_c, int heat_c)
      : Planes(w, h, image_c + heat_c), image_channels(image_c) {}
};

/// max(1, 0.02 * max(width, height)) pixels.
double default_sigma(int width, int height);

/// Writes exp(-|p - keypoint|^2 / (2 sigma^2)) sampled at pixel centers into
/// `out` (width * height values). No truncation radius.
void render_heatmap_into(std::span<float> out, Vec2 keypoint, int width, int height, double sigma);

std::vector<float> render_heatmap(Vec2 keypoint, int width, int height, double sigma);

/// One channel per keypoint, annotated or not.
HeatmapStack render_pose(const Pose& pose, int width, int height, double sigma);

/// Renders only the listed keypoints, in the listed order.
HeatmapStack render_pose(const Pose& pose, std::span<const int> keypoints, int width, int height,
                         double sigma);

AugmentedInput stack_input(const ImageGrid& image, const HeatmapStack& heatmaps);

/// Inverse of stack_input.
std::pair<ImageGrid, HeatmapStack> unstack_input(const AugmentedInput& input);

/// Renders `pose` (restricted to `keypoints`) straight into an augmented
/// input. Same values as stack_input(image, render_pose(...)).
AugmentedInput render_input(const ImageGrid& image, const Pose& pose, std::span<const int> keypoints,
                            double sigma);

}  // namespace ief
