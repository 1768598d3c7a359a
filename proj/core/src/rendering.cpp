// SPDX-License-Identifier: Apache-2.0

#include "ief/rendering.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "ief/errors.hpp"

namespace ief {

namespace {

void check_render_args(Vec2 keypoint, int width, int height, double sigma) {
  if (width <= 0 || height <= 0) throw ValidationError("render: empty grid");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("render: sigma must be positive");
  if (!std::isfinite(keypoint.x) || !std::isfinite(keypoint.y)) {
    throw ValidationError("render: non-finite keypoint");
  }
}

std::vector<int> all_keypoints(const Pose& pose) {
  std::vector<int> idx(pose.size());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

void ImageGrid::validate() const {
  if (width <= 0 || height <= 0 || channels <= 0) throw StructuralError("image: empty grid");
  if (data.size() != std::size_t(width) * height * channels) {
    throw StructuralError("image: data size does not match dimensions");
  }
  for (float v : data) {
    if (!std::isfinite(v)) throw ValidationError("image: non-finite pixel");
  }
}

double default_sigma(int width, int height) {
  return std::max(1.0, 0.02 * static_cast<double>(std::max(width, height)));
}

void render_heatmap_into(std::span<float> out, Vec2 keypoint, int width, int height, double sigma) {
  check_render_args(keypoint, width, height, sigma);
  if (out.size() != std::size_t(width) * height) throw StructuralError("render: output size mismatch");

  // The Gaussian factorizes into a row profile times a column profile.
  const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
  std::vector<double> gx(width), gy(height);
  for (int i = 0; i < width; ++i) {
    const double d = (i + 0.5) - keypoint.x;
    gx[i] = std::exp(-d * d * inv_two_var);
  }
  for (int j = 0; j < height; ++j) {
    const double d = (j + 0.5) - keypoint.y;
    gy[j] = std::exp(-d * d * inv_two_var);
  }
  for (int j = 0; j < height; ++j) {
    float* row = out.data() + std::size_t(j) * width;
    for (int i = 0; i < width; ++i) row[i] = static_cast<float>(gy[j] * gx[i]);
  }
}

std::vector<float> render_heatmap(Vec2 keypoint, int width, int height, double sigma) {
  std::vector<float> out(std::size_t(std::max(width, 0)) * std::max(height, 0));
  render_heatmap_into(out, keypoint, width, height, sigma);
  return out;
}

HeatmapStack render_pose(const Pose& pose, int width, int height, double sigma) {
  const std::vector<int> idx = all_keypoints(pose);
  return render_pose(pose, idx, width, height, sigma);
}

HeatmapStack render_pose(const Pose& pose, std::span<const int> keypoints, int width, int height,
                         double sigma) {
  HeatmapStack out(width, height, static_cast<int>(keypoints.size()));
  for (std::size_t c = 0; c < keypoints.size(); ++c) {
    const int k = keypoints[c];
    if (k < 0 || static_cast<std::size_t>(k) >= pose.size()) {
      throw StructuralError("render_pose: keypoint index out of range");
    }
    render_heatmap_into(out.channel(static_cast<int>(c)), pose.points[k], width, height, sigma);
  }
  return out;
}

AugmentedInput stack_input(const ImageGrid& image, const HeatmapStack& heatmaps) {
  if (image.width != heatmaps.width || image.height != heatmaps.height) {
    throw StructuralError("stack_input: image is " + std::to_string(image.width) + "x" +
                          std::to_string(image.height) + ", heatmaps are " +
                          std::to_string(heatmaps.width) + "x" + std::to_string(heatmaps.height));
  }
  AugmentedInput out(image.width, image.height, image.channels, heatmaps.channels);
  std::copy(image.data.begin(), image.data.end(), out.data.begin());
  std::copy(heatmaps.data.begin(), heatmaps.data.end(), out.data.begin() + image.data.size());
  return out;
}

std::pair<ImageGrid, HeatmapStack> unstack_input(const AugmentedInput& input) {
  const int heat_c = input.channels - input.image_channels;
  ImageGrid image(input.width, input.height, input.image_channels);
  HeatmapStack heat(input.width, input.height, heat_c);
  const auto split = input.data.begin() + image.data.size();
  std::copy(input.data.begin(), split, image.data.begin());
  std::copy(split, input.data.end(), heat.data.begin());
  return {std::move(image), std::move(heat)};
}

AugmentedInput render_input(const ImageGrid& image, const Pose& pose, std::span<const int> keypoints,
                            double sigma) {
  AugmentedInput out(image.width, image.height, image.channels, static_cast<int>(keypoints.size()));
  std::copy(image.data.begin(), image.data.end(), out.data.begin());
  for (std::size_t c = 0; c < keypoints.size(); ++c) {
    const int k = keypoints[c];
    if (k < 0 || static_cast<std::size_t>(k) >= pose.size()) {
      throw StructuralError("render_input: keypoint index out of range");
    }
    render_heatmap_into(out.channel(image.channels + static_cast<int>(c)), pose.points[k],
                        image.width, image.height, sigma);
  }
  return out;
}

}  // namespace ief
