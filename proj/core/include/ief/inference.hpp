// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ief/data.hpp"
#include "ief/model.hpp"

namespace ief {

/// poses[t + 1] == apply_correction(poses[t], corrections[t]). Corrections
/// hold the raw network outputs (zero for keypoints the model does not move).
struct Trajectory {
  std::uint64_t example_id = 0;
  std::vector<Pose> poses;
  std::vector<Correction> corrections;

  const Pose& final_pose() const { return poses.back(); }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct InferOptions {
  int steps = 3;
  /// Stop once every predicted keypoint moved less than this many pixels.
  std::optional<double> early_stop;
};

/// Test-time loop from `y0`: render, predict, add. Given keypoints stay where
/// y0 puts them. Corrections are applied unclipped.
Trajectory infer(const ImageGrid& image, const Model& model, const Pose& y0,
                 const InferOptions& options = {});

/// infer from the model's mean pose anchored on the example's marking points.
Trajectory infer_example(const Example& example, const Model& model,
                         const InferOptions& options = {});

/// One trajectory per example, in order. Errors name the failing example.
std::vector<Trajectory> batch_infer(std::span<const Example> examples, const Model& model,
                                    const InferOptions& options = {});

/// Left/right mirror of a trajectory made on a mirrored image: x -> width - x
/// and mirror pairs swapped at every step.
Trajectory unmirror(const Trajectory& t, int width, const Skeleton& skeleton);

/// CSV with columns example,step,keypoint,x,y (shortest round-trip numbers).
std::string trajectories_csv(std::span<const Trajectory> trajectories);
std::vector<Trajectory> parse_trajectories_csv(const std::string& text);

}  // namespace ief
