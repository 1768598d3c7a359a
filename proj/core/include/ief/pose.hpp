// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ief {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

double norm(Vec2 v);

/// K keypoints in continuous image coordinates (pixel centers at i + 0.5).
/// Points may lie outside the image. mask[k] is true when keypoint k is
/// annotated.
struct Pose {
  std::vector<Vec2> points;
  std::vector<bool> mask;

  Pose() = default;
  Pose(std::vector<Vec2> pts, std::vector<bool> m) : points(std::move(pts)), mask(std::move(m)) {}

  /// All keypoints annotated.
  static Pose annotated(std::vector<Vec2> pts);

  std::size_t size() const { return points.size(); }

  /// Throws StructuralError / ValidationError when the invariants do not hold.
  void validate() const;

  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Per-keypoint displacement.
struct Correction {
  std::vector<Vec2> deltas;

  static Correction zeros(std::size_t k) { return {std::vector<Vec2>(k)}; }
  std::size_t size() const { return deltas.size(); }
  double max_norm() const;

  friend bool operator==(const Correction&, const Correction&) = default;
};

/// Poses y_0 .. y_T along the straight-line path towards the ground truth and
/// the T target corrections that generate it.
struct FixedPath {
  std::vector<Pose> poses;
  std::vector<Correction> targets;

  std::size_t steps() const { return targets.size(); }
};

/// Displacement of at most `bound` pixels per keypoint from `current` towards
/// `target`: min(bound, |u|) * u / |u| with u = target - current. Masked-out
/// keypoints get (0, 0); so does u = 0.
///
/// When the target is within reach (|u| <= bound + 1e-10) the returned delta
/// is chosen so that current + delta == target exactly in floating point.
/// `bound` may be +infinity, which yields the full unbounded displacement.
Correction bounded_correction(const Pose& target, const Pose& current, double bound,
                              const std::vector<bool>& mask);

/// current + correction, mask unchanged. No clamping to the image.
Pose apply_correction(const Pose& current, const Correction& correction);

/// Iterates bounded corrections from y0 towards y for `steps` steps. Keypoints
/// unannotated in y stay at y0 with zero targets. A keypoint within reach of
/// its target is placed on it exactly, even when current + delta rounds past.
FixedPath fixed_path(const Pose& y0, const Pose& y, double bound, int steps);

/// Componentwise median over annotated instances; the even-count median is the
/// mean of the two middle values. `names` (optional) is used in error text.
Pose median_pose(std::span<const Pose> poses, std::span<const std::string> names = {});

/// Translates `reference` so that the centroid of its `given` keypoints lands
/// on the centroid of `given_points`, then pins each given keypoint to its
/// provided coordinate. With no given keypoints the pose is returned as is.
Pose anchored_pose(const Pose& reference, std::span<const int> given,
                   std::span<const Vec2> given_points);

}  // namespace ief
