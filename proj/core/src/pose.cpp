// SPDX-License-Identifier: Apache-2.0

#include "ief/pose.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ief/errors.hpp"

namespace ief {

namespace {

constexpr double kReachSlack = 1e-10;

void require_finite(Vec2 v, const char* what) {
  if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
    throw ValidationError(std::string(what) + ": non-finite coordinate");
  }
}

// Smallest adjustment of to - from such that from + d == to in double.
double landing_delta(double from, double to) {
  double d = to - from;
  for (int i = 0; i < 8 && from + d != to; ++i) {
    d = std::nextafter(d, from + d < to ? std::numeric_limits<double>::infinity()
                                        : -std::numeric_limits<double>::infinity());
  }
  return d;
}

double median_of(std::vector<double>& v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double norm(Vec2 v) { return std::hypot(v.x, v.y); }

Pose Pose::annotated(std::vector<Vec2> pts) {
  std::vector<bool> m(pts.size(), true);
  return Pose(std::move(pts), std::move(m));
}

void Pose::validate() const {
  if (points.empty()) throw StructuralError("pose has no keypoints");
  if (points.size() != mask.size()) {
    throw StructuralError("pose has " + std::to_string(points.size()) + " points but " +
                          std::to_string(mask.size()) + " mask entries");
  }
  for (const Vec2& p : points) require_finite(p, "pose");
}

double Correction::max_norm() const {
  double m = 0.0;
  for (const Vec2& d : deltas) m = std::max(m, norm(d));
  return m;
}

Correction bounded_correction(const Pose& target, const Pose& current, double bound,
                              const std::vector<bool>& mask) {
  target.validate();
  current.validate();
  const std::size_t k = target.size();
  if (current.size() != k || mask.size() != k) {
    throw StructuralError("bounded_correction: keypoint count mismatch");
  }
  if (!(bound > 0.0) || std::isnan(bound)) {
    throw ValidationError("bounded_correction: bound must be positive");
  }

  Correction out = Correction::zeros(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!mask[i]) continue;
    const Vec2 from = current.points[i];
    const Vec2 to = target.points[i];
    const Vec2 u = to - from;
    const double len = norm(u);
    if (len == 0.0) continue;
    if (len <= bound + kReachSlack) {
      out.deltas[i] = {landing_delta(from.x, to.x), landing_delta(from.y, to.y)};
    } else {
      out.deltas[i] = {bound * (u.x / len), bound * (u.y / len)};
    }
  }
  return out;
}

Pose apply_correction(const Pose& current, const Correction& correction) {
  if (current.size() != correction.size()) {
    throw StructuralError("apply_correction: pose has " + std::to_string(current.size()) +
                          " keypoints, correction has " + std::to_string(correction.size()));
  }
  Pose out = current;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.points[i] = current.points[i] + correction.deltas[i];
  }
  return out;
}

FixedPath fixed_path(const Pose& y0, const Pose& y, double bound, int steps) {
  if (steps < 1) throw ValidationError("fixed_path: need at least one step");
  y0.validate();
  y.validate();
  if (y0.size() != y.size()) throw StructuralError("fixed_path: keypoint count mismatch");

  FixedPath path;
  path.poses.reserve(steps + 1);
  path.targets.reserve(steps);
  path.poses.push_back(y0);
  for (int t = 0; t < steps; ++t) {
    const Pose& current = path.poses.back();
    Correction e = bounded_correction(y, current, bound, y.mask);
    Pose next = apply_correction(current, e);
    // Some landings have no representable delta (the sum skips the target by
    // one ulp); within reach the keypoint is put on the target itself.
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y.mask[i] && norm(y.points[i] - current.points[i]) <= bound + kReachSlack) {
        next.points[i] = y.points[i];
      }
    }
    path.poses.push_back(std::move(next));
    path.targets.push_back(std::move(e));
  }
  return path;
}

Pose median_pose(std::span<const Pose> poses, std::span<const std::string> names) {
  if (poses.empty()) throw InitializationError("median_pose: no poses");
  const std::size_t k = poses.front().size();
  for (const Pose& p : poses) {
    p.validate();
    if (p.size() != k) throw StructuralError("median_pose: non-uniform keypoint count");
  }

  std::vector<Vec2> out(k);
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < k; ++i) {
    xs.clear();
    ys.clear();
    for (const Pose& p : poses) {
      if (!p.mask[i]) continue;
      xs.push_back(p.points[i].x);
      ys.push_back(p.points[i].y);
    }
    if (xs.empty()) {
      const std::string label = i < names.size() ? names[i] : "keypoint " + std::to_string(i);
      throw InitializationError("median_pose: " + label + " is annotated in no pose");
    }
    out[i] = {median_of(xs), median_of(ys)};
  }
  return Pose::annotated(std::move(out));
}

Pose anchored_pose(const Pose& reference, std::span<const int> given,
                   std::span<const Vec2> given_points) {
  if (given.size() != given_points.size()) {
    throw StructuralError("anchored_pose: given index / point count mismatch");
  }
  if (given.empty()) return reference;
  Vec2 ref_c{}, pts_c{};
  for (std::size_t g = 0; g < given.size(); ++g) {
    const int idx = given[g];
    if (idx < 0 || static_cast<std::size_t>(idx) >= reference.size()) {
      throw StructuralError("anchored_pose: given index out of range");
    }
    require_finite(given_points[g], "anchored_pose");
    ref_c = ref_c + reference.points[idx];
    pts_c = pts_c + given_points[g];
  }
  const double inv = 1.0 / static_cast<double>(given.size());
  const Vec2 shift = inv * pts_c - inv * ref_c;
  Pose out = reference;
  for (Vec2& p : out.points) p = p + shift;
  for (std::size_t g = 0; g < given.size(); ++g) out.points[given[g]] = given_points[g];
  return out;
}

}  // namespace ief
