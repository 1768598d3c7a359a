// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ief/data.hpp"
#include "ief/inference.hpp"
#include "ief/pose.hpp"

namespace ief {

enum class Hit : std::uint8_t { miss, hit, excluded };

/// Keypoint k is a hit when |predicted_k - truth_k| <= alpha * reference_length.
/// Keypoints unannotated in `truth` are excluded.
std::vector<Hit> pckh(const Pose& predicted, const Pose& truth, double reference_length,
                      double alpha = 0.5);

struct PcpResult {
  std::vector<Hit> hits;
  std::size_t degenerate = 0;  // limbs of zero true length, also marked excluded
};

/// A limb is a hit when both endpoint errors are <= alpha * true limb length.
/// Limbs with an unannotated endpoint or zero length are excluded.
PcpResult pcp(const Pose& predicted, const Pose& truth, std::span<const std::pair<int, int>> limbs,
              double alpha = 0.5);

struct Score {
  std::string name;
  std::size_t correct = 0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;

  double fraction() const { return evaluated ? double(correct) / double(evaluated) : 0.0; }
};

struct MetricReport {
  double alpha = 0.5;
  std::vector<Score> keypoints;                       // PCKh of each evaluated keypoint
  std::vector<std::pair<std::string, Score>> groups;  // "UBody", "FBody"
  std::vector<double> per_step;                       // FBody PCKh at each step, step 0 first
  std::vector<Score> limbs;                           // PCP of each limb
  Score pcp_total;
  std::size_t degenerate_limbs = 0;

  /// Throws ValidationError for unknown names.
  double group(const std::string& name) const;
  double keypoint(const std::string& name) const;
};

/// PCKh of the final poses over `keypoints` (skeleton indices), grouped into
/// UBody (the skeleton's upper body) and FBody (all of them), PCP over the
/// skeleton limbs and the per-step FBody curve. The reference length of
/// each example comes from reference_length().
MetricReport evaluate(std::span<const Trajectory> trajectories, std::span<const Example> examples,
                      const Skeleton& skeleton, std::span<const int> keypoints, double alpha = 0.5);

/// Mean PCKh over `keypoints` of poses[t] for each step t. Trajectories that
/// stopped early keep their last pose.
std::vector<double> pckh_curve(std::span<const Trajectory> trajectories, std::span<const Pose> truths,
                               std::span<const double> reference_lengths, double alpha,
                               std::span<const int> keypoints);

/// Side-by-side metrics of several runs with deltas against one of them.
struct Comparison {
  std::vector<std::string> runs;
  std::vector<std::string> metrics;
  std::vector<std::vector<double>> values;  // metrics x runs
  std::size_t baseline = 0;
};

/// Rows: each keypoint, then each group, then PCP total. Throws
/// StructuralError when the runs evaluate different keypoints.
Comparison compare_report(std::span<const std::pair<std::string, MetricReport>> runs,
                          std::size_t baseline = 0);

/// Header: metric, one column per run, then delta_<run> against the baseline.
std::string comparison_csv(const Comparison& c);

/// Grouped bar chart. `notes` are printed under the chart.
std::string comparison_svg(const Comparison& c, std::span<const std::string> notes = {});

/// metric,value rows for a single report.
std::string report_csv(const MetricReport& r);

/// PCKh-vs-step line chart of named curves.
std::string curve_svg(std::span<const std::pair<std::string, std::vector<double>>> curves,
                      const std::string& title);

/// Image with the initial pose, each intermediate pose and the ground truth
/// drawn over it using the skeleton limbs.
std::string pose_overlay_svg(const Example& example, const Trajectory& trajectory,
                             const Skeleton& skeleton, int pixel_size = 6);

}  // namespace ief
