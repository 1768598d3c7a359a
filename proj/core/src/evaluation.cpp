// SPDX-License-Identifier: Apache-2.0

#include "ief/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ief/errors.hpp"
#include "ief/io.hpp"

namespace ief {

namespace {

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) { return io::fixed4(v); }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void tally(Score& s, Hit h) {
  if (h == Hit::excluded) {
    ++s.excluded;
    return;
  }
  ++s.evaluated;
  if (h == Hit::hit) ++s.correct;
}

const Pose& pose_at(const Trajectory& t, std::size_t step) {
  return t.poses[std::min(step, t.poses.size() - 1)];
}

}  // namespace

std::vector<Hit> pckh(const Pose& predicted, const Pose& truth, double reference_length, double alpha) {
  if (!(reference_length > 0.0)) throw ValidationError("pckh: reference length must be positive");
  if (predicted.size() != truth.size()) throw StructuralError("pckh: keypoint count mismatch");
  const double threshold = alpha * reference_length;
  std::vector<Hit> out(truth.size());
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (!truth.mask[k]) {
      out[k] = Hit::excluded;
      continue;
    }
    out[k] = norm(predicted.points[k] - truth.points[k]) <= threshold ? Hit::hit : Hit::miss;
  }
  return out;
}

PcpResult pcp(const Pose& predicted, const Pose& truth, std::span<const std::pair<int, int>> limbs,
              double alpha) {
  if (predicted.size() != truth.size()) throw StructuralError("pcp: keypoint count mismatch");
  PcpResult r;
  r.hits.resize(limbs.size());
  for (std::size_t l = 0; l < limbs.size(); ++l) {
    const auto [a, b] = limbs[l];
    if (a < 0 || b < 0 || std::size_t(a) >= truth.size() || std::size_t(b) >= truth.size()) {
      throw StructuralError("pcp: limb endpoint out of range");
    }
    if (!truth.mask[std::size_t(a)] || !truth.mask[std::size_t(b)]) {
      r.hits[l] = Hit::excluded;
      continue;
    }
    const double length = norm(truth.points[std::size_t(a)] - truth.points[std::size_t(b)]);
    if (length == 0.0) {
      r.hits[l] = Hit::excluded;
      ++r.degenerate;
      continue;
    }
    const double threshold = alpha * length;
    const bool ok_a = norm(predicted.points[std::size_t(a)] - truth.points[std::size_t(a)]) <= threshold;
    const bool ok_b = norm(predicted.points[std::size_t(b)] - truth.points[std::size_t(b)]) <= threshold;
    r.hits[l] = ok_a && ok_b ? Hit::hit : Hit::miss;
  }
  return r;
}

double MetricReport::group(const std::string& name) const {
  for (const auto& [n, s] : groups) {
    if (n == name) return s.fraction();
  }
  throw ValidationError("report has no group '" + name + "'");
}

double MetricReport::keypoint(const std::string& name) const {
  for (const Score& s : keypoints) {
    if (s.name == name) return s.fraction();
  }
  throw ValidationError("report has no keypoint '" + name + "'");
}

MetricReport evaluate(std::span<const Trajectory> trajectories, std::span<const Example> examples,
                      const Skeleton& skeleton, std::span<const int> keypoints, double alpha) {
  if (trajectories.size() != examples.size()) {
    throw StructuralError("evaluate: " + std::to_string(trajectories.size()) + " trajectories for " +
                          std::to_string(examples.size()) + " examples");
  }
  MetricReport r;
  r.alpha = alpha;
  for (int k : keypoints) r.keypoints.push_back({skeleton.names.at(std::size_t(k))});
  Score upper{"UBody"}, full{"FBody"};
  for (const auto& [a, b] : skeleton.limbs) {
    r.limbs.push_back({skeleton.names.at(std::size_t(a)) + "-" + skeleton.names.at(std::size_t(b))});
  }
  r.pcp_total.name = "PCP";

  std::vector<Pose> truths;
  std::vector<double> refs;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Example& ex = examples[i];
    if (trajectories[i].poses.empty()) throw StructuralError("evaluate: empty trajectory");
    const double ref = reference_length(ex, skeleton);
    truths.push_back(ex.pose);
    refs.push_back(ref);
    const Pose& final_pose = trajectories[i].final_pose();
    const std::vector<Hit> hits = pckh(final_pose, ex.pose, ref, alpha);
    for (std::size_t j = 0; j < keypoints.size(); ++j) {
      const int k = keypoints[j];
      const Hit h = hits[std::size_t(k)];
      tally(r.keypoints[j], h);
      tally(full, h);
      if (std::find(skeleton.upper_body.begin(), skeleton.upper_body.end(), k) != skeleton.upper_body.end()) {
        tally(upper, h);
      }
    }
    const PcpResult p = pcp(final_pose, ex.pose, skeleton.limbs, alpha);
    for (std::size_t l = 0; l < p.hits.size(); ++l) {
      tally(r.limbs[l], p.hits[l]);
      tally(r.pcp_total, p.hits[l]);
    }
    r.degenerate_limbs += p.degenerate;
  }
  r.groups = {{"UBody", upper}, {"FBody", full}};
  r.per_step = pckh_curve(trajectories, truths, refs, alpha, keypoints);
  return r;
}

std::vector<double> pckh_curve(std::span<const Trajectory> trajectories, std::span<const Pose> truths,
                               std::span<const double> reference_lengths, double alpha,
                               std::span<const int> keypoints) {
  if (trajectories.size() != truths.size() || truths.size() != reference_lengths.size()) {
    throw StructuralError("pckh_curve: collections have different lengths");
  }
  std::size_t steps = 0;
  for (const Trajectory& t : trajectories) steps = std::max(steps, t.poses.size());
  std::vector<double> curve;
  for (std::size_t s = 0; s < steps; ++s) {
    std::size_t correct = 0, evaluated = 0;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
      const std::vector<Hit> hits = pckh(pose_at(trajectories[i], s), truths[i], reference_lengths[i], alpha);
      for (int k : keypoints) {
        const Hit h = hits.at(std::size_t(k));
        if (h == Hit::excluded) continue;
        ++evaluated;
        if (h == Hit::hit) ++correct;
      }
    }
    curve.push_back(evaluated ? double(correct) / double(evaluated) : 0.0);
  }
  return curve;
}

Comparison compare_report(std::span<const std::pair<std::string, MetricReport>> runs,
                          std::size_t baseline) {
  if (runs.empty()) throw ValidationError("compare_report: no runs");
  if (baseline >= runs.size()) throw ValidationError("compare_report: baseline index out of range");
  Comparison c;
  c.baseline = baseline;
  const MetricReport& first = runs[0].second;
  for (const Score& s : first.keypoints) c.metrics.push_back(s.name);
  for (const auto& [name, s] : first.groups) c.metrics.push_back(name);
  c.metrics.push_back("PCP");
  c.values.assign(c.metrics.size(), {});
  for (const auto& [name, r] : runs) {
    if (r.keypoints.size() != first.keypoints.size() || r.groups.size() != first.groups.size()) {
      throw StructuralError("compare_report: run " + name + " evaluates different keypoints");
    }
    for (std::size_t i = 0; i < r.keypoints.size(); ++i) {
      if (r.keypoints[i].name != first.keypoints[i].name) {
        throw StructuralError("compare_report: run " + name + " evaluates different keypoints");
      }
    }
    c.runs.push_back(name);
    std::size_t row = 0;
    for (const Score& s : r.keypoints) c.values[row++].push_back(s.fraction());
    for (const auto& g : r.groups) c.values[row++].push_back(g.second.fraction());
    c.values[row].push_back(r.pcp_total.fraction());
  }
  return c;
}

std::string comparison_csv(const Comparison& c) {
  std::string out = "metric";
  for (const std::string& r : c.runs) out += "," + r;
  for (const std::string& r : c.runs) out += ",delta_" + r;
  out += "\n";
  for (std::size_t m = 0; m < c.metrics.size(); ++m) {
    out += c.metrics[m];
    for (double v : c.values[m]) out += "," + num(v);
    for (double v : c.values[m]) out += "," + num(v - c.values[m][c.baseline]);
    out += "\n";
  }
  return out;
}

std::string comparison_svg(const Comparison& c, std::span<const std::string> notes) {
  const double bar = 14.0, gap = 18.0, left = 60.0, top = 30.0, plot_h = 220.0;
  const double group_w = bar * double(c.runs.size()) + gap;
  const double width = left + group_w * double(c.metrics.size()) + 20.0;
  const double height = top + plot_h + 60.0 + 16.0 * double(c.runs.size() + notes.size());
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
                  num(height) + "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int tick = 0; tick <= 10; tick += 2) {
    const double y = top + plot_h * (1.0 - tick / 10.0);
    s += "<line x1=\"" + num(left) + "\" y1=\"" + num(y) + "\" x2=\"" + num(width - 10) + "\" y2=\"" +
         num(y) + "\" stroke=\"#ddd\"/>\n";
    s += "<text x=\"" + num(left - 6) + "\" y=\"" + num(y + 3) + "\" text-anchor=\"end\">" +
         num(tick / 10.0) + "</text>\n";
  }
  for (std::size_t m = 0; m < c.metrics.size(); ++m) {
    const double x0 = left + group_w * double(m) + gap / 2;
    for (std::size_t r = 0; r < c.runs.size(); ++r) {
      const double v = std::clamp(c.values[m][r], 0.0, 1.0);
      s += "<rect x=\"" + num(x0 + bar * double(r)) + "\" y=\"" + num(top + plot_h * (1 - v)) +
           "\" width=\"" + num(bar - 2) + "\" height=\"" + num(plot_h * v) + "\" fill=\"" +
           kPalette[r % 8] + "\"><title>" + escape(c.runs[r] + " " + c.metrics[m] + " " + num(c.values[m][r])) +
           "</title></rect>\n";
    }
    s += "<text x=\"" + num(x0 + bar * double(c.runs.size()) / 2) + "\" y=\"" + num(top + plot_h + 14) +
         "\" text-anchor=\"middle\">" + escape(c.metrics[m]) + "</text>\n";
  }
  double y = top + plot_h + 40;
  for (std::size_t r = 0; r < c.runs.size(); ++r, y += 16) {
    s += "<rect x=\"" + num(left) + "\" y=\"" + num(y - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
         kPalette[r % 8] + "\"/>\n";
    s += "<text x=\"" + num(left + 16) + "\" y=\"" + num(y) + "\">" + escape(c.runs[r]) +
         (r == c.baseline ? " (baseline)" : "") + "</text>\n";
  }
  for (const std::string& n : notes) {
    s += "<text x=\"" + num(left) + "\" y=\"" + num(y) + "\" fill=\"#555\">" + escape(n) + "</text>\n";
    y += 16;
  }
  s += "</svg>\n";
  return s;
}

std::string report_csv(const MetricReport& r) {
  std::string out = "metric,value,correct,evaluated,excluded\n";
  auto row = [&](const std::string& name, const Score& s) {
    out += name + "," + num(s.fraction()) + "," + std::to_string(s.correct) + "," +
           std::to_string(s.evaluated) + "," + std::to_string(s.excluded) + "\n";
  };
  for (const Score& s : r.keypoints) row("pckh." + s.name, s);
  for (const auto& [name, s] : r.groups) row("pckh." + name, s);
  for (const Score& s : r.limbs) row("pcp." + s.name, s);
  row("pcp.total", r.pcp_total);
  for (std::size_t t = 0; t < r.per_step.size(); ++t) {
    out += "pckh.FBody.step" + std::to_string(t) + "," + num(r.per_step[t]) + ",,,\n";
  }
  out += "alpha," + num(r.alpha) + ",,,\n";
  out += "pcp.degenerate_limbs," + std::to_string(r.degenerate_limbs) + ",,,\n";
  return out;
}

std::string curve_svg(std::span<const std::pair<std::string, std::vector<double>>> curves,
                      const std::string& title) {
  std::size_t steps = 1;
  for (const auto& [n, c] : curves) steps = std::max(steps, c.size());
  const double left = 50, top = 30, w = 320, h = 220;
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(left + w + 140) +
                  "\" height=\"" + num(top + h + 50) + "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(left) + "\" y=\"18\" font-size=\"12\">" + escape(title) + "</text>\n";
  auto px = [&](double step) { return left + (steps > 1 ? w * step / double(steps - 1) : w / 2); };
  auto py = [&](double v) { return top + h * (1.0 - std::clamp(v, 0.0, 1.0)); };
  for (int tick = 0; tick <= 10; tick += 2) {
    s += "<line x1=\"" + num(left) + "\" y1=\"" + num(py(tick / 10.0)) + "\" x2=\"" + num(left + w) +
         "\" y2=\"" + num(py(tick / 10.0)) + "\" stroke=\"#ddd\"/>\n";
    s += "<text x=\"" + num(left - 6) + "\" y=\"" + num(py(tick / 10.0) + 3) + "\" text-anchor=\"end\">" +
         num(tick / 10.0) + "</text>\n";
  }
  for (std::size_t t = 0; t < steps; ++t) {
    s += "<text x=\"" + num(px(double(t))) + "\" y=\"" + num(top + h + 14) + "\" text-anchor=\"middle\">" +
         std::to_string(t) + "</text>\n";
  }
  s += "<text x=\"" + num(left + w / 2) + "\" y=\"" + num(top + h + 32) +
       "\" text-anchor=\"middle\">step</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& [name, c] = curves[i];
    std::string pts;
    for (std::size_t t = 0; t < c.size(); ++t) pts += num(px(double(t))) + "," + num(py(c[t])) + " ";
    s += "<polyline fill=\"none\" stroke=\"" + std::string(kPalette[i % 8]) + "\" stroke-width=\"2\" points=\"" +
         pts + "\"/>\n";
    for (std::size_t t = 0; t < c.size(); ++t) {
      s += "<circle cx=\"" + num(px(double(t))) + "\" cy=\"" + num(py(c[t])) + "\" r=\"3\" fill=\"" +
           kPalette[i % 8] + "\"><title>" + num(c[t]) + "</title></circle>\n";
    }
    s += "<text x=\"" + num(left + w + 10) + "\" y=\"" + num(top + 12 + 16 * double(i)) + "\" fill=\"" +
         kPalette[i % 8] + "\">" + escape(name) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

std::string pose_overlay_svg(const Example& example, const Trajectory& trajectory,
                             const Skeleton& skeleton, int pixel_size) {
  const ImageGrid& img = example.image;
  const double ps = pixel_size;
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(img.width * ps) +
                  "\" height=\"" + num(img.height * ps) + "\" shape-rendering=\"crispEdges\">\n";
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      int rgb[3];
      for (int c = 0; c < 3; ++c) {
        const float v = img.at(std::min(c, img.channels - 1), y, x);
        rgb[c] = int(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
      }
      char color[8];
      std::snprintf(color, sizeof color, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
      s += "<rect x=\"" + std::to_string(x * pixel_size) + "\" y=\"" + std::to_string(y * pixel_size) +
           "\" width=\"" + std::to_string(pixel_size) + "\" height=\"" + std::to_string(pixel_size) +
           "\" fill=\"" + color + "\"/>\n";
    }
  }
  s += "<g shape-rendering=\"geometricPrecision\" fill=\"none\">\n";
  auto draw_pose = [&](const Pose& p, const std::string& color, double width, const char* dash) {
    for (const auto& [a, b] : skeleton.limbs) {
      const Vec2 pa = p.points[std::size_t(a)], pb = p.points[std::size_t(b)];
      s += "<line x1=\"" + num(pa.x * ps) + "\" y1=\"" + num(pa.y * ps) + "\" x2=\"" + num(pb.x * ps) +
           "\" y2=\"" + num(pb.y * ps) + "\" stroke=\"" + color + "\" stroke-width=\"" + num(width) + "\"" +
           (dash ? std::string(" stroke-dasharray=\"") + dash + "\"" : std::string()) + "/>\n";
    }
    for (const Vec2& q : p.points) {
      s += "<circle cx=\"" + num(q.x * ps) + "\" cy=\"" + num(q.y * ps) + "\" r=\"" + num(width * 1.5) +
           "\" fill=\"" + color + "\"/>\n";
    }
  };
  draw_pose(example.pose, "#2ca02c", 2.0, nullptr);
  const std::size_t n = trajectory.poses.size();
  for (std::size_t t = 0; t < n; ++t) {
    const double f = n > 1 ? double(t) / double(n - 1) : 1.0;
    char color[8];
    std::snprintf(color, sizeof color, "#%02x%02x%02x", int(120 + 135 * f), int(120 * (1 - f)), int(200 * (1 - f)));
    draw_pose(trajectory.poses[t], color, t + 1 == n ? 2.0 : 1.0, t == 0 ? "4 3" : nullptr);
  }
  s += "</g>\n</svg>\n";
  return s;
}

}  // namespace ief
