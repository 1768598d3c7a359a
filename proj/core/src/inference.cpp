// SPDX-License-Identifier: Apache-2.0

#include "ief/inference.hpp"

#include <cmath>
#include <map>

#include "ief/errors.hpp"
#include "ief/io.hpp"

namespace ief {

Trajectory infer(const ImageGrid& image, const Model& model, const Pose& y0,
                 const InferOptions& options) {
  if (options.steps < 0) throw ValidationError("test step count must be >= 0");
  y0.validate();
  if (int(y0.size()) != model.layout.keypoints) {
    throw StructuralError("initial pose has " + std::to_string(y0.size()) + " keypoints, model expects " +
                          std::to_string(model.layout.keypoints));
  }
  const NetSpec& spec = model.params.spec;
  if (image.width != spec.width || image.height != spec.height || image.channels != spec.image_channels) {
    throw StructuralError("image does not match the model input size");
  }

  Trajectory t;
  t.poses.push_back(y0);
  ForwardCache<float> cache;
  for (int step = 0; step < options.steps; ++step) {
    const Pose& current = t.poses.back();
    const std::vector<float> out = forward(model.params, model_input(model, image, current), cache);
    Correction c = Correction::zeros(current.size());
    double largest = 0.0;
    for (std::size_t j = 0; j < model.layout.predicted.size(); ++j) {
      const Vec2 d{out[2 * j], out[2 * j + 1]};
      if (!std::isfinite(d.x) || !std::isfinite(d.y)) {
        throw InferenceError("non-finite correction at step " + std::to_string(step + 1));
      }
      c.deltas[std::size_t(model.layout.predicted[j])] = d;
      largest = std::max(largest, norm(d));
    }
    t.poses.push_back(apply_correction(current, c));
    t.corrections.push_back(std::move(c));
    if (options.early_stop && largest < *options.early_stop) break;
  }
  return t;
}

Trajectory infer_example(const Example& example, const Model& model, const InferOptions& options) {
  Trajectory t = infer(example.image, model, initial_pose(model, example.given_points), options);
  t.example_id = example.id;
  return t;
}

std::vector<Trajectory> batch_infer(std::span<const Example> examples, const Model& model,
                                    const InferOptions& options) {
  std::vector<Trajectory> out;
  out.reserve(examples.size());
  for (const Example& ex : examples) {
    try {
      out.push_back(infer_example(ex, model, options));
    } catch (const InferenceError& e) {
      throw InferenceError("example " + std::to_string(ex.id) + ": " + e.what());
    }
  }
  return out;
}

Trajectory unmirror(const Trajectory& t, int width, const Skeleton& skeleton) {
  Trajectory out = t;
  for (Pose& p : out.poses) {
    for (Vec2& v : p.points) v.x = width - v.x;
    for (auto [a, b] : skeleton.mirror_pairs) {
      std::swap(p.points[std::size_t(a)], p.points[std::size_t(b)]);
      const bool m = p.mask[std::size_t(a)];
      p.mask[std::size_t(a)] = p.mask[std::size_t(b)];
      p.mask[std::size_t(b)] = m;
    }
  }
  for (Correction& c : out.corrections) {
    for (Vec2& d : c.deltas) d.x = -d.x;
    for (auto [a, b] : skeleton.mirror_pairs) std::swap(c.deltas[std::size_t(a)], c.deltas[std::size_t(b)]);
  }
  return out;
}

std::string trajectories_csv(std::span<const Trajectory> trajectories) {
  std::string out = "example,step,keypoint,x,y\n";
  for (const Trajectory& t : trajectories) {
    for (std::size_t s = 0; s < t.poses.size(); ++s) {
      for (std::size_t k = 0; k < t.poses[s].size(); ++k) {
        out += std::to_string(t.example_id) + "," + std::to_string(s) + "," + std::to_string(k) + "," +
               io::format_double(t.poses[s].points[k].x) + "," +
               io::format_double(t.poses[s].points[k].y) + "\n";
      }
    }
  }
  return out;
}

std::vector<Trajectory> parse_trajectories_csv(const std::string& text) {
  const auto lines = io::split(text, '\n');
  if (lines.empty() || lines[0] != "example,step,keypoint,x,y") {
    throw IoError("not a trajectory CSV");
  }
  std::vector<Trajectory> out;
  for (std::size_t r = 1; r < lines.size(); ++r) {
    if (lines[r].empty()) continue;
    const auto f = io::split(lines[r], ',');
    if (f.size() != 5) throw IoError("trajectory CSV row " + std::to_string(r) + " malformed");
    const std::uint64_t id = io::parse_u64(f[0]);
    const std::size_t step = std::size_t(io::parse_u64(f[1]));
    const std::size_t k = std::size_t(io::parse_u64(f[2]));
    if (out.empty() || out.back().example_id != id) {
      out.push_back({});
      out.back().example_id = id;
    }
    Trajectory& t = out.back();
    if (step == t.poses.size()) {
      t.poses.emplace_back();
    } else if (step + 1 != t.poses.size()) {
      throw IoError("trajectory CSV row " + std::to_string(r) + " out of order");
    }
    Pose& p = t.poses.back();
    if (k != p.size()) throw IoError("trajectory CSV row " + std::to_string(r) + " out of order");
    p.points.push_back({io::parse_double(f[3]), io::parse_double(f[4])});
    p.mask.push_back(true);
  }
  for (Trajectory& t : out) {
    for (std::size_t s = 0; s + 1 < t.poses.size(); ++s) {
      Correction c;
      for (std::size_t k = 0; k < t.poses[s].size(); ++k) {
        c.deltas.push_back(t.poses[s + 1].points[k] - t.poses[s].points[k]);
      }
      t.corrections.push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace ief
