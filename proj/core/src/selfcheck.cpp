// SPDX-License-Identifier: Apache-2.0

#include "ief/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ief/data.hpp"
#include "ief/model.hpp"
#include "ief/pose.hpp"
#include "ief/predictor.hpp"
#include "ief/rendering.hpp"
#include "ief/rng.hpp"

namespace ief {

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

// Dense uniform inputs. Rendered inputs are exactly zero away from the
// keypoints, which puts zero-bias units on the ReLU kink and leaves many
// weights with gradients below the central-difference resolution.
CheckOutcome gradient(const SelfCheckConfig& c) {
  Rng rng = Rng::derive(c.seed, 10);
  const KeypointLayout layout = KeypointLayout::standard(stick_figure_skeleton());
  const NetSpec spec = net_spec_for(layout, 64, 64, 1);
  const auto params = init_params<double>(spec, rng);

  double worst = 0.0;
  std::string where;
  std::size_t checked = 0;
  for (int n = 0; n < c.gradient_inputs; ++n) {
    AugmentedInput input(spec.width, spec.height, spec.image_channels, spec.in_channels - spec.image_channels);
    for (float& v : input.data) v = float(rng.uniform());
    Correction target;
    for (std::size_t k = 0; k < layout.predicted.size(); ++k) {
      target.deltas.push_back({rng.normal(0, 3), rng.normal(0, 3)});
    }
    const auto r = gradient_check(params, input, target, std::vector<bool>(target.size(), true), c.epsilon,
                                  c.gradient_samples, rng);
    checked += r.checked;
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      where = r.worst_parameter;
    }
  }
  return {"gradient", worst < c.gradient_tolerance,
          "max relative error " + sci(worst) + " at " + where + " over " + std::to_string(checked) +
              " parameters"};
}

CheckOutcome corrections(const SelfCheckConfig& c) {
  Rng rng = Rng::derive(c.seed, 11);
  int failures = 0;
  for (int i = 0; i < c.correction_cases; ++i) {
    const double bound = rng.uniform(0.1, 30.0);
    const Vec2 a{rng.uniform(-100, 100), rng.uniform(-100, 100)};
    const Vec2 b{rng.uniform(-100, 100), rng.uniform(-100, 100)};
    const Vec2 d = bounded_correction(Pose::annotated({a}), Pose::annotated({b}), bound, {true}).deltas[0];
    const Vec2 u = a - b;
    // L * u/|u| can round a few ulps past L; the reach slack covers that.
    const bool ok_norm = norm(d) <= bound + 1e-10;
    const bool ok_dir = std::abs(d.x * u.y - d.y * u.x) < 1e-9 && d.x * u.x + d.y * u.y >= 0.0;
    if (!ok_norm || !ok_dir) ++failures;
  }
  return {"bounded_correction", failures == 0,
          std::to_string(failures) + " of " + std::to_string(c.correction_cases) + " cases violate the bound or direction"};
}

CheckOutcome paths(const SelfCheckConfig& c) {
  Rng rng = Rng::derive(c.seed, 12);
  int failures = 0;
  for (int i = 0; i < c.path_cases; ++i) {
    const int k = 1 + int(rng.below(7));
    std::vector<Vec2> y0(static_cast<std::size_t>(k)), y(static_cast<std::size_t>(k));
    double far = 0.0;
    const double bound = rng.uniform(0.5, 25.0);
    for (int j = 0; j < k; ++j) {
      y0[std::size_t(j)] = {rng.uniform(-50, 150), rng.uniform(-50, 150)};
      y[std::size_t(j)] = {rng.uniform(-50, 150), rng.uniform(-50, 150)};
      far = std::max(far, norm(y[std::size_t(j)] - y0[std::size_t(j)]));
    }
    const int needed = int(std::ceil(far / bound));
    const FixedPath p = fixed_path(Pose::annotated(y0), Pose::annotated(y), bound, needed + 2);
    bool ok = p.poses[std::size_t(needed)].points == y;
    for (int t = needed; t < needed + 2; ++t) ok = ok && p.targets[std::size_t(t)].max_norm() == 0.0;
    if (!ok) ++failures;
  }
  return {"fixed_path", failures == 0,
          std::to_string(failures) + " of " + std::to_string(c.path_cases) + " paths miss the target"};
}

CheckOutcome heatmaps(const SelfCheckConfig& c) {
  Rng rng = Rng::derive(c.seed, 13);
  int failures = 0;
  for (int i = 0; i < 200; ++i) {
    const Vec2 kp{rng.uniform(-20, 84), rng.uniform(-20, 84)};
    const auto h = render_heatmap(kp, 64, 64, rng.uniform(0.5, 6.0));
    for (float v : h) {
      if (!(v >= 0.0f && v <= 1.0f)) {
        ++failures;
        break;
      }
    }
  }
  return {"heatmap_range", failures == 0, std::to_string(failures) + " of 200 heatmaps out of [0, 1]"};
}

CheckOutcome mirrors(const SelfCheckConfig& c) {
  const Skeleton& skel = stick_figure_skeleton();
  GeneratorConfig gen;
  int failures = 0;
  for (const Example& ex : generate_examples(c.seed, 0, std::size_t(c.mirror_cases), gen)) {
    if (!(mirror(mirror(ex, skel), skel) == ex)) ++failures;
  }
  return {"mirror_involution", failures == 0,
          std::to_string(failures) + " of " + std::to_string(c.mirror_cases) + " examples change under double mirroring"};
}

}  // namespace

std::vector<CheckOutcome> run_self_checks(const SelfCheckConfig& config) {
  return {gradient(config), corrections(config), paths(config), heatmaps(config), mirrors(config)};
}

}  // namespace ief
