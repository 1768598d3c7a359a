// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ief/data.hpp"

namespace ief::testing {

// Cropped 32x32 figures, one box each, no mirroring.
inline Dataset tiny_dataset(std::size_t figures, std::uint64_t seed = 3, int resolution = 32) {
  const Skeleton& sk = stick_figure_skeleton();
  PrepareConfig pc;
  pc.resolution = resolution;
  pc.boxes = 1;
  pc.mirror = false;
  auto raw = generate_examples(seed, 0, figures, GeneratorConfig{});
  return make_dataset(prepare_examples(raw, sk, pc), sk, seed, "boxes=1 mirror=0");
}

}  // namespace ief::testing
