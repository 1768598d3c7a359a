// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ief {

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelfCheckConfig {
  std::uint64_t seed = 1;
  int gradient_inputs = 10;
  int gradient_samples = 20;  // parameters per input
  double epsilon = 1e-6;
  double gradient_tolerance = 1e-4;
  int correction_cases = 100000;
  int path_cases = 10000;
  int mirror_cases = 200;
};

/// Gradient oracle on the reference network, bounded-correction and
/// fixed-path property sweeps, heatmap range and mirror involution checks.
std::vector<CheckOutcome> run_self_checks(const SelfCheckConfig& config);

}  // namespace ief
