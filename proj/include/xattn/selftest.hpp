// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace xattn {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
};

inline constexpr double kGradCheckTol = 1e-4;

// Central finite-difference checks for every graph primitive at seeded random
// points (kinked ops are sampled away from their kinks).
std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed);

// The same check through the whole training loss: a small model, 3 ROIs and
// 2 attributes per sample. batch of 1 and of 2 (the latter exercises real
// batch statistics in the classifier).
std::vector<GradCheckResult> run_loss_gradient_checks(std::uint64_t seed);

}  // namespace xattn
