// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "xattn/metrics.hpp"
#include "xattn/model.hpp"

namespace xattn {

// Text-free inference: compute alpha over the ROIs, keep those with
// alpha >= 1/N (falling back to the single best ROI when none qualify),
// apply greedy NMS at IoU 0.5, and classify the aggregate feature with the
// running batch-norm statistics. Throws UninitializedRunningStats on an
// untrained model.
Detection infer(const RoiSet& rois, const ModelParams& params);

inline constexpr double kNmsIouThreshold = 0.5;

}  // namespace xattn
