// SPDX-License-Identifier: Apache-2.0

#include "xattn/infer.hpp"

#include <algorithm>

#include "xattn/errors.hpp"

namespace xattn {

Detection infer(const RoiSet& rois, const ModelParams& params) {
  const std::size_t n = rois.rois.size();
  if (n == 0) throw NotEnoughRois("infer: empty ROI set");
  const Tensor phi = transform_roi(rois, params);
  const Tensor alpha = roi_weights(phi, params);

  std::vector<WeightedBox> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] >= 1.0 / double(n)) {
      const auto& b = rois.rois[i].box;
      candidates.push_back({Box{b[0], b[1], b[2], b[3]}, alpha[i]});
    }
  }
  if (candidates.empty()) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i)
      if (alpha[i] > alpha[best]) best = i;
    const auto& b = rois.rois[best].box;
    candidates.push_back({Box{b[0], b[1], b[2], b[3]}, alpha[best]});
  }

  Detection det;
  det.image_id = rois.image_id;
  for (std::size_t k : nms(candidates, kNmsIouThreshold))
    det.boxes.push_back(candidates[k]);
  det.attr_probs = classify_attributes(aggregate(phi, alpha), params, false);
  return det;
}

}  // namespace xattn
