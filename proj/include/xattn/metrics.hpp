// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "xattn/tensor.hpp"

namespace xattn {

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

struct WeightedBox {
  Box box;
  double weight = 0.0;
};

struct Detection {
  std::string image_id;
  std::vector<WeightedBox> boxes;  // sorted by descending weight
  Tensor attr_probs;               // 1 x n_attrs
};

// Intersection over union; throws DegenerateBox on empty boxes.
double iou(const Box& a, const Box& b);

// Greedy NMS: indices of kept boxes in keep order (descending weight, ties by
// input index); a box is dropped when its IoU with a kept box is >= threshold.
std::vector<std::size_t> nms(const std::vector<WeightedBox>& boxes,
                             double iou_threshold);

enum class HitMode { kTop1, kAny };

// Per threshold: fraction of detections whose box overlaps some ground-truth
// box with IoU >= t. kTop1 considers only the first (highest-weight) box.
// Throws MissingGroundTruth when a detection's image has no GT boxes.
std::map<double, double> localization_metrics(
    const std::vector<Detection>& detections,
    const std::map<std::string, std::vector<Box>>& ground_truth,
    const std::vector<double>& thresholds, HitMode mode);

// probs and targets are n_images x n_attrs. Accuracy thresholds at 0.5; AUC
// is the macro average of rank-based ROC AUC over attributes, skipping
// attributes whose targets are single-class (their indices are reported).
struct ClassificationMetrics {
  double accuracy = 0.0;
  double auc = 0.0;
  std::vector<std::size_t> skipped_attrs;
};
ClassificationMetrics classification_metrics(const Tensor& probs, const Tensor& targets);

double pearson(const std::vector<double>& x, const std::vector<double>& y);
// Pearson correlation of midranks.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct FoldStat {
  double mean = 0.0;
  double stddev = 0.0;
};

struct SeverityStats {
  FoldStat pearson, spearman, r2, mae, mse;
};

// 5-fold protocol: severity is min-max scaled to [0,1]; per fold a univariate
// least-squares fit probability -> scaled severity is trained on the other
// folds; R2/MAE/MSE are computed on the held-out fold, Pearson/Spearman on
// the held-out raw pairs. Throws TooFewSamples.
SeverityStats severity_correlation_one(const std::vector<double>& prob,
                                       const std::vector<double>& severity,
                                       std::size_t folds, std::uint64_t seed);

// Convenience over the two reported attributes.
std::pair<SeverityStats, SeverityStats> severity_correlation(
    const std::vector<double>& prob_a, const std::vector<double>& prob_b,
    const std::vector<double>& severity, std::size_t folds, std::uint64_t seed);

}  // namespace xattn
