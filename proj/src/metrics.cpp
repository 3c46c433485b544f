// SPDX-License-Identifier: Apache-2.0

#include "xattn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xattn/errors.hpp"
#include "xattn/rng.hpp"

namespace xattn {

double iou(const Box& a, const Box& b) {
  if (a.x1 >= a.x2 || a.y1 >= a.y2)
    throw DegenerateBox("iou: first box has non-positive extent");
  if (b.x1 >= b.x2 || b.y1 >= b.y2)
    throw DegenerateBox("iou: second box has non-positive extent");
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni =
      (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return inter / uni;
}

std::vector<std::size_t> nms(const std::vector<WeightedBox>& boxes,
                             double iou_threshold) {
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return boxes[a].weight > boxes[b].weight;
  });
  std::vector<std::size_t> kept;
  std::vector<bool> dropped(boxes.size(), false);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (dropped[i]) continue;
    kept.push_back(i);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (!dropped[j] && iou(boxes[i].box, boxes[j].box) >= iou_threshold)
        dropped[j] = true;
    }
  }
  return kept;
}

std::map<double, double> localization_metrics(
    const std::vector<Detection>& detections,
    const std::map<std::string, std::vector<Box>>& ground_truth,
    const std::vector<double>& thresholds, HitMode mode) {
  if (detections.empty()) throw EmptyDataset();
  std::map<double, double> hits;
  for (double t : thresholds) hits[t] = 0.0;
  for (const Detection& det : detections) {
    const auto it = ground_truth.find(det.image_id);
    if (it == ground_truth.end() || it->second.empty())
      throw MissingGroundTruth(det.image_id);
    if (det.boxes.empty())
      throw ParseError("detection without boxes: " + det.image_id);
    const std::size_t limit = mode == HitMode::kTop1 ? 1 : det.boxes.size();
    double best = 0.0;
    for (std::size_t i = 0; i < limit; ++i)
      for (const Box& gt : it->second) best = std::max(best, iou(det.boxes[i].box, gt));
    for (double t : thresholds)
      if (best >= t) hits[t] += 1.0;
  }
  for (auto& [t, h] : hits) h /= double(detections.size());
  return hits;
}

namespace {

// Midranks (1-based); ties share the average rank.
std::vector<double> midranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

double auc_one_attr(const std::vector<double>& p, const std::vector<double>& t) {
  const std::vector<double> rank = midranks(p);
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (t[i] > 0.5) {
      pos_rank_sum += rank[i];
      ++pos;
    }
  const std::size_t neg = p.size() - pos;
  return (pos_rank_sum - 0.5 * double(pos) * double(pos + 1)) /
         (double(pos) * double(neg));
}

}  // namespace

ClassificationMetrics classification_metrics(const Tensor& probs, const Tensor& targets) {
  check_same_shape(probs, targets, "classification_metrics");
  if (probs.rows() == 0) throw EmptyDataset();
  ClassificationMetrics out;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < probs.size(); ++i)
    if ((probs[i] >= 0.5) == (targets[i] > 0.5)) ++correct;
  out.accuracy = double(correct) / double(probs.size());

  double auc_sum = 0.0;
  std::size_t auc_n = 0;
  for (std::size_t j = 0; j < probs.cols(); ++j) {
    std::vector<double> p(probs.rows()), t(probs.rows());
    for (std::size_t i = 0; i < probs.rows(); ++i) {
      p[i] = probs(i, j);
      t[i] = targets(i, j);
    }
    const bool has_pos = std::any_of(t.begin(), t.end(), [](double v) { return v > 0.5; });
    const bool has_neg = std::any_of(t.begin(), t.end(), [](double v) { return v <= 0.5; });
    if (!has_pos || !has_neg) {
      out.skipped_attrs.push_back(j);
      continue;
    }
    auc_sum += auc_one_attr(p, t);
    ++auc_n;
  }
  out.auc = auc_n ? auc_sum / double(auc_n) : 0.0;
  return out;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw TooFewSamples("pearson needs >= 2 paired values");
  const double n = double(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  const double denom = std::sqrt(sxx * syy);
  if (denom == 0.0) throw TooFewSamples("pearson: zero variance input");
  return sxy / denom;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(midranks(x), midranks(y));
}

namespace {

FoldStat fold_stat(const std::vector<double>& v) {
  const double n = double(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0.0;
  for (double e : v) var += (e - mean) * (e - mean);
  return FoldStat{mean, std::sqrt(var / n)};
}

}  // namespace

SeverityStats severity_correlation_one(const std::vector<double>& prob,
                                       const std::vector<double>& severity,
                                       std::size_t folds, std::uint64_t seed) {
  const std::size_t n = prob.size();
  if (severity.size() != n) throw ShapeMismatch("severity_correlation: length mismatch");
  if (folds < 2 || n < folds * 2)
    throw TooFewSamples("severity_correlation: " + std::to_string(n) + " samples for " +
                        std::to_string(folds) + " folds");
  const double smin = *std::min_element(severity.begin(), severity.end());
  const double smax = *std::max_element(severity.begin(), severity.end());
  if (smax <= smin) throw TooFewSamples("severity_correlation: severity has no spread");
  std::vector<double> scaled(n);
  for (std::size_t i = 0; i < n; ++i) scaled[i] = (severity[i] - smin) / (smax - smin);

  Rng rng(seed);
  const std::vector<std::size_t> perm = rng.permutation(n);
  std::vector<double> ps, sps, r2s, maes, mses;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t lo = f * n / folds;
    const std::size_t hi = (f + 1) * n / folds;
    // Least squares scaled = w * prob + c on the training folds.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t train_n = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k >= lo && k < hi) continue;
      const double xv = prob[perm[k]], yv = scaled[perm[k]];
      sx += xv;
      sy += yv;
      sxx += xv * xv;
      sxy += xv * yv;
      ++train_n;
    }
    const double tn = double(train_n);
    const double det = tn * sxx - sx * sx;
    const double w = det != 0.0 ? (tn * sxy - sx * sy) / det : 0.0;
    const double c = (sy - w * sx) / tn;

    std::vector<double> px, raw_y, scaled_y;
    for (std::size_t k = lo; k < hi; ++k) {
      px.push_back(prob[perm[k]]);
      raw_y.push_back(severity[perm[k]]);
      scaled_y.push_back(scaled[perm[k]]);
    }
    double ss_res = 0.0, ss_tot = 0.0, mae = 0.0;
    const double ymean =
        std::accumulate(scaled_y.begin(), scaled_y.end(), 0.0) / double(scaled_y.size());
    for (std::size_t k = 0; k < px.size(); ++k) {
      const double pred = w * px[k] + c;
      ss_res += (pred - scaled_y[k]) * (pred - scaled_y[k]);
      ss_tot += (scaled_y[k] - ymean) * (scaled_y[k] - ymean);
      mae += std::abs(pred - scaled_y[k]);
    }
    r2s.push_back(ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0);
    maes.push_back(mae / double(px.size()));
    mses.push_back(ss_res / double(px.size()));
    ps.push_back(pearson(px, raw_y));
    sps.push_back(spearman(px, raw_y));
  }
  SeverityStats out;
  out.pearson = fold_stat(ps);
  out.spearman = fold_stat(sps);
  out.r2 = fold_stat(r2s);
  out.mae = fold_stat(maes);
  out.mse = fold_stat(mses);
  return out;
}

std::pair<SeverityStats, SeverityStats> severity_correlation(
    const std::vector<double>& prob_a, const std::vector<double>& prob_b,
    const std::vector<double>& severity, std::size_t folds, std::uint64_t seed) {
  return {severity_correlation_one(prob_a, severity, folds, seed),
          severity_correlation_one(prob_b, severity, folds, seed)};
}

}  // namespace xattn
