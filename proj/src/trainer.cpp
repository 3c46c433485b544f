// SPDX-License-Identifier: Apache-2.0

#include "xattn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "xattn/adam.hpp"
#include "xattn/rng.hpp"

namespace xattn {

RoiSet make_negative_rois(const RoiSet& set, std::size_t k) {
  const std::size_t n = set.rois.size();
  if (k == 0 || k > n)
    throw NotEnoughRois("negative set of " + std::to_string(k) + " from " + std::to_string(n) +
                        " rois (image " + set.image_id + ")");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return set.rois[a].score < set.rois[b].score;
  });
  RoiSet neg;
  neg.image_id = set.image_id;
  neg.rois.reserve(k);
  for (std::size_t i = 0; i < k; ++i) neg.rois.push_back(set.rois[idx[i]]);
  return neg;
}

Tensor make_negative_attributes(const Sample& sample, const EmbeddingTable& table) {
  const auto& vocab = text::vocabulary();
  Tensor out(sample.attrs.size(), table.dim());
  for (std::size_t j = 0; j < sample.attrs.size(); ++j) {
    const std::string neg = negative_attribute(vocab.words[sample.attrs[j]], table);
    const double* v = table.vector(neg);
    std::copy(v, v + table.dim(), out.row_ptr(j));
  }
  return out;
}

namespace {

void check_train_config(const TrainConfig& cfg) {
  if (cfg.batch_size == 0) throw Error(ErrorKind::usage, "train: batch_size must be >= 1");
  if (cfg.max_epochs == 0) throw Error(ErrorKind::usage, "train: max_epochs must be >= 1");
  if (cfg.train_frac < 0 || cfg.val_frac < 0 || cfg.test_frac < 0 ||
      std::abs(cfg.train_frac + cfg.val_frac + cfg.test_frac - 1.0) > 1e-9)
    throw Error(ErrorKind::usage, "train: split fractions must be >= 0 and sum to 1");
  if (!(cfg.early_stop_rel >= 0.0))
    throw Error(ErrorKind::usage, "train: early_stop_rel must be >= 0");
}

// Fold a batch's statistics into the running estimates (unbiased variance).
void update_running_stats(ModelParams& params, const std::vector<Tensor>& means,
                          const std::vector<Tensor>& vars, std::size_t batch_rows) {
  const double mom = params.cfg.bn_momentum;
  const double unbias = batch_rows > 1 ? double(batch_rows) / double(batch_rows - 1) : 1.0;
  for (std::size_t l = 0; l < params.cls_bn.size(); ++l) {
    BatchNormParam& bn = params.cls_bn[l];
    for (std::size_t j = 0; j < bn.run_mean.size(); ++j) {
      bn.run_mean[j] = (1.0 - mom) * bn.run_mean[j] + mom * means[l][j];
      bn.run_var[j] = (1.0 - mom) * bn.run_var[j] + mom * unbias * vars[l][j];
    }
  }
  ++params.bn_steps;
}

}  // namespace

TrainResult train(const std::vector<Sample>& samples, const EmbeddingTable& table,
                  const TrainConfig& cfg, const ModelParams& init) {
  check_train_config(cfg);
  const std::size_t n = samples.size();
  if (n == 0) throw EmptyDataset();

  Rng rng(cfg.seed);
  TrainResult res;

  // Split by a seeded permutation: train, then val, then test.
  {
    Rng split_rng = rng.fork(1);
    const std::vector<std::size_t> perm = split_rng.permutation(n);
    const std::size_t n_val = std::size_t(double(n) * cfg.val_frac);
    const std::size_t n_test = std::size_t(double(n) * cfg.test_frac);
    if (n_val + n_test >= n) throw TooFewSamples("train split is empty");
    const std::size_t n_train = n - n_val - n_test;
    res.train_idx.assign(perm.begin(), perm.begin() + std::ptrdiff_t(n_train));
    res.val_idx.assign(perm.begin() + std::ptrdiff_t(n_train),
                       perm.begin() + std::ptrdiff_t(n_train + n_val));
    res.test_idx.assign(perm.begin() + std::ptrdiff_t(n_train + n_val), perm.end());
  }

  // Negatives are score- and embedding-determined; compute them once.
  std::vector<RoiSet> neg_rois(n);
  std::vector<Tensor> neg_attrs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t n_rois = samples[i].roi_set.rois.size();
    const std::size_t k =
        cfg.neg_roi_count ? cfg.neg_roi_count : std::max<std::size_t>(1, n_rois / 2);
    neg_rois[i] = make_negative_rois(samples[i].roi_set, k);
    neg_attrs[i] = make_negative_attributes(samples[i], table);
  }

  auto refs_for = [&](const std::vector<std::size_t>& ids) {
    std::vector<TrainSampleRefs> refs;
    refs.reserve(ids.size());
    for (std::size_t i : ids) {
      TrainSampleRefs r;
      r.rois = &samples[i].roi_set;
      r.neg_rois = &neg_rois[i];
      r.attr_embeds = &samples[i].attr_embeds;
      r.neg_attr_embeds = &neg_attrs[i];
      r.target = &samples[i].target;
      refs.push_back(r);
    }
    return refs;
  };
  const std::vector<TrainSampleRefs> val_refs = refs_for(res.val_idx);

  ModelParams params = init;
  Adam adam({cfg.lr, cfg.weight_decay, 0.9, 0.999, 1e-8}, params.trainables());
  Rng shuffle_rng = rng.fork(2);

  ModelParams best = params;
  res.best_val = std::numeric_limits<double>::infinity();
  bool out_of_steps = false;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs && !out_of_steps; ++epoch) {
    std::vector<std::size_t> order = shuffle_rng.permutation(res.train_idx.size());
    double sum_total = 0.0, sum_trip = 0.0, sum_bce = 0.0;
    std::size_t seen = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<std::size_t> batch_ids;
      batch_ids.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) batch_ids.push_back(res.train_idx[order[i]]);

      BatchLoss bl;
      try {
        bl = batch_loss(refs_for(batch_ids), params, true, true);
      } catch (const NonFiniteLoss&) {
        throw NonFiniteLoss("epoch " + std::to_string(epoch) + ", batch starting at sample " +
                            samples[batch_ids[0]].image_id);
      }
      std::vector<Tensor*> trainables = params.trainables();
      adam.step(trainables, bl.grads);
      update_running_stats(params, bl.bn_means, bl.bn_vars, batch_ids.size());

      const double w = double(batch_ids.size());
      sum_total += w * bl.total;
      sum_trip += w * bl.trip;
      sum_bce += w * bl.bce;
      seen += batch_ids.size();
      ++res.steps;
      if (cfg.max_steps && res.steps >= cfg.max_steps) {
        out_of_steps = true;
        break;
      }
    }

    EpochTrace t;
    t.epoch = epoch;
    t.train_total = sum_total / double(seen);
    t.train_trip = sum_trip / double(seen);
    t.train_bce = sum_bce / double(seen);
    t.val_total =
        val_refs.empty() ? t.train_total : batch_loss(val_refs, params, false, false).total;
    res.trace.push_back(t);

    if (t.val_total < res.best_val) {
      res.best_val = t.val_total;
      res.best_epoch = epoch;
      best = params;
    }

    if (cfg.early_stop_window && res.trace.size() > cfg.early_stop_window) {
      const double ref =
          res.trace[res.trace.size() - 1 - cfg.early_stop_window].val_total;
      if (ref - t.val_total < cfg.early_stop_rel * std::abs(ref)) {
        res.stopped_early = true;
        break;
      }
    }
  }

  res.params = std::move(best);
  return res;
}

void write_loss_csv(const std::vector<EpochTrace>& trace, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + tmp + " for writing");
    out << "epoch,train_total,train_trip,train_bce,val_total\n";
    char buf[160];
    for (const auto& t : trace) {
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", t.epoch, t.train_total,
                    t.train_trip, t.train_bce, t.val_total);
      out << buf;
    }
    if (!out) throw IoFailure("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoFailure("cannot rename " + tmp + " to " + path);
}

}  // namespace xattn
