// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xattn/data.hpp"
#include "xattn/model.hpp"

namespace xattn {

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 5e-4;
  std::size_t batch_size = 10;
  std::size_t max_epochs = 185;
  std::size_t max_steps = 0;           // 0 = no step cap
  std::size_t early_stop_window = 10;  // epochs; 0 disables the plateau rule
  double early_stop_rel = 1e-3;        // minimum relative improvement over the window
  double train_frac = 0.90;
  double val_frac = 0.05;
  double test_frac = 0.05;
  std::uint64_t seed = 0;
  std::size_t neg_roi_count = 0;  // 0 = floor(N/2), at least 1, per image
};

struct EpochTrace {
  std::size_t epoch = 0;  // 1-based
  double train_total = 0.0, train_trip = 0.0, train_bce = 0.0;
  double val_total = 0.0;
};

struct TrainResult {
  ModelParams params;  // snapshot with the best validation loss
  std::vector<EpochTrace> trace;
  std::vector<std::size_t> train_idx, val_idx, test_idx;
  std::size_t steps = 0;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  bool stopped_early = false;
};

// The k lowest-scored ROIs (ties by index), in ascending-score order.
// Throws NotEnoughRois when k > N or k == 0.
RoiSet make_negative_rois(const RoiSet& set, std::size_t k);

// Row j = embedding of the nearest-neighbor word of attribute j; rows align
// with sample.attr_embeds.
Tensor make_negative_attributes(const Sample& sample, const EmbeddingTable& table);

// Seeded shuffled mini-batches over the train split; one Adam step per batch;
// per-epoch validation loss (train loss when the val split is empty); stops on
// the plateau rule, max_epochs, or max_steps. Batch-norm running statistics
// are folded in after every step with momentum cfg.bn_momentum.
TrainResult train(const std::vector<Sample>& samples, const EmbeddingTable& table,
                  const TrainConfig& cfg, const ModelParams& init);

// CSV trace: header then one row per epoch.
void write_loss_csv(const std::vector<EpochTrace>& trace, const std::string& path);

}  // namespace xattn
