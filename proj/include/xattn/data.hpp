// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xattn/embeddings.hpp"
#include "xattn/metrics.hpp"
#include "xattn/model.hpp"
#include "xattn/text.hpp"

namespace xattn {

// One training/evaluation unit: an image's ROI set joined with the
// attributes extracted from its report.
struct Sample {
  std::string image_id;
  RoiSet roi_set;
  std::vector<std::size_t> attrs;  // ascending vocabulary indices, non-empty
  Tensor attr_embeds;              // M x dim
  Tensor target;                   // 1 x n_attrs binary
  std::optional<double> severity;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t dropped_no_attrs = 0;
  std::map<std::string, std::vector<Box>> gt_boxes;
  std::map<std::string, std::size_t> planted_roi;  // synthetic datasets only
};

// ---- file I/O ---------------------------------------------------------------
// JSONL formats, one record per line:
//   reports:     {"id", "text", "severity"?}
//   rois:        {"id", "rois": [{"feat": [...], "score", "box": [x1,y1,x2,y2]}]}
//   annotations: {"id", "boxes": [[x1,y1,x2,y2], ...], "planted_roi"?}
//   detections:  {"id", "boxes": [[x1,y1,x2,y2,weight], ...], "attr_probs": [...]}
// ROI sets are also stored as a binary bundle (magic "XROI", u16 version,
// u32 counts, f32 little-endian payloads); load_rois sniffs the magic.

std::vector<text::Report> load_reports(const std::string& path);
void save_reports(const std::vector<text::Report>& reports, const std::string& path);

std::vector<RoiSet> load_rois(const std::string& path);
void save_rois_jsonl(const std::vector<RoiSet>& rois, const std::string& path);
void save_rois_xroi(const std::vector<RoiSet>& rois, const std::string& path);

struct GroundTruthFile {
  std::map<std::string, std::vector<Box>> boxes;
  std::map<std::string, std::size_t> planted_roi;
};
GroundTruthFile load_ground_truth(const std::string& path);
void save_ground_truth(const GroundTruthFile& gt, const std::string& path);

std::vector<Detection> load_detections(const std::string& path);
void save_detections(const std::vector<Detection>& dets, const std::string& path);

// ---- dataset assembly -------------------------------------------------------

// Join reports with ROI sets: extract attributes, drop attribute-free images
// (counted), embed the rest. Throws IdMismatch when a kept report has no ROI
// record, FeatureDimMismatch on ragged feature widths.
Dataset assemble_dataset(const std::vector<text::Report>& reports,
                         const std::vector<RoiSet>& rois, const EmbeddingTable& table,
                         const std::vector<std::string>& disease_terms);

Dataset load_dataset(const std::string& reports_path, const std::string& rois_path,
                     const std::optional<std::string>& annotations_path,
                     const EmbeddingTable& table,
                     const std::vector<std::string>& disease_terms);

// ---- synthetic planted-correspondence generator -----------------------------

struct SynthConfig {
  std::size_t num_images = 200;
  std::size_t rois_per_image = 20;
  std::size_t feat_dim = 64;
  std::size_t attrs_per_image = 2;
  double noise_sigma = 0.1;
  std::uint64_t seed = 7;
};

// Fixed projection used for planted features; depends only on the shapes.
Tensor synth_lift_matrix(std::size_t d_emb, std::size_t d_roi);

// The attribute subsets the generator plants, deterministic in cfg.seed.
std::vector<std::vector<std::size_t>> synth_attr_sets(const SynthConfig& cfg);

// The one-sentence report the generator writes for an attribute set.
std::string synth_report_text(const std::vector<std::size_t>& attrs);

// A deterministic embedding table for the benchmark: one unit-norm random
// vector per vocabulary word. Skip-gram trained on the benchmark's own
// tiny reports collapses all attribute vectors onto one direction (every
// word shares every context), which erases attribute identity from the
// planted features; a seeded random table keeps attributes separable, as
// vectors trained on a large real corpus are.
EmbeddingTable synth_attr_table(std::size_t dim, std::uint64_t seed);

struct SynthOut {
  std::vector<text::Report> reports;
  std::vector<RoiSet> rois;
  GroundTruthFile gt;
};

// Per image: a one-sentence report naming the planted attributes, one ROI
// whose feature is the lift of the unit-normalized mean attribute vector
// plus N(0, sigma^2) noise (high detector score), and noise ROIs built the
// same way from random unit directions (low scores). The planted box is the
// ground truth.
SynthOut synth_generate(const SynthConfig& cfg, const EmbeddingTable& table);

// synth_generate + assemble_dataset in one step.
Dataset synth_dataset(const SynthConfig& cfg, const EmbeddingTable& table);

}  // namespace xattn
