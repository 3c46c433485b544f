// SPDX-License-Identifier: Apache-2.0
//
// File-format round-trips, dataset assembly fixtures, and the planted
// correspondence properties of the synthetic generator.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "doctest.h"
#include "xattn/data.hpp"
#include "xattn/model.hpp"

using namespace xattn;

namespace {

EmbeddingTable toy_table(std::size_t dim, std::uint64_t seed) {
  EmbeddingTable t(dim, text::vocabulary().words);
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t d = 0; d < dim; ++d) t.vector_mut(i)[d] = rng.normal();
  return t;
}

// Values exactly representable in f32 so the XROI round-trip is bit-exact.
double grid(Rng& rng) { return double(rng.uniform_int(512)) / 256.0 - 1.0; }

std::vector<RoiSet> grid_rois(std::size_t images, std::size_t rois, std::size_t dim,
                              std::uint64_t seed) {
  Rng rng(seed);
  std::vector<RoiSet> out(images);
  for (std::size_t n = 0; n < images; ++n) {
    out[n].image_id = "im" + std::to_string(n);
    out[n].rois.resize(rois);
    for (auto& r : out[n].rois) {
      for (std::size_t d = 0; d < dim; ++d) r.feat.push_back(grid(rng));
      r.score = double(rng.uniform_int(256)) / 256.0;
      r.box = {0.125, 0.25, 0.5, 0.75};
    }
  }
  return out;
}

bool roisets_equal(const std::vector<RoiSet>& a, const std::vector<RoiSet>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t n = 0; n < a.size(); ++n) {
    if (a[n].image_id != b[n].image_id) return false;
    if (a[n].rois.size() != b[n].rois.size()) return false;
    for (std::size_t i = 0; i < a[n].rois.size(); ++i) {
      if (a[n].rois[i].feat != b[n].rois[i].feat) return false;
      if (a[n].rois[i].score != b[n].rois[i].score) return false;
      if (a[n].rois[i].box != b[n].rois[i].box) return false;
    }
  }
  return true;
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("reports round-trip through jsonl") {
  std::vector<text::Report> reports(3);
  reports[0] = {"r1", "Left pneumonia.", 4.0};
  reports[1] = {"r2", "No \"quoted\" finding\\with escapes\n2nd line", std::nullopt};
  reports[2] = {"r3", "", 0.0};

  TempFile f("reports_rt.jsonl");
  save_reports(reports, f.path);
  const auto back = load_reports(f.path);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].id == reports[i].id);
    CHECK(back[i].text == reports[i].text);
    CHECK(back[i].severity == reports[i].severity);
  }
}

TEST_CASE("reports parser reports path and line on malformed input") {
  TempFile f("reports_bad.jsonl");
  {
    std::ofstream out(f.path);
    out << R"({"id": "ok", "text": "fine"})" << "\n";
    out << "\n";  // blank lines are skipped
    out << R"({"text": "missing id"})" << "\n";
  }
  try {
    load_reports(f.path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(f.path + ":3") != std::string::npos);
  }

  TempFile g("reports_syntax.jsonl");
  {
    std::ofstream out(g.path);
    out << "{not json\n";
  }
  CHECK_THROWS_AS(load_reports(g.path), ParseError);
  CHECK_THROWS_AS(load_reports("missing_reports.jsonl"), IoFailure);
}

TEST_CASE("roi sets round-trip through jsonl and xroi identically") {
  const auto rois = grid_rois(3, 4, 5, 17);

  TempFile j("rois_rt.jsonl");
  save_rois_jsonl(rois, j.path);
  CHECK(roisets_equal(load_rois(j.path), rois));

  TempFile x("rois_rt.xroi");
  save_rois_xroi(rois, x.path);
  CHECK(roisets_equal(load_rois(x.path), rois));  // sniffs the magic
}

TEST_CASE("xroi loader rejects corrupt files") {
  const auto rois = grid_rois(2, 2, 3, 18);
  TempFile x("rois_corrupt.xroi");
  save_rois_xroi(rois, x.path);

  std::ifstream in(x.path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  {
    std::ofstream out(x.path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), std::streamsize(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_rois(x.path), IoFailure);

  bytes[0] = 'Y';
  {
    std::ofstream out(x.path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), std::streamsize(bytes.size()));
  }
  CHECK_THROWS_AS(load_rois(x.path), ParseError);  // not XROI, not JSON either
}

TEST_CASE("ground truth and detections round-trip") {
  GroundTruthFile gt;
  gt.boxes["a"] = {Box{0.1, 0.2, 0.3, 0.4}, Box{0.5, 0.5, 0.75, 0.875}};
  gt.boxes["b"] = {Box{0, 0, 1, 1}};
  gt.planted_roi["a"] = 3;

  TempFile f("gt_rt.jsonl");
  save_ground_truth(gt, f.path);
  const GroundTruthFile back = load_ground_truth(f.path);
  REQUIRE(back.boxes.size() == 2);
  CHECK(back.boxes.at("a")[1].x2 == 0.75);
  CHECK(back.boxes.at("b")[0].y2 == 1.0);
  REQUIRE(back.planted_roi.size() == 1);
  CHECK(back.planted_roi.at("a") == 3);

  std::vector<Detection> dets(2);
  dets[0].image_id = "a";
  dets[0].boxes = {WeightedBox{Box{0.1, 0.2, 0.3, 0.4}, 0.9},
                   WeightedBox{Box{0.2, 0.2, 0.4, 0.5}, 0.5}};
  dets[0].attr_probs = Tensor::row({0.25, 0.5, 0.125});
  dets[1].image_id = "b";
  dets[1].boxes = {WeightedBox{Box{0, 0, 0.5, 0.5}, 1.0}};
  dets[1].attr_probs = Tensor::row({0.75, 0.0625, 0.5});

  TempFile d("dets_rt.jsonl");
  save_detections(dets, d.path);
  const auto dback = load_detections(d.path);
  REQUIRE(dback.size() == 2);
  CHECK(dback[0].image_id == "a");
  REQUIRE(dback[0].boxes.size() == 2);
  CHECK(dback[0].boxes[1].weight == 0.5);
  CHECK(dback[0].boxes[1].box.x2 == 0.4);
  REQUIRE(dback[1].attr_probs.cols() == 3);
  CHECK(dback[1].attr_probs[1] == 0.0625);
}

TEST_CASE("assembly joins, drops, and typed failures") {
  const EmbeddingTable table = toy_table(6, 2);
  std::vector<text::Report> reports(3);
  reports[0] = {"a", "Left pneumonia.", std::nullopt};
  reports[1] = {"b", "No pneumonia.", 2.0};       // negated: dropped
  reports[2] = {"c", "Unremarkable study.", {}};  // no disease term: dropped

  auto rois = grid_rois(1, 3, 4, 19);
  rois[0].image_id = "a";

  const Dataset ds = assemble_dataset(reports, rois, table, text::default_disease_terms());
  CHECK(ds.samples.size() == 1);
  CHECK(ds.dropped_no_attrs == 2);
  const Sample& s = ds.samples[0];
  CHECK(s.image_id == "a");
  CHECK(s.attrs == std::vector<std::size_t>{text::vocabulary().at("left")});
  CHECK(s.roi_set.rois.size() == 3);
  REQUIRE(s.attr_embeds.rows() == 1);
  CHECK(s.attr_embeds(0, 0) == table.vector("left")[0]);
  REQUIRE(s.target.cols() == 22);
  CHECK(s.target[text::vocabulary().at("left")] == 1.0);
  double tsum = 0.0;
  for (std::size_t i = 0; i < s.target.size(); ++i) tsum += s.target[i];
  CHECK(tsum == 1.0);
  CHECK_FALSE(s.severity.has_value());

  // Kept report without a ROI record.
  std::vector<text::Report> orphan = {{"zzz", "Left pneumonia.", {}}};
  CHECK_THROWS_AS(assemble_dataset(orphan, rois, table, text::default_disease_terms()),
                  IdMismatch);

  // Every report dropped -> empty dataset.
  std::vector<text::Report> negated = {{"a", "No pneumonia.", {}}};
  CHECK_THROWS_AS(assemble_dataset(negated, rois, table, text::default_disease_terms()),
                  EmptyDataset);

  // Duplicates.
  std::vector<text::Report> dup = {reports[0], reports[0]};
  CHECK_THROWS_AS(assemble_dataset(dup, rois, table, text::default_disease_terms()),
                  ParseError);
  auto dup_rois = rois;
  dup_rois.push_back(rois[0]);
  CHECK_THROWS_AS(assemble_dataset(reports, dup_rois, table, text::default_disease_terms()),
                  ParseError);

  // Empty ROI set behind a kept report.
  auto hollow = rois;
  hollow[0].rois.clear();
  CHECK_THROWS_AS(assemble_dataset(reports, hollow, table, text::default_disease_terms()),
                  NotEnoughRois);

  // Ragged feature widths across images.
  std::vector<text::Report> two = {{"a", "Left pneumonia.", {}},
                                   {"b", "Severe pneumonia.", {}}};
  auto ragged = grid_rois(2, 2, 4, 20);
  ragged[0].image_id = "a";
  ragged[1].image_id = "b";
  for (auto& r : ragged[1].rois) r.feat.push_back(0.0);
  CHECK_THROWS_AS(assemble_dataset(two, ragged, table, text::default_disease_terms()),
                  FeatureDimMismatch);
}

TEST_CASE("synth generator is deterministic and labeled correctly") {
  const EmbeddingTable table = toy_table(8, 3);
  SynthConfig cfg;
  cfg.num_images = 20;
  cfg.rois_per_image = 5;
  cfg.feat_dim = 16;
  cfg.attrs_per_image = 3;
  cfg.seed = 9;

  const SynthOut a = synth_generate(cfg, table);
  const SynthOut b = synth_generate(cfg, table);
  REQUIRE(a.reports.size() == cfg.num_images);
  REQUIRE(a.rois.size() == cfg.num_images);
  CHECK(roisets_equal(a.rois, b.rois));
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    CHECK(a.reports[i].id == b.reports[i].id);
    CHECK(a.reports[i].text == b.reports[i].text);
    CHECK(a.reports[i].severity == b.reports[i].severity);
  }

  SynthConfig other = cfg;
  other.seed = 10;
  const SynthOut c = synth_generate(other, table);
  CHECK_FALSE(roisets_equal(a.rois, c.rois));

  const auto& vocab = text::vocabulary();
  for (std::size_t n = 0; n < cfg.num_images; ++n) {
    const auto& rep = a.reports[n];
    // ids are img_%04zu and consistent across reports/rois/gt.
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "img_%04zu", n);
    CHECK(rep.id == idbuf);
    CHECK(a.rois[n].image_id == rep.id);
    REQUIRE(a.gt.planted_roi.count(rep.id) == 1);
    REQUIRE(a.gt.boxes.count(rep.id) == 1);

    // The report text re-extracts to the planted attribute set.
    const auto attrs = text::extract_attributes(rep.text);
    CHECK(attrs.size() == cfg.attrs_per_image);

    // Severity follows the severe/moderate rule on the extracted set.
    const bool severe = std::count(attrs.begin(), attrs.end(), vocab.at("severe")) > 0;
    const bool moderate = std::count(attrs.begin(), attrs.end(), vocab.at("moderate")) > 0;
    REQUIRE(rep.severity.has_value());
    CHECK(*rep.severity == (severe ? 8.0 : moderate ? 4.0 : 0.0));

    // Scores separate planted from decoys; boxes stay inside [0,1].
    const std::size_t planted = a.gt.planted_roi.at(rep.id);
    for (std::size_t k = 0; k < a.rois[n].rois.size(); ++k) {
      const Roi& r = a.rois[n].rois[k];
      if (k == planted) {
        CHECK(r.score >= 0.7);
        CHECK(r.score < 1.0);
      } else {
        CHECK(r.score >= 0.05);
        CHECK(r.score < 0.3);
      }
      CHECK(r.box[0] >= 0.0);
      CHECK(r.box[1] >= 0.0);
      CHECK(r.box[2] <= 1.0);
      CHECK(r.box[3] <= 1.0);
      CHECK(r.box[0] < r.box[2]);
      CHECK(r.box[1] < r.box[3]);
    }

    // Ground truth box is the planted ROI's box.
    const Box& gb = a.gt.boxes.at(rep.id)[0];
    CHECK(gb.x1 == a.rois[n].rois[planted].box[0]);
    CHECK(gb.y2 == a.rois[n].rois[planted].box[3]);
  }
}

TEST_CASE("synth report text fixture") {
  const auto& vocab = text::vocabulary();
  CHECK(synth_report_text({vocab.at("left"), vocab.at("severe")}) ==
        "left severe pneumonia.");
  CHECK(synth_report_text({vocab.at("right")}) == "right pneumonia.");
}

TEST_CASE("noise-free planted features are exact lifts and nearest neighbors") {
  const std::size_t d_emb = 8, d_feat = 32;
  const EmbeddingTable table = toy_table(d_emb, 6);
  SynthConfig cfg;
  cfg.num_images = 30;
  cfg.rois_per_image = 6;
  cfg.feat_dim = d_feat;
  cfg.attrs_per_image = 2;
  cfg.noise_sigma = 0.0;
  cfg.seed = 33;

  const SynthOut out = synth_generate(cfg, table);
  const Tensor L = synth_lift_matrix(d_emb, d_feat);
  const auto sets = synth_attr_sets(cfg);
  const auto& vocab = text::vocabulary();

  for (std::size_t n = 0; n < cfg.num_images; ++n) {
    // Expected planted feature: lift of the unit-normalized mean embedding.
    std::vector<double> dir(d_emb, 0.0);
    for (std::size_t a : sets[n])
      for (std::size_t i = 0; i < d_emb; ++i) dir[i] += table.vector(vocab.words[a])[i];
    double norm = 0.0;
    for (double x : dir) norm += x * x;
    norm = std::sqrt(norm);
    std::vector<double> want(d_feat, 0.0);
    for (std::size_t i = 0; i < d_emb; ++i)
      for (std::size_t j = 0; j < d_feat; ++j) want[j] += (dir[i] / norm) * L(i, j);

    const std::size_t planted = out.gt.planted_roi.at(out.reports[n].id);
    const auto& feat = out.rois[n].rois[planted].feat;
    for (std::size_t j = 0; j < d_feat; ++j) CHECK(std::abs(feat[j] - want[j]) < 1e-12);

    // The planted ROI is the cosine nearest neighbor of the lifted mean.
    std::size_t best = 0;
    double best_cos = -2.0;
    for (std::size_t k = 0; k < cfg.rois_per_image; ++k) {
      const auto& f = out.rois[n].rois[k].feat;
      double uv = 0, uu = 0, vv = 0;
      for (std::size_t j = 0; j < d_feat; ++j) {
        uv += f[j] * want[j];
        uu += f[j] * f[j];
        vv += want[j] * want[j];
      }
      const double c = uv / std::sqrt(uu * vv);
      if (c > best_cos) {
        best_cos = c;
        best = k;
      }
    }
    CHECK(best == planted);
    CHECK(best_cos > 1.0 - 1e-9);
  }
}

// [DERIVED] chance baseline measured over fresh inits: an untrained model's
// top-alpha ROI matches the planted one at roughly 1/N. The planted ROI's
// higher feature norm gives a weak bias at init (measured mean ~0.06-0.09
// against chance 0.05), nowhere near trained behavior (~1.0).
TEST_CASE("a freshly initialized model ranks planted ROIs near chance") {
  SynthConfig cfg;  // 200 images x 20 rois x 64 dims, the benchmark shape
  const EmbeddingTable table = synth_attr_table(64, cfg.seed);
  const Dataset ds = synth_dataset(cfg, table);
  ModelConfig mc;
  mc.d_roi = cfg.feat_dim;
  mc.d_joint = table.dim();

  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(seed);
    Rng init_rng = rng.fork(3);
    const ModelParams params = init_params(mc, init_rng);
    std::size_t hits = 0;
    for (const Sample& s : ds.samples) {
      const Tensor phi = transform_roi(s.roi_set, params);
      const Tensor alpha = roi_weights(phi, params);
      std::size_t best = 0;
      for (std::size_t i = 1; i < phi.rows(); ++i)
        if (alpha(i, 0) > alpha(best, 0)) best = i;
      if (best == ds.planted_roi.at(s.image_id)) ++hits;
    }
    mean += double(hits) / double(ds.samples.size());
  }
  mean /= 8.0;
  CHECK(mean > 0.01);
  CHECK(mean < 0.15);
}

TEST_CASE("load_dataset reassembles the generated world from disk") {
  const EmbeddingTable table = toy_table(8, 4);
  SynthConfig cfg;
  cfg.num_images = 10;
  cfg.rois_per_image = 4;
  cfg.feat_dim = 12;
  cfg.attrs_per_image = 2;
  cfg.seed = 3;

  const Dataset direct = synth_dataset(cfg, table);
  const SynthOut raw = synth_generate(cfg, table);

  TempFile fr("world_reports.jsonl");
  TempFile fx("world_rois.xroi");
  TempFile fg("world_gt.jsonl");
  save_reports(raw.reports, fr.path);
  save_rois_xroi(raw.rois, fx.path);
  save_ground_truth(raw.gt, fg.path);

  const Dataset loaded = load_dataset(fr.path, fx.path, fg.path, table,
                                      text::default_disease_terms());
  REQUIRE(loaded.samples.size() == direct.samples.size());
  CHECK(loaded.gt_boxes.size() == direct.gt_boxes.size());
  CHECK(loaded.planted_roi == direct.planted_roi);
  for (std::size_t i = 0; i < loaded.samples.size(); ++i) {
    const Sample& a = loaded.samples[i];
    const Sample& b = direct.samples[i];
    CHECK(a.image_id == b.image_id);
    CHECK(a.attrs == b.attrs);
    CHECK(a.severity == b.severity);
    REQUIRE(a.roi_set.rois.size() == b.roi_set.rois.size());
    for (std::size_t k = 0; k < a.roi_set.rois.size(); ++k)
      for (std::size_t j = 0; j < cfg.feat_dim; ++j)
        CHECK(std::abs(a.roi_set.rois[k].feat[j] - b.roi_set.rois[k].feat[j]) <=
              1e-6 * std::max(1.0, std::abs(b.roi_set.rois[k].feat[j])));
  }
}
