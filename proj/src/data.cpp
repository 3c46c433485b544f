// SPDX-License-Identifier: Apache-2.0

#include "xattn/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "xattn/rng.hpp"

namespace xattn {

using nlohmann::json;

namespace {

constexpr std::uint16_t kXroiVersion = 1;
constexpr std::uint64_t kLiftSeed = 0x4c494654ull;  // arbitrary fixed stream

// Width of the background slice decoy features are drawn from (see
// synth_generate).
constexpr std::size_t kDecoySubspace = 4;

std::string loc(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line) + ": ";
}

json parse_line(const std::string& path, std::size_t line_no, const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw ParseError(loc(path, line_no) + "expected a JSON object");
  return j;
}

std::string require_id(const json& j, const std::string& path, std::size_t line_no) {
  if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty())
    throw ParseError(loc(path, line_no) + "missing or empty \"id\"");
  return j["id"].get<std::string>();
}

double require_number(const json& v, const std::string& path, std::size_t line_no,
                      const char* what) {
  if (!v.is_number()) throw ParseError(loc(path, line_no) + std::string(what) + " must be a number");
  return v.get<double>();
}

// Runs fn over non-blank lines; fn(line_no, line).
template <typename Fn>
void for_each_line(const std::string& path, Fn fn) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(line_no, line);
  }
}

void atomic_write(const std::string& path, const std::string& payload) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + tmp + " for writing");
    out.write(payload.data(), std::streamsize(payload.size()));
    if (!out) throw IoFailure("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoFailure("cannot rename " + tmp + " to " + path);
}

// ---- little-endian scalar packing (binary bundle) ----

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
}
void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

struct ByteReader {
  const std::string& buf;
  const std::string& path;
  std::size_t pos = 0;

  void need(std::size_t n) {
    if (pos + n > buf.size()) throw IoFailure(path + ": truncated (offset " + std::to_string(pos) + ")");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = std::uint16_t(std::uint8_t(buf[pos])) |
                      std::uint16_t(std::uint8_t(buf[pos + 1])) << 8;
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(buf[pos + std::size_t(i)])) << (8 * i);
    pos += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

Box parse_box(const json& v, const std::string& path, std::size_t line_no) {
  if (!v.is_array() || v.size() != 4)
    throw ParseError(loc(path, line_no) + "box must be [x1,y1,x2,y2]");
  Box b;
  b.x1 = require_number(v[0], path, line_no, "box coord");
  b.y1 = require_number(v[1], path, line_no, "box coord");
  b.x2 = require_number(v[2], path, line_no, "box coord");
  b.y2 = require_number(v[3], path, line_no, "box coord");
  return b;
}

json box_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

}  // namespace

// ---- reports ----------------------------------------------------------------

std::vector<text::Report> load_reports(const std::string& path) {
  std::vector<text::Report> out;
  for_each_line(path, [&](std::size_t line_no, const std::string& line) {
    json j = parse_line(path, line_no, line);
    text::Report r;
    r.id = require_id(j, path, line_no);
    if (!j.contains("text") || !j["text"].is_string())
      throw ParseError(loc(path, line_no) + "missing \"text\"");
    r.text = j["text"].get<std::string>();
    if (j.contains("severity") && !j["severity"].is_null())
      r.severity = require_number(j["severity"], path, line_no, "severity");
    out.push_back(std::move(r));
  });
  return out;
}

void save_reports(const std::vector<text::Report>& reports, const std::string& path) {
  std::string payload;
  for (const auto& r : reports) {
    json j{{"id", r.id}, {"text", r.text}};
    if (r.severity) j["severity"] = *r.severity;
    payload += j.dump();
    payload += '\n';
  }
  atomic_write(path, payload);
}

// ---- ROI sets ---------------------------------------------------------------

static std::vector<RoiSet> load_rois_jsonl(const std::string& path) {
  std::vector<RoiSet> out;
  for_each_line(path, [&](std::size_t line_no, const std::string& line) {
    json j = parse_line(path, line_no, line);
    RoiSet set;
    set.image_id = require_id(j, path, line_no);
    if (!j.contains("rois") || !j["rois"].is_array())
      throw ParseError(loc(path, line_no) + "missing \"rois\" array");
    for (const auto& rj : j["rois"]) {
      if (!rj.is_object() || !rj.contains("feat") || !rj["feat"].is_array())
        throw ParseError(loc(path, line_no) + "roi must have a \"feat\" array");
      Roi roi;
      roi.feat.reserve(rj["feat"].size());
      for (const auto& x : rj["feat"]) roi.feat.push_back(require_number(x, path, line_no, "feat"));
      if (roi.feat.empty()) throw ParseError(loc(path, line_no) + "empty \"feat\"");
      if (!rj.contains("score")) throw ParseError(loc(path, line_no) + "roi missing \"score\"");
      roi.score = require_number(rj["score"], path, line_no, "score");
      if (!rj.contains("box")) throw ParseError(loc(path, line_no) + "roi missing \"box\"");
      const Box b = parse_box(rj["box"], path, line_no);
      roi.box = {b.x1, b.y1, b.x2, b.y2};
      if (!set.rois.empty() && roi.feat.size() != set.rois[0].feat.size())
        throw FeatureDimMismatch("image " + set.image_id + ": roi width " +
                                 std::to_string(roi.feat.size()) + " != " +
                                 std::to_string(set.rois[0].feat.size()));
      set.rois.push_back(std::move(roi));
    }
    out.push_back(std::move(set));
  });
  return out;
}

static std::vector<RoiSet> load_rois_xroi(const std::string& path, const std::string& buf) {
  ByteReader r{buf, path};
  r.bytes(4);  // magic, already checked
  const std::uint16_t version = r.u16();
  if (version != kXroiVersion)
    throw VersionUnsupported(path + ": roi bundle version " + std::to_string(version));
  const std::uint32_t n_images = r.u32();
  std::vector<RoiSet> out;
  out.reserve(n_images);
  for (std::uint32_t i = 0; i < n_images; ++i) {
    RoiSet set;
    const std::uint32_t id_len = r.u32();
    if (id_len == 0 || id_len > 4096) throw ParseError(path + ": implausible id length");
    set.image_id = r.bytes(id_len);
    const std::uint32_t n_rois = r.u32();
    const std::uint32_t dim = r.u32();
    if (n_rois != 0 && dim == 0) throw ParseError(path + ": zero feature width");
    set.rois.reserve(n_rois);
    for (std::uint32_t k = 0; k < n_rois; ++k) {
      Roi roi;
      roi.feat.resize(dim);
      for (std::uint32_t d = 0; d < dim; ++d) roi.feat[d] = double(r.f32());
      roi.score = double(r.f32());
      for (int d = 0; d < 4; ++d) roi.box[std::size_t(d)] = double(r.f32());
      set.rois.push_back(std::move(roi));
    }
    out.push_back(std::move(set));
  }
  if (r.pos != buf.size()) throw ParseError(path + ": trailing bytes after last image");
  return out;
}

std::vector<RoiSet> load_rois(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() >= 4 && buf.compare(0, 4, "XROI") == 0) return load_rois_xroi(path, buf);
  return load_rois_jsonl(path);
}

void save_rois_jsonl(const std::vector<RoiSet>& rois, const std::string& path) {
  std::string payload;
  for (const auto& set : rois) {
    json arr = json::array();
    for (const auto& roi : set.rois) {
      json rj{{"feat", roi.feat},
              {"score", roi.score},
              {"box", json::array({roi.box[0], roi.box[1], roi.box[2], roi.box[3]})}};
      arr.push_back(std::move(rj));
    }
    json j{{"id", set.image_id}, {"rois", std::move(arr)}};
    payload += j.dump();
    payload += '\n';
  }
  atomic_write(path, payload);
}

void save_rois_xroi(const std::vector<RoiSet>& rois, const std::string& path) {
  std::string out;
  out += "XROI";
  put_u16(out, kXroiVersion);
  put_u32(out, std::uint32_t(rois.size()));
  for (const auto& set : rois) {
    put_u32(out, std::uint32_t(set.image_id.size()));
    out += set.image_id;
    put_u32(out, std::uint32_t(set.rois.size()));
    const std::size_t dim = set.feat_dim();
    put_u32(out, std::uint32_t(dim));
    for (const auto& roi : set.rois) {
      if (roi.feat.size() != dim)
        throw FeatureDimMismatch("image " + set.image_id + ": ragged roi widths");
      for (double x : roi.feat) put_f32(out, float(x));
      put_f32(out, float(roi.score));
      for (double x : roi.box) put_f32(out, float(x));
    }
  }
  atomic_write(path, out);
}

// ---- ground truth / detections ----------------------------------------------

GroundTruthFile load_ground_truth(const std::string& path) {
  GroundTruthFile gt;
  for_each_line(path, [&](std::size_t line_no, const std::string& line) {
    json j = parse_line(path, line_no, line);
    const std::string id = require_id(j, path, line_no);
    if (gt.boxes.count(id)) throw ParseError(loc(path, line_no) + "duplicate annotation for " + id);
    if (!j.contains("boxes") || !j["boxes"].is_array())
      throw ParseError(loc(path, line_no) + "missing \"boxes\" array");
    std::vector<Box>& boxes = gt.boxes[id];
    for (const auto& bj : j["boxes"]) boxes.push_back(parse_box(bj, path, line_no));
    if (j.contains("planted_roi")) {
      if (!j["planted_roi"].is_number_unsigned())
        throw ParseError(loc(path, line_no) + "planted_roi must be a non-negative integer");
      gt.planted_roi[id] = j["planted_roi"].get<std::size_t>();
    }
  });
  return gt;
}

void save_ground_truth(const GroundTruthFile& gt, const std::string& path) {
  std::string payload;
  for (const auto& [id, boxes] : gt.boxes) {
    json arr = json::array();
    for (const auto& b : boxes) arr.push_back(box_json(b));
    json j{{"id", id}, {"boxes", std::move(arr)}};
    auto it = gt.planted_roi.find(id);
    if (it != gt.planted_roi.end()) j["planted_roi"] = it->second;
    payload += j.dump();
    payload += '\n';
  }
  atomic_write(path, payload);
}

std::vector<Detection> load_detections(const std::string& path) {
  std::vector<Detection> out;
  for_each_line(path, [&](std::size_t line_no, const std::string& line) {
    json j = parse_line(path, line_no, line);
    Detection det;
    det.image_id = require_id(j, path, line_no);
    if (!j.contains("boxes") || !j["boxes"].is_array())
      throw ParseError(loc(path, line_no) + "missing \"boxes\" array");
    for (const auto& bj : j["boxes"]) {
      if (!bj.is_array() || bj.size() != 5)
        throw ParseError(loc(path, line_no) + "detection box must be [x1,y1,x2,y2,weight]");
      WeightedBox wb;
      wb.box.x1 = require_number(bj[0], path, line_no, "box coord");
      wb.box.y1 = require_number(bj[1], path, line_no, "box coord");
      wb.box.x2 = require_number(bj[2], path, line_no, "box coord");
      wb.box.y2 = require_number(bj[3], path, line_no, "box coord");
      wb.weight = require_number(bj[4], path, line_no, "box weight");
      det.boxes.push_back(wb);
    }
    if (!j.contains("attr_probs") || !j["attr_probs"].is_array())
      throw ParseError(loc(path, line_no) + "missing \"attr_probs\" array");
    det.attr_probs = Tensor(1, j["attr_probs"].size());
    std::size_t k = 0;
    for (const auto& x : j["attr_probs"])
      det.attr_probs[k++] = require_number(x, path, line_no, "attr_probs");
    out.push_back(std::move(det));
  });
  return out;
}

void save_detections(const std::vector<Detection>& dets, const std::string& path) {
  std::string payload;
  for (const auto& det : dets) {
    json arr = json::array();
    for (const auto& wb : det.boxes)
      arr.push_back(json::array({wb.box.x1, wb.box.y1, wb.box.x2, wb.box.y2, wb.weight}));
    json probs = json::array();
    for (std::size_t k = 0; k < det.attr_probs.size(); ++k) probs.push_back(det.attr_probs[k]);
    json j{{"id", det.image_id}, {"boxes", std::move(arr)}, {"attr_probs", std::move(probs)}};
    payload += j.dump();
    payload += '\n';
  }
  atomic_write(path, payload);
}

// ---- dataset assembly -------------------------------------------------------

Dataset assemble_dataset(const std::vector<text::Report>& reports,
                         const std::vector<RoiSet>& rois, const EmbeddingTable& table,
                         const std::vector<std::string>& disease_terms) {
  std::unordered_map<std::string, const RoiSet*> by_id;
  for (const auto& set : rois)
    if (!by_id.emplace(set.image_id, &set).second)
      throw ParseError("duplicate ROI record: " + set.image_id);

  const auto& vocab = text::vocabulary();
  Dataset ds;
  std::unordered_set<std::string> seen;
  std::size_t feat_dim = 0;
  for (const auto& report : reports) {
    if (!seen.insert(report.id).second) throw ParseError("duplicate report: " + report.id);
    std::vector<std::size_t> attrs = text::extract_attributes(report.text, vocab, disease_terms);
    if (attrs.empty()) {
      ++ds.dropped_no_attrs;
      continue;
    }
    auto it = by_id.find(report.id);
    if (it == by_id.end()) throw IdMismatch(report.id);
    const RoiSet& set = *it->second;
    if (set.rois.empty()) throw NotEnoughRois("image " + report.id + " has no rois");
    if (feat_dim == 0) feat_dim = set.feat_dim();
    if (set.feat_dim() != feat_dim)
      throw FeatureDimMismatch("image " + report.id + ": feature width " +
                               std::to_string(set.feat_dim()) + " != " + std::to_string(feat_dim));

    Sample s;
    s.image_id = report.id;
    s.roi_set = set;
    s.attr_embeds = embed_attributes(attrs, vocab, table);
    s.target = Tensor(1, vocab.size());
    for (std::size_t a : attrs) s.target[a] = 1.0;
    s.attrs = std::move(attrs);
    s.severity = report.severity;
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw EmptyDataset();
  return ds;
}

Dataset load_dataset(const std::string& reports_path, const std::string& rois_path,
                     const std::optional<std::string>& annotations_path,
                     const EmbeddingTable& table,
                     const std::vector<std::string>& disease_terms) {
  Dataset ds = assemble_dataset(load_reports(reports_path), load_rois(rois_path), table,
                                disease_terms);
  if (annotations_path) {
    GroundTruthFile gt = load_ground_truth(*annotations_path);
    ds.gt_boxes = std::move(gt.boxes);
    ds.planted_roi = std::move(gt.planted_roi);
  }
  return ds;
}

// ---- synthetic generator ----------------------------------------------------

Tensor synth_lift_matrix(std::size_t d_emb, std::size_t d_roi) {
  Rng rng(kLiftSeed);
  Tensor L(d_emb, d_roi);
  const double scale = 1.0 / std::sqrt(double(d_roi));
  for (std::size_t i = 0; i < L.size(); ++i) L[i] = scale * rng.normal();
  return L;
}

static void check_synth_config(const SynthConfig& cfg) {
  const std::size_t n_vocab = text::vocabulary().size();
  if (cfg.num_images == 0) throw Error(ErrorKind::usage, "synth: num_images must be > 0");
  if (cfg.rois_per_image == 0) throw Error(ErrorKind::usage, "synth: rois_per_image must be > 0");
  if (cfg.feat_dim == 0) throw Error(ErrorKind::usage, "synth: feat_dim must be > 0");
  if (cfg.attrs_per_image == 0 || cfg.attrs_per_image > n_vocab)
    throw Error(ErrorKind::usage, "synth: attrs_per_image must be in [1, " +
                                      std::to_string(n_vocab) + "]");
  if (!(cfg.noise_sigma >= 0.0)) throw Error(ErrorKind::usage, "synth: noise_sigma must be >= 0");
}

std::vector<std::vector<std::size_t>> synth_attr_sets(const SynthConfig& cfg) {
  check_synth_config(cfg);
  const std::size_t n_vocab = text::vocabulary().size();
  Rng rng = Rng(cfg.seed).fork(1);
  std::vector<std::vector<std::size_t>> sets(cfg.num_images);
  std::vector<std::size_t> idx(n_vocab);
  for (auto& attrs : sets) {
    for (std::size_t i = 0; i < n_vocab; ++i) idx[i] = i;
    for (std::size_t i = 0; i < cfg.attrs_per_image; ++i) {
      const std::size_t j = i + std::size_t(rng.uniform_int(std::uint64_t(n_vocab - i)));
      std::swap(idx[i], idx[j]);
    }
    attrs.assign(idx.begin(), idx.begin() + std::ptrdiff_t(cfg.attrs_per_image));
    std::sort(attrs.begin(), attrs.end());
  }
  return sets;
}

std::string synth_report_text(const std::vector<std::size_t>& attrs) {
  const auto& vocab = text::vocabulary();
  std::string out;
  for (std::size_t a : attrs) {
    out += vocab.words[a];
    out += ' ';
  }
  out += "pneumonia.";
  return out;
}

EmbeddingTable synth_attr_table(std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw Error(ErrorKind::usage, "synth: embedding dim must be > 0");
  EmbeddingTable table(dim, text::vocabulary().words);
  Rng rng = Rng(seed).fork(3);
  for (std::size_t i = 0; i < table.size(); ++i) {
    double* v = table.vector_mut(i);
    double sq = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      v[k] = rng.normal();
      sq += v[k] * v[k];
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t k = 0; k < dim; ++k) v[k] *= inv;
  }
  return table;
}

SynthOut synth_generate(const SynthConfig& cfg, const EmbeddingTable& table) {
  check_synth_config(cfg);
  const auto& vocab = text::vocabulary();
  const std::size_t d_emb = table.dim();
  const Tensor L = synth_lift_matrix(d_emb, cfg.feat_dim);
  const auto attr_sets = synth_attr_sets(cfg);
  const std::size_t severe_idx = vocab.at("severe");
  const std::size_t moderate_idx = vocab.at("moderate");

  // Orthonormal basis of the lifted attribute span (Gram-Schmidt). Decoys are
  // drawn in its orthogonal complement: background regions carry no attribute
  // signature. Isotropic decoys would each overlap the attribute directions
  // by ~1/sqrt(D), and with alpha bounded well below 1 by its sigmoid head the
  // N-1 of them together would drown the planted ROI's attribute signal in
  // the aggregate v. Widths too small for a complement (feat_dim < twice the
  // span rank) keep plain isotropic decoys.
  std::vector<std::vector<double>> span_basis;
  for (std::size_t w = 0; w < table.size(); ++w) {
    std::vector<double> b(cfg.feat_dim, 0.0);
    const double* v = table.vector(w);
    for (std::size_t i = 0; i < d_emb; ++i) {
      if (v[i] == 0.0) continue;
      const double* Lr = L.row_ptr(i);
      for (std::size_t j = 0; j < cfg.feat_dim; ++j) b[j] += v[i] * Lr[j];
    }
    for (const auto& q : span_basis) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cfg.feat_dim; ++j) dot += q[j] * b[j];
      for (std::size_t j = 0; j < cfg.feat_dim; ++j) b[j] -= dot * q[j];
    }
    double norm2 = 0.0;
    for (double x : b) norm2 += x * x;
    if (norm2 > 1e-12) {
      const double inv = 1.0 / std::sqrt(norm2);
      for (double& x : b) x *= inv;
      span_basis.push_back(std::move(b));
    }
  }
  const bool complement_decoys = cfg.feat_dim >= 2 * span_basis.size();

  // Decoys draw from a thin fixed slice of that complement rather than the
  // whole of it: background features are correlated across regions, not
  // isotropic, and the thin slice keeps the per-image noise from handing the
  // classifier enough degrees of freedom to memorize training images instead
  // of reading the attribute signal.
  std::vector<std::vector<double>> decoy_basis;
  if (complement_decoys) {
    Rng brng = Rng(cfg.seed).fork(4);
    const std::size_t want =
        std::min<std::size_t>(kDecoySubspace, cfg.feat_dim - span_basis.size());
    while (decoy_basis.size() < want) {
      std::vector<double> b(cfg.feat_dim);
      for (double& x : b) x = brng.normal();
      for (const auto& q : span_basis) {
        double dot = 0.0;
        for (std::size_t j = 0; j < cfg.feat_dim; ++j) dot += q[j] * b[j];
        for (std::size_t j = 0; j < cfg.feat_dim; ++j) b[j] -= dot * q[j];
      }
      for (const auto& q : decoy_basis) {
        double dot = 0.0;
        for (std::size_t j = 0; j < cfg.feat_dim; ++j) dot += q[j] * b[j];
        for (std::size_t j = 0; j < cfg.feat_dim; ++j) b[j] -= dot * q[j];
      }
      double norm2 = 0.0;
      for (double x : b) norm2 += x * x;
      if (norm2 > 1e-12) {
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& x : b) x *= inv;
        decoy_basis.push_back(std::move(b));
      }
    }
  }

  Rng rng = Rng(cfg.seed).fork(2);
  SynthOut out;
  out.reports.reserve(cfg.num_images);
  out.rois.reserve(cfg.num_images);
  std::vector<double> dir(d_emb);
  std::vector<double> coeff;

  // dir (unit, embedding space) -> row . L, plus isotropic noise.
  auto lift_with_noise = [&](const std::vector<double>& u, std::vector<double>& feat) {
    feat.assign(cfg.feat_dim, 0.0);
    for (std::size_t i = 0; i < d_emb; ++i) {
      const double ui = u[i];
      if (ui == 0.0) continue;
      const double* Lr = L.row_ptr(i);
      for (std::size_t j = 0; j < cfg.feat_dim; ++j) feat[j] += ui * Lr[j];
    }
    for (std::size_t j = 0; j < cfg.feat_dim; ++j) feat[j] += cfg.noise_sigma * rng.normal();
  };

  for (std::size_t n = 0; n < cfg.num_images; ++n) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "img_%04zu", n);
    const std::string id = idbuf;
    const auto& attrs = attr_sets[n];

    text::Report report;
    report.id = id;
    report.text = synth_report_text(attrs);
    const bool severe = std::binary_search(attrs.begin(), attrs.end(), severe_idx);
    const bool moderate = std::binary_search(attrs.begin(), attrs.end(), moderate_idx);
    report.severity = severe ? 8.0 : moderate ? 4.0 : 0.0;
    out.reports.push_back(std::move(report));

    // Unit direction of the mean attribute embedding.
    std::fill(dir.begin(), dir.end(), 0.0);
    for (std::size_t a : attrs) {
      const double* v = table.vector(vocab.words[a]);
      for (std::size_t i = 0; i < d_emb; ++i) dir[i] += v[i];
    }
    double norm = 0.0;
    for (double x : dir) norm += x * x;
    norm = std::sqrt(norm);
    if (!(norm > 1e-12)) throw NonFinite("synth: degenerate mean attribute embedding");
    for (double& x : dir) x /= norm;

    RoiSet set;
    set.image_id = id;
    set.rois.resize(cfg.rois_per_image);
    const std::size_t planted = std::size_t(rng.uniform_int(cfg.rois_per_image));
    for (std::size_t k = 0; k < cfg.rois_per_image; ++k) {
      Roi& roi = set.rois[k];
      const double cx = rng.uniform(0.2, 0.8);
      const double cy = rng.uniform(0.2, 0.8);
      const double hw = rng.uniform(0.05, 0.2);
      const double hh = rng.uniform(0.05, 0.2);
      roi.box = {cx - hw, cy - hh, cx + hw, cy + hh};
      if (k == planted) {
        lift_with_noise(dir, roi.feat);
        roi.score = rng.uniform(0.7, 1.0);
      } else {
        // Decoy: unit noise in the background slice (isotropic when the
        // width is too small for a complement). No sigma jitter; the planted
        // ROI is the only attribute-bearing region in the image.
        auto& feat = roi.feat;
        feat.assign(cfg.feat_dim, 0.0);
        if (complement_decoys) {
          coeff.resize(decoy_basis.size());
          double cn = 0.0;
          do {
            cn = 0.0;
            for (double& x : coeff) {
              x = rng.normal();
              cn += x * x;
            }
            cn = std::sqrt(cn);
          } while (!(cn > 1e-12));
          for (std::size_t k = 0; k < decoy_basis.size(); ++k) {
            const double ck = coeff[k] / cn;
            for (std::size_t j = 0; j < cfg.feat_dim; ++j)
              feat[j] += ck * decoy_basis[k][j];
          }
        } else {
          double dn = 0.0;
          do {
            dn = 0.0;
            for (double& x : feat) {
              x = rng.normal();
              dn += x * x;
            }
            dn = std::sqrt(dn);
          } while (!(dn > 1e-12));
          for (double& x : feat) x /= dn;
        }
        roi.score = rng.uniform(0.05, 0.3);
      }
    }
    out.gt.boxes[id] = {Box{set.rois[planted].box[0], set.rois[planted].box[1],
                            set.rois[planted].box[2], set.rois[planted].box[3]}};
    out.gt.planted_roi[id] = planted;
    out.rois.push_back(std::move(set));
  }
  return out;
}

Dataset synth_dataset(const SynthConfig& cfg, const EmbeddingTable& table) {
  SynthOut sy = synth_generate(cfg, table);
  Dataset ds = assemble_dataset(sy.reports, sy.rois, table, text::default_disease_terms());
  ds.gt_boxes = std::move(sy.gt.boxes);
  ds.planted_roi = std::move(sy.gt.planted_roi);
  return ds;
}

}  // namespace xattn
