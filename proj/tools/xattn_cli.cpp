// SPDX-License-Identifier: Apache-2.0
//
// xattn: one binary for the whole pipeline. Subcommands mirror the stages:
// extract -> embed -> train -> infer -> eval, plus synth (planted-
// correspondence generator), severity (correlation statistics) and gradcheck
// (autodiff self-test).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "xattn/checkpoint.hpp"
#include "xattn/data.hpp"
#include "xattn/embeddings.hpp"
#include "xattn/infer.hpp"
#include "xattn/metrics.hpp"
#include "xattn/selftest.hpp"
#include "xattn/text.hpp"
#include "xattn/trainer.hpp"

namespace {

using nlohmann::json;
using namespace xattn;

std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t flag_value,
                           std::uint64_t fallback) {
  if (opt != nullptr && opt->count() > 0) return flag_value;
  if (const char* env = std::getenv("XATTN_SEED")) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used != std::string(env).size()) throw std::invalid_argument(env);
      return std::uint64_t(v);
    } catch (const std::exception&) {
      throw Error(ErrorKind::usage, "XATTN_SEED is not an unsigned integer: " + std::string(env));
    }
  }
  return fallback;
}

// ---- extract ----------------------------------------------------------------

struct ExtractArgs {
  std::string reports, out = "attributes.jsonl";
};

int run_extract(const ExtractArgs& a) {
  const auto reports = load_reports(a.reports);
  const auto& vocab = text::vocabulary();
  std::string payload;
  std::size_t with_attrs = 0;
  for (const auto& r : reports) {
    const auto attrs = text::extract_attributes(r.text, vocab, text::default_disease_terms());
    json words = json::array();
    for (std::size_t i : attrs) words.push_back(vocab.words[i]);
    if (!attrs.empty()) ++with_attrs;
    payload += json{{"id", r.id}, {"attrs", std::move(words)}}.dump();
    payload += '\n';
  }
  std::FILE* f = std::fopen((a.out + ".tmp").c_str(), "wb");
  if (!f) throw IoFailure("cannot open " + a.out + ".tmp");
  std::fwrite(payload.data(), 1, payload.size(), f);
  std::fclose(f);
  if (std::rename((a.out + ".tmp").c_str(), a.out.c_str()) != 0)
    throw IoFailure("cannot rename to " + a.out);
  std::printf("extract: %zu reports, %zu with attributes -> %s\n", reports.size(), with_attrs,
              a.out.c_str());
  return 0;
}

// ---- embed ------------------------------------------------------------------

struct EmbedArgs {
  std::string reports, out = "embeddings.txt";
  SkipGramConfig cfg;
};

int run_embed(const EmbedArgs& a) {
  const auto reports = load_reports(a.reports);
  std::vector<std::vector<std::string>> corpus;
  corpus.reserve(reports.size());
  for (const auto& r : reports) corpus.push_back(text::tokenize(r.text));
  const EmbeddingTable table = train_embeddings(corpus, a.cfg);
  save_embeddings(table, a.out);
  std::printf("embed: %zu reports -> %zu words x %zu dims -> %s\n", reports.size(), table.size(),
              table.dim(), a.out.c_str());
  return 0;
}

// ---- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  std::string embeddings;  // reuse an existing table instead of training one
  std::string format = "jsonl";
  std::size_t dim = 256;
  SynthConfig cfg;
};

int run_synth(const SynthArgs& a) {
  std::filesystem::create_directories(a.out_dir);
  const auto path = [&](const char* name) { return (std::filesystem::path(a.out_dir) / name).string(); };

  EmbeddingTable table;
  if (!a.embeddings.empty()) {
    table = load_embeddings(a.embeddings);
  } else {
    table = synth_attr_table(a.dim, a.cfg.seed);
    save_embeddings(table, path("embeddings.txt"));
  }

  const SynthOut sy = synth_generate(a.cfg, table);
  save_reports(sy.reports, path("reports.jsonl"));
  if (a.format == "xroi")
    save_rois_xroi(sy.rois, path("rois.xroi"));
  else if (a.format == "jsonl")
    save_rois_jsonl(sy.rois, path("rois.jsonl"));
  else
    throw Error(ErrorKind::usage, "synth: --format must be jsonl or xroi");
  save_ground_truth(sy.gt, path("ground_truth.jsonl"));
  std::printf("synth: %zu images x %zu rois (feat %zu, sigma %g, seed %llu) -> %s\n",
              a.cfg.num_images, a.cfg.rois_per_image, a.cfg.feat_dim, a.cfg.noise_sigma,
              (unsigned long long)a.cfg.seed, a.out_dir.c_str());
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data_dir, reports, rois, embeddings;
  std::string checkpoint, loss_csv;
  TrainConfig cfg;
  ModelConfig mc;
};

void resolve_data_dir(TrainArgs& a) {
  if (a.data_dir.empty()) return;
  const std::filesystem::path d(a.data_dir);
  if (a.reports.empty()) a.reports = (d / "reports.jsonl").string();
  if (a.embeddings.empty()) a.embeddings = (d / "embeddings.txt").string();
  if (a.rois.empty()) {
    const auto xroi = d / "rois.xroi";
    a.rois = std::filesystem::exists(xroi) ? xroi.string() : (d / "rois.jsonl").string();
  }
  if (a.checkpoint.empty()) a.checkpoint = (d / "model.ckpt").string();
  if (a.loss_csv.empty()) a.loss_csv = (d / "loss.csv").string();
}

int run_train(TrainArgs& a) {
  resolve_data_dir(a);
  if (a.reports.empty() || a.rois.empty() || a.embeddings.empty())
    throw Error(ErrorKind::usage, "train: need --data or all of --reports/--rois/--embeddings");
  if (a.checkpoint.empty()) a.checkpoint = "model.ckpt";
  if (a.loss_csv.empty()) a.loss_csv = "loss.csv";

  const EmbeddingTable table = load_embeddings(a.embeddings);
  const Dataset ds =
      load_dataset(a.reports, a.rois, std::nullopt, table, text::default_disease_terms());
  std::printf("train: %zu samples (%zu dropped without attributes)\n", ds.samples.size(),
              ds.dropped_no_attrs);

  a.mc.d_roi = ds.samples[0].roi_set.feat_dim();
  a.mc.d_joint = table.dim();
  Rng rng(a.cfg.seed);
  Rng init_rng = rng.fork(3);
  const ModelParams init = init_params(a.mc, init_rng);

  const TrainResult res = train(ds.samples, table, a.cfg, init);
  save_checkpoint(res.params, a.checkpoint);
  write_loss_csv(res.trace, a.loss_csv);

  std::printf("train: split %zu/%zu/%zu, %zu epochs (%zu steps)%s\n", res.train_idx.size(),
              res.val_idx.size(), res.test_idx.size(), res.trace.size(), res.steps,
              res.stopped_early ? ", stopped at plateau" : "");
  std::printf("train: best val %.6g at epoch %zu -> %s, trace -> %s\n", res.best_val,
              res.best_epoch, a.checkpoint.c_str(), a.loss_csv.c_str());
  return 0;
}

// ---- infer ------------------------------------------------------------------

struct InferArgs {
  std::string rois, checkpoint, out = "detections.jsonl";
};

int run_infer(const InferArgs& a) {
  const ModelParams params = load_checkpoint(a.checkpoint);
  const auto sets = load_rois(a.rois);
  std::vector<Detection> dets;
  dets.reserve(sets.size());
  for (const auto& set : sets) dets.push_back(infer(set, params));
  save_detections(dets, a.out);
  std::printf("infer: %zu images -> %s\n", dets.size(), a.out.c_str());
  return 0;
}

// ---- eval / severity ---------------------------------------------------------

struct EvalArgs {
  std::string detections, annotations, reports, out;
  std::vector<double> thresholds = {0.25, 0.5, 0.75};
  std::string hit_mode = "top1";
  std::vector<std::string> attrs = {"severe", "moderate"};
  std::size_t folds = 5;
  std::uint64_t seed = 0;
};

json fold_stat_json(const FoldStat& s) { return json{{"mean", s.mean}, {"std", s.stddev}}; }

json severity_json(const SeverityStats& s) {
  return json{{"pearson", fold_stat_json(s.pearson)},
              {"spearman", fold_stat_json(s.spearman)},
              {"r2", fold_stat_json(s.r2)},
              {"mae", fold_stat_json(s.mae)},
              {"mse", fold_stat_json(s.mse)}};
}

void print_severity_row(const char* name, const FoldStat& a, const FoldStat& b) {
  std::printf("  %-9s %9.4f ± %-8.4f %9.4f ± %-8.4f\n", name, a.mean, a.stddev, b.mean, b.stddev);
}

// Collects the pieces shared by `eval` and `severity`.
struct JoinedEval {
  Tensor probs, targets;                         // matched images x n_attrs
  std::vector<double> prob_a, prob_b, severity;  // images with a severity score
};

JoinedEval join_detections_reports(const std::vector<Detection>& dets,
                                   const std::vector<text::Report>& reports,
                                   const std::string& attr_a, const std::string& attr_b) {
  const auto& vocab = text::vocabulary();
  if (!vocab.contains(attr_a) || !vocab.contains(attr_b))
    throw Error(ErrorKind::usage, "unknown attribute: " + (vocab.contains(attr_a) ? attr_b : attr_a));

  std::map<std::string, const text::Report*> by_id;
  for (const auto& r : reports) by_id[r.id] = &r;

  std::vector<const Detection*> matched;
  std::vector<std::vector<std::size_t>> matched_attrs;
  JoinedEval out;
  for (const auto& det : dets) {
    auto it = by_id.find(det.image_id);
    if (it == by_id.end()) continue;
    if (det.attr_probs.size() != vocab.size())
      throw ParseError("detection " + det.image_id + ": expected " +
                       std::to_string(vocab.size()) + " attr_probs, got " +
                       std::to_string(det.attr_probs.size()));
    const auto attrs =
        text::extract_attributes(it->second->text, vocab, text::default_disease_terms());
    if (attrs.empty()) continue;  // mirrors the training-side filter
    matched.push_back(&det);
    matched_attrs.push_back(attrs);
    if (it->second->severity) {
      out.prob_a.push_back(det.attr_probs[vocab.at(attr_a)]);
      out.prob_b.push_back(det.attr_probs[vocab.at(attr_b)]);
      out.severity.push_back(*it->second->severity);
    }
  }
  if (matched.empty()) throw EmptyDataset();

  out.probs = Tensor(matched.size(), vocab.size());
  out.targets = Tensor(matched.size(), vocab.size());
  for (std::size_t i = 0; i < matched.size(); ++i) {
    for (std::size_t j = 0; j < vocab.size(); ++j) out.probs(i, j) = matched[i]->attr_probs[j];
    for (std::size_t a : matched_attrs[i]) out.targets(i, a) = 1.0;
  }
  return out;
}

int run_eval(const EvalArgs& a) {
  if (a.hit_mode != "top1" && a.hit_mode != "any")
    throw Error(ErrorKind::usage, "eval: --hit-mode must be top1 or any");
  const HitMode mode = a.hit_mode == "any" ? HitMode::kAny : HitMode::kTop1;
  const auto dets = load_detections(a.detections);
  json report{{"hit_mode", a.hit_mode}};

  if (!a.annotations.empty()) {
    const GroundTruthFile gt = load_ground_truth(a.annotations);
    const auto rates = localization_metrics(dets, gt.boxes, a.thresholds, mode);
    std::printf("localization (%zu images, hit-mode %s)\n", dets.size(), a.hit_mode.c_str());
    json jr;
    for (const auto& [t, rate] : rates) {
      std::printf("  IoU@%-5g %.4f\n", t, rate);
      char key[32];
      std::snprintf(key, sizeof key, "%g", t);
      jr[key] = rate;
    }
    report["iou_hit_rate"] = std::move(jr);
  }

  if (!a.reports.empty()) {
    const auto reports = load_reports(a.reports);
    const JoinedEval je = join_detections_reports(dets, reports, a.attrs[0], a.attrs[1]);
    const ClassificationMetrics cm = classification_metrics(je.probs, je.targets);
    std::printf("attributes (%zu images)\n", je.probs.rows());
    std::printf("  accuracy  %.4f\n", cm.accuracy);
    std::printf("  macro AUC %.4f (%zu single-class attrs skipped)\n", cm.auc,
                cm.skipped_attrs.size());
    report["attr_accuracy"] = cm.accuracy;
    report["attr_auc"] = cm.auc;
    json skipped = json::array();
    for (std::size_t j : cm.skipped_attrs) skipped.push_back(text::vocabulary().words[j]);
    report["skipped_attrs"] = std::move(skipped);

    if (je.severity.size() >= a.folds && a.folds >= 2) {
      try {
        const auto [sa, sb] =
            severity_correlation(je.prob_a, je.prob_b, je.severity, a.folds, a.seed);
        std::printf("severity (%zu images, %zu folds)\n", je.severity.size(), a.folds);
        std::printf("  %-9s %-20s %-20s\n", "stat", a.attrs[0].c_str(), a.attrs[1].c_str());
        print_severity_row("pearson", sa.pearson, sb.pearson);
        print_severity_row("spearman", sa.spearman, sb.spearman);
        print_severity_row("r2", sa.r2, sb.r2);
        print_severity_row("mae", sa.mae, sb.mae);
        print_severity_row("mse", sa.mse, sb.mse);
        report["severity"] =
            json{{a.attrs[0], severity_json(sa)}, {a.attrs[1], severity_json(sb)}};
        report["folds"] = a.folds;
      } catch (const TooFewSamples& e) {
        std::printf("severity: skipped (%s)\n", e.what());
      }
    } else {
      std::printf("severity: skipped (%zu scored images < %zu folds)\n", je.severity.size(),
                  a.folds);
    }
  }

  if (!a.out.empty()) {
    std::ofstream out(a.out, std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + a.out);
    out << report.dump(2) << '\n';
  }
  return 0;
}

int run_severity(const EvalArgs& a) {
  const auto dets = load_detections(a.detections);
  const auto reports = load_reports(a.reports);
  const JoinedEval je = join_detections_reports(dets, reports, a.attrs[0], a.attrs[1]);
  const auto [sa, sb] = severity_correlation(je.prob_a, je.prob_b, je.severity, a.folds, a.seed);
  std::printf("severity (%zu images, %zu folds)\n", je.severity.size(), a.folds);
  std::printf("  %-9s %-20s %-20s\n", "stat", a.attrs[0].c_str(), a.attrs[1].c_str());
  print_severity_row("pearson", sa.pearson, sb.pearson);
  print_severity_row("spearman", sa.spearman, sb.spearman);
  print_severity_row("r2", sa.r2, sb.r2);
  print_severity_row("mae", sa.mae, sb.mae);
  print_severity_row("mse", sa.mse, sb.mse);
  if (!a.out.empty()) {
    json report{{"severity", json{{a.attrs[0], severity_json(sa)}, {a.attrs[1], severity_json(sb)}}},
                {"folds", a.folds}};
    std::ofstream out(a.out, std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + a.out);
    out << report.dump(2) << '\n';
  }
  return 0;
}

// ---- gradcheck ----------------------------------------------------------------

int run_gradcheck(std::uint64_t seed) {
  bool ok = true;
  auto report = [&](const GradCheckResult& r) {
    const bool pass = r.max_rel_err < kGradCheckTol;
    ok = ok && pass;
    std::printf("%s %-22s %.3g\n", pass ? "ok  " : "FAIL", r.name.c_str(), r.max_rel_err);
  };
  for (const auto& r : run_gradient_checks(seed)) report(r);
  for (std::uint64_t s = 0; s < 10; ++s)
    for (const auto& r : run_loss_gradient_checks(s))
      report({r.name + "_seed" + std::to_string(s), r.max_rel_err});
  if (!ok) {
    std::fprintf(stderr, "gradcheck: relative error above %g\n", kGradCheckTol);
    return 3;
  }
  std::printf("gradcheck: all checks below %g\n", kGradCheckTol);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"weakly-supervised pneumonia grounding pipeline"};
  app.require_subcommand(1);

  ExtractArgs ex;
  CLI::App* extract = app.add_subcommand("extract", "reports -> attribute JSONL");
  extract->set_config("--config");
  extract->add_option("--reports", ex.reports, "reports JSONL")->required();
  extract->add_option("--out", ex.out, "output attributes JSONL");

  EmbedArgs em;
  std::uint64_t em_seed = 0;
  CLI::App* embed = app.add_subcommand("embed", "reports -> skip-gram embedding file");
  embed->set_config("--config");
  embed->add_option("--reports", em.reports, "reports JSONL")->required();
  embed->add_option("--out", em.out, "output embedding file");
  embed->add_option("--dim", em.cfg.dim, "embedding width");
  embed->add_option("--window", em.cfg.window, "max context window");
  embed->add_option("--negatives", em.cfg.negatives_per_target, "negative samples per target");
  embed->add_option("--epochs", em.cfg.epochs, "training epochs");
  embed->add_option("--lr", em.cfg.learning_rate, "initial learning rate");
  embed->add_option("--subsample", em.cfg.subsample_threshold, "subsample threshold (0 = off)");
  CLI::Option* em_seed_opt = embed->add_option("--seed", em_seed, "rng seed");

  SynthArgs sy;
  std::uint64_t sy_seed = 0;
  CLI::App* synth = app.add_subcommand("synth", "generate a planted-correspondence dataset");
  synth->set_config("--config");
  synth->add_option("--out", sy.out_dir, "output directory")->required();
  synth->add_option("--num-images", sy.cfg.num_images, "images to generate");
  synth->add_option("--rois-per-image", sy.cfg.rois_per_image, "rois per image");
  synth->add_option("--feat-dim", sy.cfg.feat_dim, "roi feature width");
  synth->add_option("--attrs-per-image", sy.cfg.attrs_per_image, "planted attributes per image");
  synth->add_option("--noise-sigma", sy.cfg.noise_sigma, "feature noise sigma");
  synth->add_option("--dim", sy.dim, "width of the generated attribute table");
  synth->add_option("--embeddings", sy.embeddings, "use an existing embedding file instead");
  synth->add_option("--format", sy.format, "roi file format: jsonl or xroi");
  CLI::Option* sy_seed_opt = synth->add_option("--seed", sy_seed, "rng seed (default 7)");

  TrainArgs tr;
  std::uint64_t tr_seed = 0;
  CLI::App* train_cmd = app.add_subcommand("train", "train the grounding model");
  train_cmd->set_config("--config");
  train_cmd->add_option("--data", tr.data_dir, "directory with reports/rois/embeddings");
  train_cmd->add_option("--reports", tr.reports, "reports JSONL");
  train_cmd->add_option("--rois", tr.rois, "roi file (JSONL or XROI)");
  train_cmd->add_option("--embeddings", tr.embeddings, "embedding file");
  train_cmd->add_option("--checkpoint", tr.checkpoint, "output checkpoint path");
  train_cmd->add_option("--loss-csv", tr.loss_csv, "output loss trace CSV");
  train_cmd->add_option("--lr", tr.cfg.lr, "learning rate");
  train_cmd->add_option("--weight-decay", tr.cfg.weight_decay, "decoupled weight decay");
  train_cmd->add_option("--batch-size", tr.cfg.batch_size, "mini-batch size");
  train_cmd->add_option("--epochs", tr.cfg.max_epochs, "max epochs");
  train_cmd->add_option("--max-steps", tr.cfg.max_steps, "step cap (0 = none)");
  train_cmd->add_option("--early-stop-window", tr.cfg.early_stop_window,
                        "plateau window in epochs (0 = off)");
  train_cmd->add_option("--early-stop-rel", tr.cfg.early_stop_rel,
                        "min relative improvement over the window");
  train_cmd->add_option("--train-frac", tr.cfg.train_frac, "train split fraction");
  train_cmd->add_option("--val-frac", tr.cfg.val_frac, "validation split fraction");
  train_cmd->add_option("--test-frac", tr.cfg.test_frac, "test split fraction");
  train_cmd->add_option("--neg-roi-count", tr.cfg.neg_roi_count,
                        "negative rois per image (0 = half the set)");
  train_cmd->add_option("--d-g", tr.mc.d_g, "geometry channel width");
  train_cmd->add_option("--d-s", tr.mc.d_s, "score channel width");
  train_cmd->add_option("--alpha-hidden", tr.mc.alpha_hidden, "alpha MLP hidden sizes")
      ->delimiter(',');
  train_cmd->add_option("--cls-hidden", tr.mc.cls_hidden, "classifier hidden sizes")
      ->delimiter(',');
  train_cmd->add_option("--lambda-a", tr.mc.lambda_a, "attention temperature (text side)");
  train_cmd->add_option("--lambda-b", tr.mc.lambda_b, "attention temperature (roi side)");
  train_cmd->add_option("--beta", tr.mc.beta, "triplet margin");
  train_cmd->add_option("--leaky-slope", tr.mc.leaky_slope, "leaky relu slope");
  train_cmd->add_option("--bn-momentum", tr.mc.bn_momentum, "batch-norm momentum");
  CLI::Option* tr_seed_opt = train_cmd->add_option("--seed", tr_seed, "rng seed");

  InferArgs in;
  CLI::App* infer_cmd = app.add_subcommand("infer", "text-free detection from a checkpoint");
  infer_cmd->set_config("--config");
  infer_cmd->add_option("--rois", in.rois, "roi file (JSONL or XROI)")->required();
  infer_cmd->add_option("--checkpoint", in.checkpoint, "model checkpoint")->required();
  infer_cmd->add_option("--out", in.out, "output detections JSONL");

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "localization / attribute / severity metrics");
  eval_cmd->set_config("--config");
  eval_cmd->add_option("--detections", ev.detections, "detections JSONL")->required();
  eval_cmd->add_option("--annotations", ev.annotations, "ground-truth boxes JSONL");
  eval_cmd->add_option("--reports", ev.reports, "reports JSONL (enables attribute metrics)");
  eval_cmd->add_option("--thresholds", ev.thresholds, "IoU thresholds")->delimiter(',');
  eval_cmd->add_option("--hit-mode", ev.hit_mode, "top1 or any");
  eval_cmd->add_option("--attrs", ev.attrs, "two severity attributes")
      ->delimiter(',')
      ->expected(2);
  eval_cmd->add_option("--folds", ev.folds, "severity CV folds");
  eval_cmd->add_option("--out", ev.out, "write the report as JSON");
  CLI::Option* ev_seed_opt = eval_cmd->add_option("--seed", ev.seed, "fold-shuffle seed");

  EvalArgs sv;
  CLI::App* severity_cmd = app.add_subcommand("severity", "severity correlation statistics");
  severity_cmd->set_config("--config");
  severity_cmd->add_option("--detections", sv.detections, "detections JSONL")->required();
  severity_cmd->add_option("--reports", sv.reports, "reports JSONL with severity")->required();
  severity_cmd->add_option("--attrs", sv.attrs, "two severity attributes")
      ->delimiter(',')
      ->expected(2);
  severity_cmd->add_option("--folds", sv.folds, "CV folds");
  severity_cmd->add_option("--out", sv.out, "write the stats as JSON");
  CLI::Option* sv_seed_opt = severity_cmd->add_option("--seed", sv.seed, "fold-shuffle seed");

  std::uint64_t gc_seed = 0;
  CLI::App* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference autodiff self-test");
  gradcheck_cmd->set_config("--config");
  CLI::Option* gc_seed_opt = gradcheck_cmd->add_option("--seed", gc_seed, "rng seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*extract) return run_extract(ex);
    if (*embed) {
      em.cfg.seed = resolve_seed(em_seed_opt, em_seed, 0);
      return run_embed(em);
    }
    if (*synth) {
      sy.cfg.seed = resolve_seed(sy_seed_opt, sy_seed, 7);
      return run_synth(sy);
    }
    if (*train_cmd) {
      tr.cfg.seed = resolve_seed(tr_seed_opt, tr_seed, 0);
      return run_train(tr);
    }
    if (*infer_cmd) return run_infer(in);
    if (*eval_cmd) {
      ev.seed = resolve_seed(ev_seed_opt, ev.seed, 0);
      return run_eval(ev);
    }
    if (*severity_cmd) {
      sv.seed = resolve_seed(sv_seed_opt, sv.seed, 0);
      return run_severity(sv);
    }
    if (*gradcheck_cmd) return run_gradcheck(resolve_seed(gc_seed_opt, gc_seed, 0));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::usage: return 1;
      case ErrorKind::data: return 2;
      case ErrorKind::numeric: return 3;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
