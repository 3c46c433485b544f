// SPDX-License-Identifier: Apache-2.0

#include "xattn/model.hpp"

#include <algorithm>
#include <cmath>

#include "xattn/errors.hpp"

namespace xattn {

namespace {

Tensor xavier(std::size_t in, std::size_t out, Rng& rng) {
  Tensor w(in, out);
  const double limit = std::sqrt(6.0 / double(in + out));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-limit, limit);
  return w;
}

LinearParam make_linear(std::size_t in, std::size_t out, Rng& rng) {
  return LinearParam{xavier(in, out, rng), Tensor(1, out)};
}

Tensor roi_features(const RoiSet& rs) {
  Tensor r(rs.rois.size(), rs.feat_dim());
  for (std::size_t i = 0; i < rs.rois.size(); ++i)
    std::copy(rs.rois[i].feat.begin(), rs.rois[i].feat.end(), r.row_ptr(i));
  return r;
}

Tensor roi_geometry(const RoiSet& rs) {
  Tensor g(rs.rois.size(), 4);
  for (std::size_t i = 0; i < rs.rois.size(); ++i)
    std::copy(rs.rois[i].box.begin(), rs.rois[i].box.end(), g.row_ptr(i));
  return g;
}

Tensor roi_scores(const RoiSet& rs) {
  Tensor s(rs.rois.size(), 1);
  for (std::size_t i = 0; i < rs.rois.size(); ++i) s[i] = rs.rois[i].score;
  return s;
}

}  // namespace

std::vector<Tensor*> ModelParams::trainables() {
  std::vector<Tensor*> out = {&W1, &b1, &W2, &b2, &Wg, &bg, &Ws, &bs,
                              &ln_g_gain, &ln_g_bias, &ln_s_gain, &ln_s_bias};
  for (auto& l : alpha_mlp) {
    out.push_back(&l.W);
    out.push_back(&l.b);
  }
  for (auto& l : cls_mlp) {
    out.push_back(&l.W);
    out.push_back(&l.b);
  }
  for (auto& bn : cls_bn) {
    out.push_back(&bn.gain);
    out.push_back(&bn.bias);
  }
  return out;
}

std::vector<const Tensor*> ModelParams::trainables() const {
  auto mut = const_cast<ModelParams*>(this)->trainables();
  return std::vector<const Tensor*>(mut.begin(), mut.end());
}

ModelParams init_params(const ModelConfig& cfg, Rng& rng) {
  ModelParams p;
  p.cfg = cfg;
  p.W1 = xavier(cfg.d_roi, cfg.d_joint, rng);
  p.b1 = Tensor(1, cfg.d_joint);
  p.W2 = xavier(cfg.d_g + cfg.d_s, cfg.d_joint, rng);
  p.b2 = Tensor(1, cfg.d_joint);
  p.Wg = xavier(4, cfg.d_g, rng);
  p.bg = Tensor(1, cfg.d_g);
  p.Ws = xavier(1, cfg.d_s, rng);
  p.bs = Tensor(1, cfg.d_s);
  p.ln_g_gain = Tensor(1, cfg.d_g, 1.0);
  p.ln_g_bias = Tensor(1, cfg.d_g);
  p.ln_s_gain = Tensor(1, cfg.d_s, 1.0);
  p.ln_s_bias = Tensor(1, cfg.d_s);
  std::size_t in = cfg.d_joint;
  for (std::size_t h : cfg.alpha_hidden) {
    p.alpha_mlp.push_back(make_linear(in, h, rng));
    in = h;
  }
  p.alpha_mlp.push_back(make_linear(in, 1, rng));
  in = cfg.d_joint;
  for (std::size_t h : cfg.cls_hidden) {
    p.cls_mlp.push_back(make_linear(in, h, rng));
    p.cls_bn.push_back(BatchNormParam{Tensor(1, h, 1.0), Tensor(1, h),
                                      Tensor(1, h), Tensor(1, h, 1.0)});
    in = h;
  }
  p.cls_mlp.push_back(make_linear(in, cfg.n_attrs, rng));
  return p;
}

GraphParams bind_params(Graph& g, const ModelParams& params, bool as_constants) {
  GraphParams gp;
  const auto reg = [&](const Tensor& t) {
    const NodeId id = as_constants ? g.constant(t) : g.input(t);
    gp.flat.push_back(id);
    return id;
  };
  gp.W1 = reg(params.W1);
  gp.b1 = reg(params.b1);
  gp.W2 = reg(params.W2);
  gp.b2 = reg(params.b2);
  gp.Wg = reg(params.Wg);
  gp.bg = reg(params.bg);
  gp.Ws = reg(params.Ws);
  gp.bs = reg(params.bs);
  gp.ln_g_gain = reg(params.ln_g_gain);
  gp.ln_g_bias = reg(params.ln_g_bias);
  gp.ln_s_gain = reg(params.ln_s_gain);
  gp.ln_s_bias = reg(params.ln_s_bias);
  for (const auto& l : params.alpha_mlp) gp.alpha_mlp.push_back({reg(l.W), reg(l.b)});
  for (const auto& l : params.cls_mlp) gp.cls_mlp.push_back({reg(l.W), reg(l.b)});
  for (const auto& bn : params.cls_bn) gp.cls_bn.push_back({reg(bn.gain), reg(bn.bias)});
  return gp;
}

NodeId build_transform(Graph& g, const GraphParams& gp, const ModelConfig& cfg,
                       const RoiSet& rois) {
  if (rois.rois.empty()) throw NotEnoughRois("transform_roi: empty ROI set");
  if (rois.feat_dim() != cfg.d_roi)
    throw ShapeMismatch("transform_roi: feature dim " +
                        std::to_string(rois.feat_dim()) + " != configured " +
                        std::to_string(cfg.d_roi));
  const NodeId r = g.constant(roi_features(rois));
  const NodeId geo = g.constant(roi_geometry(rois));
  const NodeId sc = g.constant(roi_scores(rois));
  const NodeId hg = g.layer_norm(g.add_rowvec(g.matmul(geo, gp.Wg), gp.bg),
                                 gp.ln_g_gain, gp.ln_g_bias, cfg.ln_eps);
  const NodeId hs = g.layer_norm(g.add_rowvec(g.matmul(sc, gp.Ws), gp.bs),
                                 gp.ln_s_gain, gp.ln_s_bias, cfg.ln_eps);
  const NodeId side = g.add_rowvec(g.matmul(g.concat_cols(hg, hs), gp.W2), gp.b2);
  return g.add(g.add_rowvec(g.matmul(r, gp.W1), gp.b1), side);
}

NodeId build_roi_weights(Graph& g, const GraphParams& gp, const ModelConfig& cfg,
                         NodeId phi) {
  NodeId x = phi;
  for (std::size_t l = 0; l + 1 < gp.alpha_mlp.size(); ++l)
    x = g.leaky_relu(g.add_rowvec(g.matmul(x, gp.alpha_mlp[l][0]), gp.alpha_mlp[l][1]),
                     cfg.leaky_slope);
  const auto& out = gp.alpha_mlp.back();
  x = g.sigmoid(g.add_rowvec(g.matmul(x, out[0]), out[1]));  // N x 1
  return g.softmax(x, Axis::kCols, 1.0);
}

NodeId build_aggregate(Graph& g, NodeId phi, NodeId alpha) {
  return g.matmul(alpha, phi, true, false);  // 1 x D
}

NodeId build_classifier(Graph& g, const GraphParams& gp, const ModelParams& params,
                        NodeId v_batch, bool train_mode,
                        std::vector<Tensor>* bn_means, std::vector<Tensor>* bn_vars) {
  if (!train_mode && params.bn_steps == 0) throw UninitializedRunningStats();
  if (bn_means) bn_means->assign(gp.cls_bn.size(), Tensor());
  if (bn_vars) bn_vars->assign(gp.cls_bn.size(), Tensor());
  NodeId x = v_batch;
  for (std::size_t l = 0; l + 1 < gp.cls_mlp.size(); ++l) {
    x = g.leaky_relu(g.add_rowvec(g.matmul(x, gp.cls_mlp[l][0]), gp.cls_mlp[l][1]),
                     params.cfg.leaky_slope);
    if (train_mode) {
      x = g.batch_norm_train(x, gp.cls_bn[l][0], gp.cls_bn[l][1], params.cfg.bn_eps,
                             bn_means ? &(*bn_means)[l] : nullptr,
                             bn_vars ? &(*bn_vars)[l] : nullptr);
    } else {
      x = g.batch_norm_infer(x, gp.cls_bn[l][0], gp.cls_bn[l][1],
                             params.cls_bn[l].run_mean, params.cls_bn[l].run_var,
                             params.cfg.bn_eps);
    }
  }
  const auto& out = gp.cls_mlp.back();
  return g.sigmoid(g.add_rowvec(g.matmul(x, out[0]), out[1]));
}

AttentionNodes build_cross_attention(Graph& g, const ModelConfig& cfg, NodeId phi,
                                     NodeId alpha, NodeId m_attr, bool want_text,
                                     bool want_roi) {
  AttentionNodes n;
  n.s_raw = g.cosine_pairs(phi, m_attr);
  n.s_bar = g.l2_normalize_cols(g.hinge(n.s_raw), 1e-12);
  if (want_text) {
    if (alpha == kNoNode)
      throw ShapeMismatch("cross_attention: text branch needs alpha");
    n.a = g.softmax(n.s_bar, Axis::kRows, cfg.lambda_a);
    n.A = g.matmul(g.scale_rows(n.a, alpha), phi, true, false);  // M x D
    n.r_text = g.cosine_rows(n.A, m_attr);
    n.s_text = g.mean_all(n.r_text);
  }
  if (want_roi) {
    n.b = g.softmax(n.s_bar, Axis::kCols, cfg.lambda_b);
    n.B = g.matmul(n.b, m_attr);  // N x D
    n.r_roi = g.cosine_rows(n.B, phi);
    n.s_roi = g.mean_all(n.r_roi);
  }
  return n;
}

// ---- forward-only wrappers -------------------------------------------------

Tensor transform_roi(const RoiSet& rois, const ModelParams& params) {
  Graph g;
  const GraphParams gp = bind_params(g, params, true);
  return g.value(build_transform(g, gp, params.cfg, rois));
}

Tensor roi_weights(const Tensor& phi, const ModelParams& params) {
  Graph g;
  const GraphParams gp = bind_params(g, params, true);
  return g.value(build_roi_weights(g, gp, params.cfg, g.constant(phi)));
}

Tensor aggregate(const Tensor& phi, const Tensor& alpha) {
  Graph g;
  return g.value(build_aggregate(g, g.constant(phi), g.constant(alpha)));
}

Tensor classify_attributes(const Tensor& v_batch, const ModelParams& params,
                           bool train_mode) {
  Graph g;
  const GraphParams gp = bind_params(g, params, true);
  return g.value(
      build_classifier(g, gp, params, g.constant(v_batch), train_mode, nullptr, nullptr));
}

CrossAttentionState cross_attention(const Tensor& phi, const Tensor& alpha,
                                    const Tensor& m_attr, const ModelParams& params) {
  Graph g;
  const AttentionNodes n =
      build_cross_attention(g, params.cfg, g.constant(phi), g.constant(alpha),
                            g.constant(m_attr), true, true);
  CrossAttentionState st;
  st.s_raw = g.value(n.s_raw);
  st.s_bar = g.value(n.s_bar);
  st.a = g.value(n.a);
  st.b = g.value(n.b);
  st.A = g.value(n.A);
  st.B = g.value(n.B);
  return st;
}

SimilarityScores pooled_similarities(const CrossAttentionState& state,
                                     const Tensor& phi, const Tensor& m_attr) {
  Graph g;
  SimilarityScores out;
  const NodeId r_text = g.cosine_rows(g.constant(state.A), g.constant(m_attr));
  const NodeId r_roi = g.cosine_rows(g.constant(state.B), g.constant(phi));
  out.r_text = g.value(r_text);
  out.r_roi = g.value(r_roi);
  out.s_text = g.value(g.mean_all(r_text))[0];
  out.s_roi = g.value(g.mean_all(r_roi))[0];
  return out;
}

double triplet_loss(double s_roi_pos, double s_roi_neg, double s_text_pos,
                    double s_text_neg, double beta) {
  return std::max(beta - s_roi_pos + s_roi_neg, 0.0) +
         std::max(beta - s_text_pos + s_text_neg, 0.0);
}

double bce_loss(const Tensor& p, const Tensor& targets) {
  check_same_shape(p, targets, "bce_loss");
  if (p.empty()) throw ShapeMismatch("bce_loss: empty input");
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pc = std::clamp(p[i], 1e-7, 1.0 - 1e-7);
    loss -= targets[i] * std::log(pc) + (1.0 - targets[i]) * std::log(1.0 - pc);
  }
  return loss / double(p.size());
}

// ---- batched loss ----------------------------------------------------------

BatchLoss batch_loss(const std::vector<TrainSampleRefs>& batch,
                     const ModelParams& params, bool train_mode, bool with_grad) {
  if (batch.empty()) throw EmptyDataset();
  Graph g;
  const GraphParams gp = bind_params(g, params, !with_grad);
  const NodeId beta_node = g.constant(Tensor(1, 1, params.cfg.beta));

  std::vector<NodeId> v_nodes, trip_nodes;
  v_nodes.reserve(batch.size());
  trip_nodes.reserve(batch.size());
  for (const TrainSampleRefs& s : batch) {
    const NodeId phi = build_transform(g, gp, params.cfg, *s.rois);
    const NodeId alpha = build_roi_weights(g, gp, params.cfg, phi);
    v_nodes.push_back(build_aggregate(g, phi, alpha));

    const NodeId m_pos = g.constant(*s.attr_embeds);
    const AttentionNodes pos =
        build_cross_attention(g, params.cfg, phi, alpha, m_pos, true, true);
    const NodeId phi_neg = build_transform(g, gp, params.cfg, *s.neg_rois);
    const AttentionNodes neg_roi =
        build_cross_attention(g, params.cfg, phi_neg, kNoNode, m_pos, false, true);
    const AttentionNodes neg_attr = build_cross_attention(
        g, params.cfg, phi, alpha, g.constant(*s.neg_attr_embeds), true, false);

    const NodeId roi_term = g.hinge(
        g.add(g.add(beta_node, g.scale(pos.s_roi, -1.0)), neg_roi.s_roi));
    const NodeId text_term = g.hinge(
        g.add(g.add(beta_node, g.scale(pos.s_text, -1.0)), neg_attr.s_text));
    trip_nodes.push_back(g.add(roi_term, text_term));
  }

  BatchLoss out;
  const NodeId v_batch = g.stack_rows(v_nodes);
  const NodeId p_batch = build_classifier(g, gp, params, v_batch, train_mode,
                                          train_mode ? &out.bn_means : nullptr,
                                          train_mode ? &out.bn_vars : nullptr);
  std::vector<NodeId> bce_nodes;
  bce_nodes.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    bce_nodes.push_back(
        g.bce_with_targets(g.slice_rows(p_batch, i, i + 1), *batch[i].target));

  const NodeId trip_mean = g.mean_all(g.stack_rows(trip_nodes));
  const NodeId bce_mean = g.mean_all(g.stack_rows(bce_nodes));
  const NodeId total = g.add(trip_mean, bce_mean);

  out.trip = g.value(trip_mean)[0];
  out.bce = g.value(bce_mean)[0];
  out.total = g.value(total)[0];
  if (!std::isfinite(out.total))
    throw NonFiniteLoss("batch_loss: total=" + std::to_string(out.total));
  if (with_grad) {
    g.backward(total);
    out.grads.reserve(gp.flat.size());
    for (const NodeId id : gp.flat) {
      if (!g.grad(id).all_finite())
        throw NonFiniteLoss("batch_loss: non-finite gradient");
      out.grads.push_back(g.grad(id));
    }
  }
  return out;
}

LossBundle total_loss(const TrainSampleRefs& sample, const ModelParams& params) {
  const BatchLoss b = batch_loss({sample}, params, true, false);
  return LossBundle{b.trip, b.bce, b.total};
}

}  // namespace xattn
