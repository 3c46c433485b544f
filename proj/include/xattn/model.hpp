// SPDX-License-Identifier: Apache-2.0
//
// The grounding network: ROI feature transform, alpha weighting, attribute
// classifier, bidirectional cross-attention, similarity pooling and the
// triplet + BCE losses. Every forward path is built on the Graph engine so
// training, inference and gradient checks share one implementation.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xattn/graph.hpp"
#include "xattn/rng.hpp"
#include "xattn/tensor.hpp"

namespace xattn {

struct Roi {
  std::vector<double> feat;
  double score = 0.0;                    // detector confidence in [0,1]
  std::array<double, 4> box{};           // x1,y1,x2,y2 normalized to [0,1]
};

struct RoiSet {
  std::string image_id;
  std::vector<Roi> rois;

  std::size_t feat_dim() const { return rois.empty() ? 0 : rois[0].feat.size(); }
};

struct ModelConfig {
  std::size_t d_roi = 64;     // detector feature width
  std::size_t d_joint = 256;  // shared image/text width D
  std::size_t d_g = 32;       // geometry channel width
  std::size_t d_s = 32;       // score channel width
  std::size_t n_attrs = 22;
  std::vector<std::size_t> alpha_hidden = {1024, 512};
  std::vector<std::size_t> cls_hidden = {512, 512, 256, 128};
  double lambda_a = 1.0;
  double lambda_b = 1.0;
  double beta = 0.8;
  double leaky_slope = 0.01;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  double ln_eps = 1e-12;
};

struct LinearParam {
  Tensor W;  // in x out
  Tensor b;  // 1 x out
};

struct BatchNormParam {
  Tensor gain, bias;          // 1 x width
  Tensor run_mean, run_var;   // running statistics (not trained by Adam)
};

struct ModelParams {
  ModelConfig cfg;
  Tensor W1, b1;  // d_roi -> d_joint
  Tensor W2, b2;  // d_g + d_s -> d_joint
  Tensor Wg, bg;  // 4 -> d_g
  Tensor Ws, bs;  // 1 -> d_s
  Tensor ln_g_gain, ln_g_bias;
  Tensor ln_s_gain, ln_s_bias;
  std::vector<LinearParam> alpha_mlp;  // d_joint -> hidden... -> 1
  std::vector<LinearParam> cls_mlp;    // d_joint -> hidden... -> n_attrs
  std::vector<BatchNormParam> cls_bn;  // one per classifier hidden layer
  std::uint64_t bn_steps = 0;          // training batches seen by batch norm

  // Every Adam-updated tensor, in a fixed order shared with bind_params.
  std::vector<Tensor*> trainables();
  std::vector<const Tensor*> trainables() const;
};

// Xavier-uniform weights, zero biases, unit gains, seeded.
ModelParams init_params(const ModelConfig& cfg, Rng& rng);

// ---- graph builders -------------------------------------------------------

inline constexpr NodeId kNoNode = static_cast<NodeId>(-1);

// Parameter tensors registered on a graph, aligned with trainables() order.
// as_constants builds a forward-only graph (no adjoint bookkeeping).
struct GraphParams {
  std::vector<NodeId> flat;
  NodeId W1, b1, W2, b2, Wg, bg, Ws, bs;
  NodeId ln_g_gain, ln_g_bias, ln_s_gain, ln_s_bias;
  std::vector<std::array<NodeId, 2>> alpha_mlp;  // {W, b}
  std::vector<std::array<NodeId, 2>> cls_mlp;
  std::vector<std::array<NodeId, 2>> cls_bn;     // {gain, bias}
};
GraphParams bind_params(Graph& g, const ModelParams& params, bool as_constants);

// phi_i = W1 r_i + W2 [LN(Wg g_i) | LN(Ws s_i)]  ->  N x D
NodeId build_transform(Graph& g, const GraphParams& gp, const ModelConfig& cfg,
                       const RoiSet& rois);

// MLP + sigmoid per ROI, then softmax across ROIs  ->  N x 1
NodeId build_roi_weights(Graph& g, const GraphParams& gp, const ModelConfig& cfg,
                         NodeId phi);

// v = sum_i alpha_i phi_i  ->  1 x D
NodeId build_aggregate(Graph& g, NodeId phi, NodeId alpha);

// Classifier MLP with per-layer batch norm; v_batch is B x D. In train mode
// batch statistics are used and reported through bn_means/bn_vars (biased
// variance); infer mode uses the stored running statistics.
NodeId build_classifier(Graph& g, const GraphParams& gp, const ModelParams& params,
                        NodeId v_batch, bool train_mode,
                        std::vector<Tensor>* bn_means, std::vector<Tensor>* bn_vars);

// Cross-attention nodes. alpha may be kNoNode when only the ROI-side
// similarity is needed; want_text/want_roi prune the unused branch.
struct AttentionNodes {
  NodeId s_raw = kNoNode, s_bar = kNoNode;
  NodeId a = kNoNode, b = kNoNode;
  NodeId A = kNoNode, B = kNoNode;
  NodeId r_text = kNoNode, r_roi = kNoNode;
  NodeId s_text = kNoNode, s_roi = kNoNode;
};
AttentionNodes build_cross_attention(Graph& g, const ModelConfig& cfg, NodeId phi,
                                     NodeId alpha, NodeId m_attr, bool want_text,
                                     bool want_roi);

// ---- forward-only wrappers ------------------------------------------------

Tensor transform_roi(const RoiSet& rois, const ModelParams& params);
Tensor roi_weights(const Tensor& phi, const ModelParams& params);   // N x 1
Tensor aggregate(const Tensor& phi, const Tensor& alpha);           // 1 x D
// v_batch is B x D; result B x n_attrs. Throws UninitializedRunningStats in
// infer mode before any training batch.
Tensor classify_attributes(const Tensor& v_batch, const ModelParams& params,
                           bool train_mode);

struct CrossAttentionState {
  Tensor s_raw, s_bar;  // N x M
  Tensor a, b;          // N x M
  Tensor A;             // M x D
  Tensor B;             // N x D
};
CrossAttentionState cross_attention(const Tensor& phi, const Tensor& alpha,
                                    const Tensor& m_attr, const ModelParams& params);

struct SimilarityScores {
  Tensor r_text;  // M x 1
  Tensor r_roi;   // N x 1
  double s_text = 0.0;
  double s_roi = 0.0;
};
SimilarityScores pooled_similarities(const CrossAttentionState& state,
                                     const Tensor& phi, const Tensor& m_attr);

double triplet_loss(double s_roi_pos, double s_roi_neg, double s_text_pos,
                    double s_text_neg, double beta);
// Mean over entries of -[t log p + (1-t) log(1-p)], p clamped to
// [1e-7, 1-1e-7].
double bce_loss(const Tensor& p, const Tensor& targets);

struct LossBundle {
  double trip = 0.0;
  double bce = 0.0;
  double total = 0.0;
};

// ---- batched loss ----------------------------------------------------------

struct TrainSampleRefs {
  const RoiSet* rois = nullptr;
  const RoiSet* neg_rois = nullptr;
  const Tensor* attr_embeds = nullptr;      // M x D
  const Tensor* neg_attr_embeds = nullptr;  // M x D
  const Tensor* target = nullptr;           // 1 x n_attrs
};

struct BatchLoss {
  double total = 0.0, trip = 0.0, bce = 0.0;
  std::vector<Tensor> grads;               // aligned with trainables()
  std::vector<Tensor> bn_means, bn_vars;   // per BN layer (train mode)
};

// One graph over the whole batch: the classifier sees the stacked aggregate
// vectors so batch norm runs on true batch statistics. Throws NonFiniteLoss.
BatchLoss batch_loss(const std::vector<TrainSampleRefs>& batch,
                     const ModelParams& params, bool train_mode, bool with_grad);

// Single-sample convenience (train-mode statistics, batch of one).
LossBundle total_loss(const TrainSampleRefs& sample, const ModelParams& params);

}  // namespace xattn
