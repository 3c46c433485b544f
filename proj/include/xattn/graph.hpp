// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode gradient engine over rank<=2 dense tensors. A Graph owns the
// nodes of one forward pass; node creation order is a topological order, and
// backward() walks it once in reverse. Graphs are cheap and rebuilt per
// evaluation; they are confined to one thread for their lifetime.

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "xattn/tensor.hpp"

namespace xattn {

using NodeId = std::size_t;

// Softmax orientation: kRows normalizes every row (each row sums to 1),
// kCols normalizes every column.
enum class Axis { kRows, kCols };

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves. `input` participates in backward; `constant` does not.
  NodeId input(Tensor value);
  NodeId constant(Tensor value);

  // C = op(A) * op(B); op is transpose when the flag is set.
  NodeId matmul(NodeId a, NodeId b, bool ta = false, bool tb = false);
  NodeId add(NodeId a, NodeId b);
  // x (m x n) + row vector b (1 x n) broadcast over rows.
  NodeId add_rowvec(NodeId x, NodeId b);
  NodeId scale(NodeId x, double c);
  // Row i of x scaled by c[i]; c is m x 1.
  NodeId scale_rows(NodeId x, NodeId c);
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId concat_rows(NodeId a, NodeId b);
  NodeId stack_rows(const std::vector<NodeId>& xs);
  NodeId slice_rows(NodeId x, std::size_t r0, std::size_t r1);
  NodeId slice_cols(NodeId x, std::size_t c0, std::size_t c1);
  // Row-wise layer normalization with learnable gain/bias (1 x n each).
  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-12);
  NodeId leaky_relu(NodeId x, double slope);
  NodeId sigmoid(NodeId x);
  NodeId softmax(NodeId x, Axis axis, double temperature = 1.0);
  // Per-column L2 normalization, denominator clamped below at eps.
  NodeId l2_normalize_cols(NodeId x, double eps = 1e-12);
  // Cosine of corresponding rows of x and y (both K x D) -> K x 1.
  NodeId cosine_rows(NodeId x, NodeId y);
  // All-pairs cosine: x (N x D), y (M x D) -> N x M.
  NodeId cosine_pairs(NodeId x, NodeId y);
  NodeId hinge(NodeId x);
  NodeId mean_all(NodeId x);
  NodeId sum_all(NodeId x);
  // Mean over all entries of -[t log p + (1-t) log(1-p)], p clamped to
  // [eps, 1-eps] with eps = 1e-7. targets is a constant.
  NodeId bce_with_targets(NodeId p, const Tensor& targets);
  // Batch normalization over rows (per-column statistics).
  // Train flavor uses batch statistics and reports them (biased variance);
  // infer flavor normalizes with the provided running statistics.
  NodeId batch_norm_train(NodeId x, NodeId gain, NodeId bias, double eps,
                          Tensor* batch_mean_out, Tensor* batch_var_out);
  NodeId batch_norm_infer(NodeId x, NodeId gain, NodeId bias,
                          const Tensor& running_mean, const Tensor& running_var,
                          double eps);

  const Tensor& value(NodeId id) const { return nodes_[id].val; }
  const Tensor& grad(NodeId id) const { return nodes_[id].grad; }
  std::size_t num_nodes() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 and accumulates adjoints into every node that
  // root depends on. root must be 1x1.
  void backward(NodeId root);

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    std::vector<NodeId> parents;
    std::function<void(Graph&, NodeId)> back;
  };

  NodeId emplace(Tensor val, std::vector<NodeId> parents,
                 std::function<void(Graph&, NodeId)> back);
  bool any_requires_grad(const std::vector<NodeId>& ids) const;

  Tensor& grad_ref(NodeId id) { return nodes_[id].grad; }

  std::vector<Node> nodes_;
};

// Central finite-difference check of reverse-mode gradients.
//
// `f` evaluates the scalar function at the given parameter assignment; when
// `grads` is non-null it must also fill reverse-mode gradients (same shapes
// as the parameters). Returns max over coordinates of
// |g_ad - g_fd| / max(1, |g_fd|). Throws NonFinite when any evaluation or
// gradient is NaN/Inf.
using GradFn =
    std::function<double(const std::vector<Tensor>&, std::vector<Tensor>*)>;
double gradient_check(const GradFn& f, std::vector<Tensor> point, double h = 1e-5);

}  // namespace xattn
