// SPDX-License-Identifier: Apache-2.0

#include "xattn/selftest.hpp"

#include <cmath>
#include <memory>
#include <utility>

#include "xattn/graph.hpp"
#include "xattn/model.hpp"
#include "xattn/rng.hpp"

namespace xattn {

namespace {

Tensor rand_t(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Values with |x| in [margin, 1]; keeps kinked ops away from their kinks.
Tensor rand_away(Rng& rng, std::size_t r, std::size_t c, double margin) {
  Tensor t(r, c);
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double m = rng.uniform(margin, 1.0);
    t[i] = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

// Contract a matrix output to a scalar with fixed random weights so every
// entry gets a distinct adjoint: sum((r .* x) C).
struct Reducer {
  Tensor r, c;
  Reducer(Rng& rng, std::size_t rows, std::size_t cols)
      : r(rand_t(rng, rows, 1, 0.5, 1.5)), c(rand_t(rng, cols, 1, 0.5, 1.5)) {}
  NodeId apply(Graph& g, NodeId x) const {
    return g.sum_all(g.matmul(g.scale_rows(x, g.constant(r)), g.constant(c)));
  }
};

struct Check {
  std::string name;
  std::vector<Tensor> point;
  GradFn fn;
};

// Builds the standard closure: graph inputs from the point, op via `body`,
// random-weighted reduction, backward, grads out.
template <typename Body>
Check make_check(std::string name, Rng& rng, std::vector<Tensor> point, Body body) {
  // The reducer shape depends on the op output; probe it once.
  Graph probe;
  std::vector<NodeId> ids;
  for (const auto& t : point) ids.push_back(probe.input(t));
  const NodeId probe_out = body(probe, ids);
  Reducer red(rng, probe.value(probe_out).rows(), probe.value(probe_out).cols());

  GradFn fn = [point, body, red](const std::vector<Tensor>& xs,
                                 std::vector<Tensor>* grads) -> double {
    Graph g;
    std::vector<NodeId> in;
    for (const auto& t : xs) in.push_back(g.input(t));
    const NodeId out = body(g, in);
    const NodeId loss = red.apply(g, out);
    if (grads) {
      g.backward(loss);
      grads->clear();
      for (NodeId id : in) grads->push_back(g.grad(id));
    }
    return g.value(loss)[0];
  };
  return Check{std::move(name), std::move(point), std::move(fn)};
}

std::vector<Check> primitive_checks(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Check> checks;
  auto add = [&](Check c) { checks.push_back(std::move(c)); };

  add(make_check("matmul", rng, {rand_t(rng, 3, 4), rand_t(rng, 4, 2)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.matmul(in[0], in[1]);
                 }));
  add(make_check("matmul_ta", rng, {rand_t(rng, 4, 3), rand_t(rng, 4, 2)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.matmul(in[0], in[1], true, false);
                 }));
  add(make_check("matmul_tb", rng, {rand_t(rng, 3, 4), rand_t(rng, 2, 4)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.matmul(in[0], in[1], false, true);
                 }));
  add(make_check("matmul_ta_tb", rng, {rand_t(rng, 4, 3), rand_t(rng, 2, 4)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.matmul(in[0], in[1], true, true);
                 }));
  add(make_check("add", rng, {rand_t(rng, 3, 4), rand_t(rng, 3, 4)},
                 [](Graph& g, const std::vector<NodeId>& in) { return g.add(in[0], in[1]); }));
  add(make_check("add_rowvec", rng, {rand_t(rng, 3, 4), rand_t(rng, 1, 4)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.add_rowvec(in[0], in[1]);
                 }));
  add(make_check("scale", rng, {rand_t(rng, 3, 4)},
                 [](Graph& g, const std::vector<NodeId>& in) { return g.scale(in[0], 1.7); }));
  add(make_check("scale_rows", rng, {rand_t(rng, 3, 4), rand_t(rng, 3, 1)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.scale_rows(in[0], in[1]);
                 }));
  add(make_check("concat_cols", rng, {rand_t(rng, 3, 2), rand_t(rng, 3, 3)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.concat_cols(in[0], in[1]);
                 }));
  add(make_check("concat_rows", rng, {rand_t(rng, 2, 4), rand_t(rng, 3, 4)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.concat_rows(in[0], in[1]);
                 }));
  add(make_check("stack_rows", rng, {rand_t(rng, 1, 4), rand_t(rng, 1, 4), rand_t(rng, 1, 4)},
                 [](Graph& g, const std::vector<NodeId>& in) { return g.stack_rows(in); }));
  add(make_check("slice_rows", rng, {rand_t(rng, 5, 4)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.slice_rows(in[0], 1, 4);
                 }));
  add(make_check("slice_cols", rng, {rand_t(rng, 3, 6)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.slice_cols(in[0], 2, 5);
                 }));
  add(make_check("layer_norm", rng,
                 {rand_t(rng, 3, 6), rand_t(rng, 1, 6, 0.5, 1.5), rand_t(rng, 1, 6)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.layer_norm(in[0], in[1], in[2]);
                 }));
  add(make_check("leaky_relu", rng, {rand_away(rng, 3, 4, 0.05)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.leaky_relu(in[0], 0.01);
                 }));
  add(make_check("sigmoid", rng, {rand_t(rng, 3, 4, -3.0, 3.0)},
                 [](Graph& g, const std::vector<NodeId>& in) { return g.sigmoid(in[0]); }));
  add(make_check("softmax_rows", rng, {rand_t(rng, 3, 5, -2.0, 2.0)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.softmax(in[0], Axis::kRows, 0.7);
                 }));
  add(make_check("softmax_cols", rng, {rand_t(rng, 5, 3, -2.0, 2.0)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.softmax(in[0], Axis::kCols, 1.3);
                 }));
  add(make_check("l2_normalize_cols", rng, {rand_away(rng, 4, 3, 0.3)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.l2_normalize_cols(in[0]);
                 }));
  add(make_check("cosine_rows", rng, {rand_away(rng, 3, 5, 0.2), rand_away(rng, 3, 5, 0.2)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.cosine_rows(in[0], in[1]);
                 }));
  add(make_check("cosine_pairs", rng, {rand_away(rng, 3, 5, 0.2), rand_away(rng, 2, 5, 0.2)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.cosine_pairs(in[0], in[1]);
                 }));
  add(make_check("hinge", rng, {rand_away(rng, 3, 4, 0.05)},
                 [](Graph& g, const std::vector<NodeId>& in) { return g.hinge(in[0]); }));
  add(make_check("mean_all", rng, {rand_t(rng, 3, 4)},
                 [](Graph& g, const std::vector<NodeId>& in) { return g.mean_all(in[0]); }));
  add(make_check("sum_all", rng, {rand_t(rng, 3, 4)},
                 [](Graph& g, const std::vector<NodeId>& in) { return g.sum_all(in[0]); }));
  {
    Tensor targets(2, 5);
    for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    add(make_check("bce_with_targets", rng, {rand_t(rng, 2, 5, 0.1, 0.9)},
                   [targets](Graph& g, const std::vector<NodeId>& in) {
                     return g.bce_with_targets(in[0], targets);
                   }));
  }
  add(make_check("batch_norm_train", rng,
                 {rand_t(rng, 4, 3), rand_t(rng, 1, 3, 0.5, 1.5), rand_t(rng, 1, 3)},
                 [](Graph& g, const std::vector<NodeId>& in) {
                   return g.batch_norm_train(in[0], in[1], in[2], 1e-5, nullptr, nullptr);
                 }));
  {
    Rng stat_rng = rng.fork(77);
    const Tensor mean = rand_t(stat_rng, 1, 4, -0.5, 0.5);
    const Tensor var = rand_t(stat_rng, 1, 4, 0.5, 1.5);
    add(make_check("batch_norm_infer", rng,
                   {rand_t(rng, 3, 4), rand_t(rng, 1, 4, 0.5, 1.5), rand_t(rng, 1, 4)},
                   [mean, var](Graph& g, const std::vector<NodeId>& in) {
                     return g.batch_norm_infer(in[0], in[1], in[2], mean, var, 1e-5);
                   }));
  }
  return checks;
}

// A desk-sized model + sample set for the end-to-end loss check.
struct LossFixture {
  ModelParams params;
  std::vector<RoiSet> rois, neg_rois;
  std::vector<Tensor> attrs, neg_attrs;
  std::vector<Tensor> targets;
  std::vector<TrainSampleRefs> refs;
};

LossFixture make_loss_fixture(std::uint64_t seed, std::size_t batch) {
  ModelConfig cfg;
  cfg.d_roi = 6;
  cfg.d_joint = 8;
  cfg.d_g = 3;
  cfg.d_s = 3;
  cfg.alpha_hidden = {8};
  cfg.cls_hidden = {6, 5};

  Rng rng(seed);
  LossFixture fx;
  Rng init_rng = rng.fork(1);
  fx.params = init_params(cfg, init_rng);

  for (std::size_t s = 0; s < batch; ++s) {
    RoiSet set;
    set.image_id = "fd_" + std::to_string(s);
    for (std::size_t i = 0; i < 3; ++i) {
      Roi roi;
      roi.feat.resize(cfg.d_roi);
      for (double& x : roi.feat) x = rng.uniform(-1.0, 1.0);
      roi.score = 0.1 + 0.3 * double(i) + 0.05 * rng.uniform();
      const double cx = rng.uniform(0.3, 0.7), cy = rng.uniform(0.3, 0.7);
      roi.box = {cx - 0.1, cy - 0.1, cx + 0.1, cy + 0.1};
      set.rois.push_back(std::move(roi));
    }
    RoiSet neg;
    neg.image_id = set.image_id;
    neg.rois = {set.rois[0]};  // lowest score by construction
    fx.rois.push_back(std::move(set));
    fx.neg_rois.push_back(std::move(neg));

    fx.attrs.push_back(rand_t(rng, 2, cfg.d_joint, -0.8, 0.8));
    fx.neg_attrs.push_back(rand_t(rng, 2, cfg.d_joint, -0.8, 0.8));
    Tensor target(1, cfg.n_attrs);
    target[2 * s] = 1.0;
    target[2 * s + 1] = 1.0;
    fx.targets.push_back(std::move(target));
  }
  return fx;
}

void build_refs(LossFixture& fx) {
  fx.refs.clear();
  for (std::size_t s = 0; s < fx.rois.size(); ++s) {
    TrainSampleRefs r;
    r.rois = &fx.rois[s];
    r.neg_rois = &fx.neg_rois[s];
    r.attr_embeds = &fx.attrs[s];
    r.neg_attr_embeds = &fx.neg_attrs[s];
    r.target = &fx.targets[s];
    fx.refs.push_back(r);
  }
}

}  // namespace

std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed) {
  std::vector<GradCheckResult> out;
  for (auto& c : primitive_checks(seed))
    out.push_back({c.name, gradient_check(c.fn, c.point)});
  return out;
}

std::vector<GradCheckResult> run_loss_gradient_checks(std::uint64_t seed) {
  std::vector<GradCheckResult> out;
  for (std::size_t batch : {std::size_t{1}, std::size_t{2}}) {
    // The fixture must stay fixed across finite-difference evaluations; only
    // the parameter point varies.
    auto fx = std::make_shared<LossFixture>(make_loss_fixture(seed, batch));
    build_refs(*fx);
    std::vector<Tensor> point;
    for (const Tensor* t : std::as_const(fx->params).trainables()) point.push_back(*t);

    GradFn fn = [fx](const std::vector<Tensor>& xs, std::vector<Tensor>* grads) -> double {
      ModelParams p = fx->params;
      std::vector<Tensor*> slots = p.trainables();
      for (std::size_t i = 0; i < slots.size(); ++i) *slots[i] = xs[i];
      BatchLoss bl = batch_loss(fx->refs, p, true, grads != nullptr);
      if (grads) *grads = bl.grads;
      return bl.total;
    };
    out.push_back({"total_loss_batch" + std::to_string(batch), gradient_check(fn, point)});
  }
  return out;
}

}  // namespace xattn
