// SPDX-License-Identifier: Apache-2.0

#include "xattn/adam.hpp"

#include <cmath>

#include "xattn/errors.hpp"

namespace xattn {

Adam::Adam(AdamConfig cfg, const std::vector<Tensor*>& params) : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor* p : params) {
    m_.emplace_back(p->rows(), p->cols());
    v_.emplace_back(p->rows(), p->cols());
  }
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw ShapeMismatch("adam_step: parameter count changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    if (!p.same_shape(m_[k]) || !g.same_shape(m_[k]))
      throw ShapeMismatch("adam_step: tensor " + std::to_string(k) + " " +
                          p.shape_str() + " vs state " + m_[k].shape_str());
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    const double decay = cfg_.lr * cfg_.weight_decay;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= decay * p[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace xattn
