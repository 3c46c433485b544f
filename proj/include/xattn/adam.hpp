// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "xattn/tensor.hpp"

namespace xattn {

struct AdamConfig {
  double lr = 1e-4;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with decoupled weight decay: parameters are first shrunk by
// lr * weight_decay, then the bias-corrected moment update is applied.
class Adam {
 public:
  Adam(AdamConfig cfg, const std::vector<Tensor*>& params);

  // params must match the layout given at construction; grads align with it.
  void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);

  std::uint64_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t t_ = 0;
};

}  // namespace xattn
