// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "perm/grad/tensor.hpp"

namespace perm::ad {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  Tensor first_moment;
  Tensor second_moment;
  AdamHyper hyper;

  static AdamState for_param(const Tensor& param, AdamHyper hyper = {});
};

// One bias-corrected Adam descent step. Returns the updated parameter.
Tensor adam_step(const Tensor& param, const Tensor& grad, AdamState& state);

// Adam over an ordered list of parameters sharing hyperparameters.
class Adam {
 public:
  Adam() = default;
  Adam(const std::vector<Tensor>& params, AdamHyper hyper);

  // Descends along `grads`; pass negated gradients to ascend.
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);

  const AdamHyper& hyper() const { return hyper_; }
  void set_lr(double lr);
  const std::vector<AdamState>& states() const { return states_; }

 private:
  AdamHyper hyper_;
  std::vector<AdamState> states_;
};

}  // namespace perm::ad
