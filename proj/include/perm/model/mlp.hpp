// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "perm/grad/tape.hpp"
#include "perm/rng.hpp"

namespace perm::model {

// Fully connected tanh network with a linear output layer. Parameters are
// stored as [W0, b0, W1, b1, ...] with W_l of shape [in x out] and b_l of
// shape [1 x out].
struct MlpShape {
  std::size_t in = 1;
  std::vector<std::size_t> hidden;
  std::size_t out = 1;

  std::size_t layers() const { return hidden.size() + 1; }
  std::size_t tensor_count() const { return 2 * layers(); }
  std::vector<ad::Shape> tensor_shapes() const;
};

// Scaled-normal initialization (stddev 1/sqrt(fan_in)) and zero biases.
// `output_scale` multiplies the last layer's weights; 0 gives a zero
// output layer.
std::vector<ad::Tensor> init_mlp(const MlpShape& shape, Rng& rng, double output_scale = 1.0);

// x: [batch x in] -> [batch x out].
ad::Var mlp_forward(ad::Tape& tape, std::span<const ad::Var> params, ad::Var x);

// Tape-free forward pass over a single row, identical arithmetic.
std::vector<double> mlp_eval(std::span<const ad::Tensor> params, std::span<const double> x);

std::vector<std::string> mlp_tensor_names(const std::string& prefix, const MlpShape& shape);

}  // namespace perm::model
