// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/model/mlp.hpp"

#include <cmath>

#include "perm/error.hpp"

namespace perm::model {

std::vector<ad::Shape> MlpShape::tensor_shapes() const {
  std::vector<ad::Shape> shapes;
  std::size_t fan_in = in;
  for (std::size_t l = 0; l < layers(); ++l) {
    const std::size_t fan_out = l < hidden.size() ? hidden[l] : out;
    shapes.push_back({fan_in, fan_out});
    shapes.push_back({1, fan_out});
    fan_in = fan_out;
  }
  return shapes;
}

std::vector<ad::Tensor> init_mlp(const MlpShape& shape, Rng& rng, double output_scale) {
  std::vector<ad::Tensor> params;
  const auto shapes = shape.tensor_shapes();
  for (std::size_t t = 0; t < shapes.size(); t += 2) {
    const auto& ws = shapes[t];
    const bool last = t + 2 == shapes.size();
    const double scale = (last ? output_scale : 1.0) / std::sqrt(static_cast<double>(ws[0]));
    std::vector<double> w(ws[0] * ws[1]);
    for (auto& v : w) v = scale == 0.0 ? 0.0 : rng.normal(0.0, scale);
    params.emplace_back(ws, std::move(w));
    params.push_back(ad::Tensor::zeros(shapes[t + 1]));
  }
  return params;
}

ad::Var mlp_forward(ad::Tape& tape, std::span<const ad::Var> params, ad::Var x) {
  if (params.empty() || params.size() % 2 != 0) {
    throw InvalidArgument("mlp_forward: expected [W, b] pairs");
  }
  ad::Var h = x;
  for (std::size_t t = 0; t < params.size(); t += 2) {
    h = tape.broadcast_add_row(tape.matmul(h, params[t]), params[t + 1]);
    if (t + 2 < params.size()) h = tape.tanh(h);
  }
  return h;
}

std::vector<double> mlp_eval(std::span<const ad::Tensor> params, std::span<const double> x) {
  std::vector<double> h(x.begin(), x.end());
  for (std::size_t t = 0; t < params.size(); t += 2) {
    const auto& w = params[t];
    const auto& b = params[t + 1];
    if (w.rows() != h.size()) throw ShapeError("mlp_eval: input width mismatch");
    std::vector<double> next(w.cols());
    for (std::size_t j = 0; j < w.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < h.size(); ++i) acc += h[i] * w.at(i, j);
      next[j] = acc + b[j];
      if (t + 2 < params.size()) next[j] = std::tanh(next[j]);
    }
    h = std::move(next);
  }
  return h;
}

std::vector<std::string> mlp_tensor_names(const std::string& prefix, const MlpShape& shape) {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < shape.layers(); ++l) {
    names.push_back(prefix + ".W" + std::to_string(l));
    names.push_back(prefix + ".b" + std::to_string(l));
  }
  return names;
}

}  // namespace perm::model
