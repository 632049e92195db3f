// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/grad/adam.hpp"

#include <cmath>

#include "perm/error.hpp"

namespace perm::ad {

AdamState AdamState::for_param(const Tensor& param, AdamHyper hyper) {
  return AdamState{0, Tensor::zeros(param.shape()), Tensor::zeros(param.shape()), hyper};
}

Tensor adam_step(const Tensor& param, const Tensor& grad, AdamState& state) {
  if (param.shape() != grad.shape()) {
    throw ShapeError("adam_step: shape mismatch " + to_string(param.shape()) + " vs " +
                     to_string(grad.shape()));
  }
  if (state.first_moment.shape() != param.shape()) {
    throw ShapeError("adam_step: state shaped " + to_string(state.first_moment.shape()) +
                     " for parameter " + to_string(param.shape()));
  }
  const AdamHyper& h = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);

  const auto p = param.values();
  const auto g = grad.values();
  const auto m0 = state.first_moment.values();
  const auto v0 = state.second_moment.values();
  std::vector<double> m(p.size()), v(p.size()), out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = h.beta1 * m0[i] + (1.0 - h.beta1) * g[i];
    v[i] = h.beta2 * v0[i] + (1.0 - h.beta2) * g[i] * g[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    out[i] = p[i] - h.lr * mhat / (std::sqrt(vhat) + h.epsilon);
  }
  state.first_moment = Tensor(param.shape(), std::move(m));
  state.second_moment = Tensor(param.shape(), std::move(v));
  return Tensor(param.shape(), std::move(out));
}

Adam::Adam(const std::vector<Tensor>& params, AdamHyper hyper) : hyper_(hyper) {
  states_.reserve(params.size());
  for (const auto& p : params) states_.push_back(AdamState::for_param(p, hyper));
}

void Adam::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (params.size() != states_.size() || grads.size() != states_.size()) {
    throw InvalidArgument("Adam::step: expected " + std::to_string(states_.size()) +
                          " parameters and gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] = adam_step(params[i], grads[i], states_[i]);
  }
}

void Adam::set_lr(double lr) {
  hyper_.lr = lr;
  for (auto& s : states_) s.hyper.lr = lr;
}

}  // namespace perm::ad
