// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/grad/grad_check.hpp"

#include <cmath>

#include "perm/error.hpp"
#include "perm/kernels/dense.hpp"

namespace perm::ad {
namespace {

std::vector<Var> load(Tape& tape, const std::vector<Tensor>& point) {
  std::vector<Var> vars;
  vars.reserve(point.size());
  for (const auto& t : point) vars.push_back(tape.parameter(t));
  return vars;
}

double evaluate_with(const TapeFunction& f, const std::vector<Tensor>& point, std::size_t tensor,
                     std::size_t index, double delta) {
  std::vector<Tensor> shifted = point;
  std::vector<double> values(shifted[tensor].values().begin(), shifted[tensor].values().end());
  values[index] += delta;
  shifted[tensor] = Tensor(shifted[tensor].shape(), std::move(values));
  return evaluate(f, shifted);
}

}  // namespace

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

double evaluate(const TapeFunction& f, const std::vector<Tensor>& point) {
  Tape tape;
  const auto vars = load(tape, point);
  return tape.value(f(tape, vars)).item();
}

GradCheckResult grad_check(const TapeFunction& f, const std::vector<Tensor>& point, double h,
                           Execution exec) {
  if (!(h > 0.0 && h <= 1e-3)) throw InvalidArgument("grad_check: h must lie in (0, 1e-3]");

  Tape tape;
  const auto vars = load(tape, point);
  const Var root = f(tape, vars);
  const Gradients grads = tape.backward(root);

  struct Coord {
    std::size_t tensor, index;
  };
  std::vector<Coord> coords;
  for (std::size_t t = 0; t < point.size(); ++t) {
    for (std::size_t i = 0; i < point[t].size(); ++i) coords.push_back({t, i});
  }

  std::vector<double> numeric(coords.size());
  auto body = [&](std::size_t c) {
    const auto [t, i] = coords[c];
    const double up = evaluate_with(f, point, t, i, h);
    const double down = evaluate_with(f, point, t, i, -h);
    numeric[c] = (up - down) / (2.0 * h);
  };
  if (exec == Execution::parallel) {
    kernels::parallel_for(coords.size(), body);
  } else {
    kernels::reference::parallel_for(coords.size(), body);
  }

  GradCheckResult result;
  result.coordinates = coords.size();
  for (std::size_t c = 0; c < coords.size(); ++c) {
    const double a = grads[vars[coords[c].tensor]][coords[c].index];
    const double err = relative_error(a, numeric[c]);
    if (c == 0 || err > result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_tensor = coords[c].tensor;
      result.worst_index = coords[c].index;
      result.analytic = a;
      result.numeric = numeric[c];
    }
  }
  return result;
}

}  // namespace perm::ad
