// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "perm/grad/tape.hpp"

namespace perm::ad {

// Scalar function of a list of tensors, written against a tape. Must be
// pure: the finite-difference pass calls it concurrently on separate tapes.
using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;

enum class Execution { serial, parallel };

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// |a - n| / max(1e-8, |a| + |n|)
double relative_error(double analytic, double numeric);

// Compares the tape gradient of `f` at `point` against central finite
// differences with step `h` over every coordinate of every tensor.
GradCheckResult grad_check(const TapeFunction& f, const std::vector<Tensor>& point, double h,
                           Execution exec = Execution::parallel);

// Value of f at `point` without differentiation.
double evaluate(const TapeFunction& f, const std::vector<Tensor>& point);

}  // namespace perm::ad
