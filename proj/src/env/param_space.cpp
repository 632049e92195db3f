// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/env/param_space.hpp"

#include <algorithm>
#include <cmath>

#include "perm/error.hpp"

namespace perm::env {

ParamSpace::ParamSpace(std::vector<std::string> names, std::vector<double> lower,
                       std::vector<double> upper)
    : names_(std::move(names)), lower_(std::move(lower)), upper_(std::move(upper)) {
  if (names_.empty()) throw InvalidArgument("ParamSpace: needs at least one parameter");
  if (lower_.size() != names_.size() || upper_.size() != names_.size()) {
    throw ShapeError("ParamSpace: names, lower and upper must have equal length");
  }
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!std::isfinite(lower_[i]) || !std::isfinite(upper_[i]) || !(lower_[i] < upper_[i])) {
      throw InvalidArgument("ParamSpace: parameter '" + names_[i] + "' needs finite lower < upper");
    }
  }
}

void ParamSpace::require_dim(std::size_t n, const char* op) const {
  if (n != dim()) {
    throw ShapeError(std::string("ParamSpace::") + op + ": expected " + std::to_string(dim()) +
                     " values, got " + std::to_string(n));
  }
}

Normalized ParamSpace::normalize(std::span<const double> raw) const {
  require_dim(raw.size(), "normalize");
  Normalized out;
  const auto inside = clamp(raw, &out.clamped);
  out.value.resize(dim());
  for (std::size_t i = 0; i < dim(); ++i) {
    out.value[i] = (inside[i] - lower_[i]) / (upper_[i] - lower_[i]);
  }
  return out;
}

std::vector<double> ParamSpace::denormalize(std::span<const double> unit) const {
  require_dim(unit.size(), "denormalize");
  std::vector<double> out(dim());
  for (std::size_t i = 0; i < dim(); ++i) {
    out[i] = lower_[i] + unit[i] * (upper_[i] - lower_[i]);
  }
  return out;
}

std::vector<double> ParamSpace::clamp(std::span<const double> raw, bool* clamped) const {
  require_dim(raw.size(), "clamp");
  std::vector<double> out(raw.begin(), raw.end());
  bool moved = false;
  for (std::size_t i = 0; i < dim(); ++i) {
    if (std::isnan(out[i])) throw NonFiniteError("ParamSpace::clamp: NaN parameter");
    const double c = std::clamp(out[i], lower_[i], upper_[i]);
    moved = moved || c != out[i];
    out[i] = c;
  }
  if (clamped) *clamped = moved;
  return out;
}

bool ParamSpace::contains(std::span<const double> raw) const {
  if (raw.size() != dim()) return false;
  for (std::size_t i = 0; i < dim(); ++i) {
    if (!(raw[i] >= lower_[i] && raw[i] <= upper_[i])) return false;
  }
  return true;
}

std::vector<double> ParamSpace::sample_uniform(Rng& rng) const {
  std::vector<double> out(dim());
  for (std::size_t i = 0; i < dim(); ++i) out[i] = rng.uniform(lower_[i], upper_[i]);
  return out;
}

}  // namespace perm::env
