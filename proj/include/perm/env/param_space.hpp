// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "perm/rng.hpp"

namespace perm::env {

struct Normalized {
  std::vector<double> value;
  bool clamped = false;
};

// Named box of environment parameters in raw units. Immutable after
// construction; safe to share across threads.
class ParamSpace {
 public:
  ParamSpace() = default;
  ParamSpace(std::vector<std::string> names, std::vector<double> lower, std::vector<double> upper);

  std::size_t dim() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }

  // Affine map to [0,1]^P; out-of-bounds input is clamped and flagged.
  Normalized normalize(std::span<const double> raw) const;
  std::vector<double> denormalize(std::span<const double> unit) const;
  // Clamps into bounds; sets *clamped when any component moved.
  std::vector<double> clamp(std::span<const double> raw, bool* clamped = nullptr) const;
  bool contains(std::span<const double> raw) const;

  std::vector<double> sample_uniform(Rng& rng) const;

  bool operator==(const ParamSpace&) const = default;

  // Throws ShapeError when n differs from dim().
  void require_dim(std::size_t n, const char* op) const;

 private:
  std::vector<std::string> names_;
  std::vector<double> lower_;
  std::vector<double> upper_;
};

}  // namespace perm::env
