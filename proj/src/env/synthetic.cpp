// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "perm/env/environments.hpp"
#include "perm/error.hpp"

namespace perm::env {

std::string_view to_string(TerminalKind kind) {
  switch (kind) {
    case TerminalKind::landed: return "landed";
    case TerminalKind::crashed: return "crashed";
    case TerminalKind::timeout: return "timeout";
    case TerminalKind::synthetic: return "synthetic";
  }
  return "synthetic";
}

TerminalKind terminal_kind_from_string(std::string_view s) {
  if (s == "landed") return TerminalKind::landed;
  if (s == "crashed") return TerminalKind::crashed;
  if (s == "timeout") return TerminalKind::timeout;
  if (s == "synthetic") return TerminalKind::synthetic;
  throw InvalidArgument("unknown terminal kind '" + std::string(s) + "'");
}

SyntheticEnv::SyntheticEnv(ParamSpace space, double noise_std, double scale, double offset)
    : space_(std::move(space)), noise_std_(noise_std), scale_(scale), offset_(offset) {
  if (!(noise_std_ >= 0.0)) throw InvalidArgument("SyntheticEnv: noise_std must be >= 0");
}

ParamSpace SyntheticEnv::default_space() { return ParamSpace({"level"}, {0.0}, {10.0}); }

double SyntheticEnv::true_difficulty(std::span<const double> lambda_raw) const {
  const auto unit = space_.normalize(lambda_raw).value;
  double s = 0.0;
  for (double u : unit) s += u;
  return scale_ * s / static_cast<double>(unit.size()) + offset_;
}

double SyntheticEnv::reward(std::span<const double> lambda_raw, double skill, double noise) const {
  return std::clamp(skill - true_difficulty(lambda_raw) + noise, -kRewardClamp, kRewardClamp);
}

EpisodeResult SyntheticEnv::play(std::span<const double> lambda_raw, double skill,
                                 std::uint64_t noise_seed) const {
  Rng rng(noise_seed);
  const double eps = noise_std_ * rng.standard_normal();
  return EpisodeResult{reward(lambda_raw, skill, eps), 1, TerminalKind::synthetic};
}

}  // namespace perm::env
