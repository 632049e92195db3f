// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/students/zpd.hpp"

#include <cmath>

#include "perm/error.hpp"

namespace perm::students {

void ZpdParams::validate() const {
  if (!std::isfinite(skill)) throw InvalidArgument("zpd: skill must be finite");
  if (!(learn_rate > 0.0) || !std::isfinite(learn_rate)) {
    throw InvalidArgument("zpd: learn_rate must be > 0");
  }
  if (!(zone_width > 0.0) || !std::isfinite(zone_width)) {
    throw InvalidArgument("zpd: zone_width must be > 0");
  }
}

ScriptedZpdStudent::ScriptedZpdStudent(ZpdParams params) : params_(params) { params_.validate(); }

double ScriptedZpdStudent::gain(double difficulty) const {
  const double gap = difficulty - params_.skill;
  return params_.learn_rate *
         std::exp(-(gap * gap) / (2.0 * params_.zone_width * params_.zone_width));
}

env::EpisodeResult ScriptedZpdStudent::respond(const env::SyntheticEnv& env,
                                               std::span<const double> lambda_raw,
                                               std::uint64_t seed) {
  const auto result = env.play(lambda_raw, params_.skill, seed);
  params_.skill += gain(env.true_difficulty(lambda_raw));
  return result;
}

env::EpisodeResult ScriptedZpdStudent::probe(const env::SyntheticEnv& env,
                                             std::span<const double> lambda_raw,
                                             std::uint64_t seed) const {
  return env.play(lambda_raw, params_.skill, seed);
}

}  // namespace perm::students
