// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>

#include "perm/env/environments.hpp"

namespace perm::students {

struct ZpdParams {
  double skill = -2.0;
  double learn_rate = 0.05;  // eta
  double zone_width = 0.5;   // w

  void validate() const;
};

// Scripted learner with a known skill. Each episode gains
// eta * exp(-(d* - skill)^2 / (2 w^2)), so learning peaks at matched
// difficulty and vanishes far from it.
class ScriptedZpdStudent {
 public:
  explicit ScriptedZpdStudent(ZpdParams params = {});

  double skill() const { return params_.skill; }
  const ZpdParams& params() const { return params_; }

  // Skill gain for an episode at true difficulty `d`.
  double gain(double difficulty) const;

  // Plays one episode (reward from the pre-episode skill), then learns.
  env::EpisodeResult respond(const env::SyntheticEnv& env, std::span<const double> lambda_raw,
                             std::uint64_t seed);
  // Plays without learning.
  env::EpisodeResult probe(const env::SyntheticEnv& env, std::span<const double> lambda_raw,
                           std::uint64_t seed) const;

 private:
  ZpdParams params_;
};

}  // namespace perm::students
