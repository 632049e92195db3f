// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include "perm/env/environments.hpp"
#include "perm/store/checkpoint.hpp"
#include "perm/students/policy_gradient.hpp"
#include "perm/students/zpd.hpp"

namespace perm::students {

// A student bound to its environment, as seen by the curriculum loop.
class Trainee {
 public:
  virtual ~Trainee() = default;

  virtual std::string id() const = 0;
  virtual const env::ParamSpace& space() const = 0;
  // One training episode at raw parameters `lambda_raw`.
  virtual env::EpisodeResult play(std::span<const double> lambda_raw, std::uint64_t seed) = 0;
  // Called at the end of every k-episode block.
  virtual void end_block() = 0;
  // Frozen-parameter episode; never mutates the student.
  virtual env::EpisodeResult evaluate(std::span<const double> lambda_raw,
                                      std::uint64_t seed) const = 0;
  // Hex SHA-256 of the learnable state.
  virtual std::string digest() const = 0;
  virtual store::Checkpoint to_checkpoint() const = 0;
  // Ground-truth skill when the student has one.
  virtual std::optional<double> skill() const { return std::nullopt; }
};

inline constexpr const char* kZpdCheckpointKind = "zpd-student";

class ZpdTrainee final : public Trainee {
 public:
  explicit ZpdTrainee(ZpdParams params = {}, env::SyntheticEnv env = env::SyntheticEnv{},
                      std::string id = "zpd");

  std::string id() const override { return id_; }
  const env::ParamSpace& space() const override { return env_.space(); }
  env::EpisodeResult play(std::span<const double> lambda_raw, std::uint64_t seed) override;
  void end_block() override {}
  env::EpisodeResult evaluate(std::span<const double> lambda_raw,
                              std::uint64_t seed) const override;
  std::string digest() const override;
  store::Checkpoint to_checkpoint() const override;
  std::optional<double> skill() const override { return student_.skill(); }

  const ScriptedZpdStudent& student() const { return student_; }
  const env::SyntheticEnv& environment() const { return env_; }
  static ZpdParams params_from_checkpoint(const store::Checkpoint& c);

 private:
  ScriptedZpdStudent student_;
  env::SyntheticEnv env_;
  std::string id_;
};

class LanderTrainee final : public Trainee {
 public:
  explicit LanderTrainee(PgHyper hyper = {}, env::ParamSpace space = env::Lander::default_space(),
                         std::string id = "pg");
  LanderTrainee(PolicyGradientStudent student, env::ParamSpace space, std::string id);

  std::string id() const override { return id_; }
  const env::ParamSpace& space() const override { return lander_.space(); }
  env::EpisodeResult play(std::span<const double> lambda_raw, std::uint64_t seed) override;
  // Runs a policy update when the buffer holds a complete episode.
  void end_block() override;
  // Greedy episode.
  env::EpisodeResult evaluate(std::span<const double> lambda_raw,
                              std::uint64_t seed) const override;
  std::string digest() const override { return student_.digest(); }
  store::Checkpoint to_checkpoint() const override { return student_.to_checkpoint(); }

  const PolicyGradientStudent& student() const { return student_; }
  const PgLossSummary& last_update() const { return last_; }

 private:
  PolicyGradientStudent student_;
  env::Lander lander_;
  std::string id_;
  PgLossSummary last_;
};

}  // namespace perm::students
