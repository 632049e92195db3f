// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "perm/env/param_space.hpp"

namespace perm::env {

enum class TerminalKind { landed, crashed, timeout, synthetic };

std::string_view to_string(TerminalKind kind);
TerminalKind terminal_kind_from_string(std::string_view s);

struct EpisodeResult {
  double raw_reward = 0.0;
  std::int64_t episode_length = 1;
  TerminalKind terminal = TerminalKind::synthetic;
};

// Environment whose difficulty is a known function of its parameters:
//   d*(lambda) = scale * mean(normalized lambda) + offset
// and whose reward for a student of skill s is
//   clamp(s - d*(lambda) + eps, -3, 3),  eps ~ N(0, noise_std).
class SyntheticEnv {
 public:
  static constexpr double kRewardClamp = 3.0;

  explicit SyntheticEnv(ParamSpace space = default_space(), double noise_std = 0.1,
                        double scale = 4.0, double offset = -2.0);

  static ParamSpace default_space();

  const ParamSpace& space() const { return space_; }
  double noise_std() const { return noise_std_; }

  // Ground-truth difficulty; out-of-bounds parameters are clamped first.
  double true_difficulty(std::span<const double> lambda_raw) const;

  // Reward given an explicit noise draw.
  double reward(std::span<const double> lambda_raw, double skill, double noise) const;

  EpisodeResult play(std::span<const double> lambda_raw, double skill,
                     std::uint64_t noise_seed) const;

 private:
  ParamSpace space_;
  double noise_std_;
  double scale_;
  double offset_;
};

enum class LanderAction : int { noop = 0, thrust_up = 1, thrust_left = 2, thrust_right = 3 };

inline constexpr std::size_t kLanderObsDim = 7;
inline constexpr std::size_t kLanderActions = 4;

using LanderObservation = std::array<double, kLanderObsDim>;

struct LanderStep {
  LanderObservation observation{};
  double reward = 0.0;
  bool done = false;
};

// Two-parameter (gravity, wind) landing task integrated with semi-implicit
// Euler at dt = 0.1. Deterministic given (lambda, seed, actions).
class Lander {
 public:
  static constexpr double kDt = 0.1;
  static constexpr double kMainThrust = 12.0;
  static constexpr double kSideThrust = 8.0;
  static constexpr double kStartAltitude = 10.0;
  static constexpr double kStartFuel = 100.0;
  static constexpr double kSafeSpeed = 1.5;
  static constexpr double kPadHalfWidth = 2.0;
  static constexpr double kFuelCost = 0.1;
  static constexpr double kTerminalReward = 100.0;
  static constexpr std::int64_t kMaxSteps = 300;

  static ParamSpace default_space();

  explicit Lander(ParamSpace space = default_space());

  const ParamSpace& space() const { return space_; }

  // Out-of-bounds parameters are clamped; clamped_on_reset() reports it.
  LanderObservation reset(std::span<const double> lambda_raw, std::uint64_t seed);
  LanderStep step(LanderAction action);

  LanderObservation observation() const;
  bool done() const { return done_; }
  bool clamped_on_reset() const { return clamped_; }
  std::int64_t steps() const { return steps_; }
  TerminalKind terminal() const { return terminal_; }
  double episode_return() const { return return_; }

  double altitude() const { return y_; }
  double vertical_velocity() const { return vy_; }
  double horizontal_position() const { return x_; }
  double horizontal_velocity() const { return vx_; }
  double fuel() const { return fuel_; }

 private:
  ParamSpace space_;
  double gravity_ = 10.0;
  double wind_ = 0.0;
  std::vector<double> unit_;
  double y_ = 0.0, vy_ = 0.0, x_ = 0.0, vx_ = 0.0, fuel_ = 0.0;
  std::int64_t steps_ = 0;
  double return_ = 0.0;
  bool done_ = true;
  bool clamped_ = false;
  TerminalKind terminal_ = TerminalKind::timeout;
};

// FNV-1a 64 over the little-endian bytes of (y, vy, x, vx, fuel) after
// every step of the episode driven by `actions` (noop once exhausted).
std::uint64_t lander_trajectory_digest(std::span<const double> lambda_raw, std::uint64_t seed,
                                       std::span<const LanderAction> actions);

}  // namespace perm::env
