// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cmath>
#include <cstring>

#include "perm/env/environments.hpp"
#include "perm/error.hpp"

namespace perm::env {

ParamSpace Lander::default_space() {
  return ParamSpace({"gravity", "wind"}, {3.0, -15.0}, {20.0, 15.0});
}

Lander::Lander(ParamSpace space) : space_(std::move(space)) {
  if (space_.dim() != 2) throw ShapeError("Lander: parameter space must be (gravity, wind)");
  if (!(space_.lower()[0] > 0.0)) throw InvalidArgument("Lander: gravity lower bound must be > 0");
}

LanderObservation Lander::reset(std::span<const double> lambda_raw, std::uint64_t /*seed*/) {
  const auto raw = space_.clamp(lambda_raw, &clamped_);
  unit_ = space_.normalize(raw).value;
  gravity_ = raw[0];
  wind_ = raw[1];
  y_ = kStartAltitude;
  vy_ = 0.0;
  x_ = 0.0;
  vx_ = 0.0;
  fuel_ = kStartFuel;
  steps_ = 0;
  return_ = 0.0;
  done_ = false;
  terminal_ = TerminalKind::timeout;
  return observation();
}

LanderObservation Lander::observation() const {
  const double g = unit_.empty() ? 0.0 : unit_[0];
  const double w = unit_.empty() ? 0.0 : unit_[1];
  return {y_, vy_, x_, vx_, fuel_, g, w};
}

LanderStep Lander::step(LanderAction action) {
  if (done_) throw InvalidArgument("Lander::step: episode is already done");
  const bool has_fuel = fuel_ >= 1.0;
  const bool up = has_fuel && action == LanderAction::thrust_up;
  const bool left = has_fuel && action == LanderAction::thrust_left;
  const bool right = has_fuel && action == LanderAction::thrust_right;
  const double spent = (up || left || right) ? 1.0 : 0.0;
  fuel_ -= spent;

  vy_ += (-gravity_ + kMainThrust * (up ? 1.0 : 0.0)) * kDt;
  vx_ += (wind_ + kSideThrust * ((right ? 1.0 : 0.0) - (left ? 1.0 : 0.0))) * kDt;
  y_ += vy_ * kDt;
  x_ += vx_ * kDt;
  ++steps_;

  double reward = -kFuelCost * spent;
  if (y_ <= 0.0) {
    done_ = true;
    const bool soft = std::abs(vy_) <= kSafeSpeed && std::abs(vx_) <= kSafeSpeed &&
                      std::abs(x_) <= kPadHalfWidth;
    terminal_ = soft ? TerminalKind::landed : TerminalKind::crashed;
    reward += soft ? kTerminalReward : -kTerminalReward;
  } else if (steps_ >= kMaxSteps) {
    done_ = true;
    terminal_ = TerminalKind::timeout;
    reward -= kTerminalReward;
  }
  return_ += reward;
  return LanderStep{observation(), reward, done_};
}

std::uint64_t lander_trajectory_digest(std::span<const double> lambda_raw, std::uint64_t seed,
                                       std::span<const LanderAction> actions) {
  static_assert(std::endian::native == std::endian::little, "digest assumes little-endian host");
  Lander lander;
  lander.reset(lambda_raw, seed);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](double v) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof v);
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  };
  std::size_t t = 0;
  while (!lander.done()) {
    const auto a = t < actions.size() ? actions[t] : LanderAction::noop;
    lander.step(a);
    ++t;
    feed(lander.altitude());
    feed(lander.vertical_velocity());
    feed(lander.horizontal_position());
    feed(lander.horizontal_velocity());
    feed(lander.fuel());
  }
  return h;
}

}  // namespace perm::env
