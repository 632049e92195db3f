// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/env/normalizer.hpp"

#include <algorithm>
#include <cmath>

#include "perm/error.hpp"

namespace perm::env {

std::string to_string(NormalizerMode mode) {
  return mode == NormalizerMode::window ? "window" : "fixed";
}

NormalizerMode normalizer_mode_from_string(const std::string& s) {
  if (s == "window") return NormalizerMode::window;
  if (s == "fixed") return NormalizerMode::fixed;
  throw InvalidArgument("unknown normalizer mode '" + s + "' (expected window or fixed)");
}

void NormalizerConfig::validate() const {
  if (window == 0) throw InvalidArgument("normalizer window must be positive");
  if (!std::isfinite(center)) throw InvalidArgument("normalizer center must be finite");
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw InvalidArgument("normalizer scale must be finite and > 0");
  }
}

ResponseNormalizer::ResponseNormalizer(std::size_t window)
    : ResponseNormalizer(NormalizerConfig{.window = window}) {}

ResponseNormalizer::ResponseNormalizer(const NormalizerConfig& config) : config_(config) {
  config_.validate();
}

double ResponseNormalizer::mean() const {
  if (window_.empty()) return 0.0;
  double s = 0.0;
  for (double x : window_) s += x;
  return s / static_cast<double>(window_.size());
}

double ResponseNormalizer::stddev() const {
  if (window_.empty()) return kStddevFloor;
  const double m = mean();
  double ss = 0.0;
  for (double x : window_) ss += (x - m) * (x - m);
  return std::max(std::sqrt(ss / static_cast<double>(window_.size())), kStddevFloor);
}

double ResponseNormalizer::peek(double raw) const {
  if (!std::isfinite(raw)) throw NonFiniteError("ResponseNormalizer: non-finite reward");
  if (config_.mode == NormalizerMode::fixed) {
    return std::clamp((raw - config_.center) / config_.scale, -kClamp, kClamp);
  }
  if (window_.size() < kMinSamples) return std::clamp(raw / 100.0, -kClamp, kClamp);
  return std::clamp((raw - mean()) / stddev(), -kClamp, kClamp);
}

double ResponseNormalizer::normalize(double raw) {
  const double r = peek(raw);
  window_.push_back(raw);
  if (window_.size() > config_.window) window_.pop_front();
  return r;
}

}  // namespace perm::env
