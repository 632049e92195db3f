// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <string>

namespace perm::env {

enum class NormalizerMode { window, fixed };

std::string to_string(NormalizerMode mode);
NormalizerMode normalizer_mode_from_string(const std::string& s);

struct NormalizerConfig {
  NormalizerMode mode = NormalizerMode::window;
  std::size_t window = 500;
  // Fixed mode: r = clamp((raw - center) / scale, -3, 3).
  double center = 0.0;
  double scale = 1.0;

  void validate() const;
  bool operator==(const NormalizerConfig&) const = default;
};

// Maps raw rewards to normalized responses.
//
// Window mode z-scores each reward against the current window, then
// appends it. With fewer than kMinSamples rewards seen it falls back to
// clamp(raw / 100, -3, 3). Fixed mode applies a stationary affine map.
class ResponseNormalizer {
 public:
  static constexpr std::size_t kDefaultWindow = 500;
  static constexpr std::size_t kMinSamples = 10;
  static constexpr double kClamp = 3.0;
  static constexpr double kStddevFloor = 1e-6;

  explicit ResponseNormalizer(std::size_t window = kDefaultWindow);
  explicit ResponseNormalizer(const NormalizerConfig& config);

  double normalize(double raw);
  // Standardizes without updating the window.
  double peek(double raw) const;

  const NormalizerConfig& config() const { return config_; }
  std::size_t count() const { return window_.size(); }
  std::size_t capacity() const { return config_.window; }
  double mean() const;
  // Population standard deviation, floored.
  double stddev() const;

 private:
  NormalizerConfig config_;
  std::deque<double> window_;
};

}  // namespace perm::env
