// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace perm {

// splitmix64 finalizer; used to derive independent child seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Seed for a labelled component of a run rooted at `root`.
constexpr std::uint64_t fork_seed(std::uint64_t root, std::string_view label) {
  return mix_seed(root ^ mix_seed(hash_label(label)));
}

constexpr std::uint64_t fork_seed(std::uint64_t root, std::uint64_t index) {
  return mix_seed(root ^ mix_seed(index + 0x51ed2701ULL));
}

// Source of standard-normal noise. Implementations must be deterministic
// for a given construction.
class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  virtual double standard_normal() = 0;
};

class Rng final : public NoiseSource {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  Rng fork(std::string_view label) const { return Rng(fork_seed(seed_, label)); }
  Rng fork(std::uint64_t index) const { return Rng(fork_seed(seed_, index)); }

  double standard_normal() override { return normal_(engine_); }
  double normal(double mean, double stddev) { return mean + stddev * normal_(engine_); }
  // Uniform on [0, 1).
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t next_u64() { return engine_(); }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// Replays a fixed noise vector cyclically; for injected-noise tests.
class FixedNoise final : public NoiseSource {
 public:
  explicit FixedNoise(std::vector<double> values) : values_(std::move(values)) {}
  double standard_normal() override {
    if (values_.empty()) return 0.0;
    const double v = values_[pos_];
    pos_ = (pos_ + 1) % values_.size();
    return v;
  }

 private:
  std::vector<double> values_;
  std::size_t pos_ = 0;
};

}  // namespace perm
