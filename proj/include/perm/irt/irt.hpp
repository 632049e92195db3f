// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "perm/grad/tape.hpp"

// Closed-form item-response and diagonal-Gaussian math.
namespace perm::irt {

inline constexpr double kStddevFloor = 1e-6;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

struct Ability {
  std::vector<double> value;
};

struct Difficulty {
  std::vector<double> value;
};

// Diagonal-covariance normal. Standard deviations are floored at
// kStddevFloor on construction.
class Gaussian {
 public:
  Gaussian() = default;
  Gaussian(std::vector<double> mean, std::vector<double> stddev);

  static Gaussian standard(std::size_t dim);

  std::size_t dim() const { return mean_.size(); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return stddev_; }

  bool operator==(const Gaussian&) const = default;

 private:
  std::vector<double> mean_;
  std::vector<double> stddev_;
};

// Logistic one-parameter model: P(correct) = 1 / (1 + exp(-(a - d))).
double rasch_prob(double ability, double difficulty);

// Standard normal CDF, absolute error below 1e-7 (rational approximation,
// no libm erf).
double normal_cdf(double x);

// Normal ogive with the margin summed over latent components:
// Phi(sum_i (a_i - d_i)).
double ogive_prob(const Ability& a, const Difficulty& d);

double gaussian_log_pdf(std::span<const double> x, const Gaussian& g);

// KL(q || p), closed form for diagonal Gaussians.
double gaussian_kl(const Gaussian& q, const Gaussian& p);

// mean + stddev * noise
std::vector<double> reparam_sample(const Gaussian& g, std::span<const double> noise);

// Differentiable counterparts over tape nodes. Means and stddevs are
// [batch x dim] nodes; stddevs must be positive.
namespace tape_ops {

// mean + stddev * noise, noise a constant [batch x dim] tensor.
ad::Var reparam_sample(ad::Tape& tape, ad::Var mean, ad::Var stddev, const ad::Tensor& noise);

// Per-row diagonal log-density, summed over dimensions then over rows.
ad::Var gaussian_log_pdf_sum(ad::Tape& tape, ad::Var x, ad::Var mean, ad::Var stddev);

// Sum over rows and dimensions of KL(N(mean, stddev) || N(0, I)).
ad::Var kl_to_standard_sum(ad::Tape& tape, ad::Var mean, ad::Var stddev);

}  // namespace tape_ops
}  // namespace perm::irt
