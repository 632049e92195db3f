// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/irt/irt.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "perm/error.hpp"

namespace perm::irt {
namespace {

void require_same_dim(const char* op, std::size_t a, std::size_t b) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": dimension mismatch " + std::to_string(a) + " vs " +
                     std::to_string(b));
  }
}

}  // namespace

Gaussian::Gaussian(std::vector<double> mean, std::vector<double> stddev)
    : mean_(std::move(mean)), stddev_(std::move(stddev)) {
  require_same_dim("Gaussian", mean_.size(), stddev_.size());
  for (std::size_t i = 0; i < mean_.size(); ++i) {
    if (!std::isfinite(mean_[i]) || !std::isfinite(stddev_[i])) {
      throw NonFiniteError("Gaussian: non-finite parameter");
    }
    if (stddev_[i] < 0.0) throw InvalidArgument("Gaussian: negative stddev");
    stddev_[i] = std::max(stddev_[i], kStddevFloor);
  }
}

Gaussian Gaussian::standard(std::size_t dim) {
  return Gaussian(std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0));
}

double rasch_prob(double ability, double difficulty) {
  const double z = ability - difficulty;
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Hart's double-precision rational approximation (as arranged by West).
double normal_cdf(double x) {
  const double ax = std::abs(x);
  double tail;
  if (ax > 37.0) {
    tail = 0.0;
  } else {
    const double e = std::exp(-0.5 * ax * ax);
    if (ax < 7.07106781186547) {
      double num = 3.52624965998911e-02 * ax + 0.700383064443688;
      num = num * ax + 6.37396220353165;
      num = num * ax + 33.912866078383;
      num = num * ax + 112.079291497871;
      num = num * ax + 221.213596169931;
      num = num * ax + 220.206867912376;
      double den = 8.83883476483184e-02 * ax + 1.75566716318264;
      den = den * ax + 16.064177579207;
      den = den * ax + 86.7807322029461;
      den = den * ax + 296.564248779674;
      den = den * ax + 637.333633378831;
      den = den * ax + 793.826512519948;
      den = den * ax + 440.413735824752;
      tail = e * num / den;
    } else {
      double cf = ax + 0.65;
      cf = ax + 4.0 / cf;
      cf = ax + 3.0 / cf;
      cf = ax + 2.0 / cf;
      cf = ax + 1.0 / cf;
      tail = e / cf / 2.506628274631;
    }
  }
  return x > 0 ? 1.0 - tail : tail;
}

double ogive_prob(const Ability& a, const Difficulty& d) {
  require_same_dim("ogive_prob", a.value.size(), d.value.size());
  double margin = 0.0;
  for (std::size_t i = 0; i < a.value.size(); ++i) margin += a.value[i] - d.value[i];
  return normal_cdf(margin);
}

double gaussian_log_pdf(std::span<const double> x, const Gaussian& g) {
  require_same_dim("gaussian_log_pdf", x.size(), g.dim());
  double lp = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (x[i] - g.mean()[i]) / g.stddev()[i];
    lp += -kHalfLog2Pi - std::log(g.stddev()[i]) - 0.5 * z * z;
  }
  return lp;
}

double gaussian_kl(const Gaussian& q, const Gaussian& p) {
  require_same_dim("gaussian_kl", q.dim(), p.dim());
  double kl = 0.0;
  for (std::size_t i = 0; i < q.dim(); ++i) {
    const double sq = q.stddev()[i], sp = p.stddev()[i];
    const double dm = q.mean()[i] - p.mean()[i];
    kl += std::log(sp / sq) + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5;
  }
  return std::max(kl, 0.0);
}

std::vector<double> reparam_sample(const Gaussian& g, std::span<const double> noise) {
  require_same_dim("reparam_sample", noise.size(), g.dim());
  std::vector<double> out(g.dim());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = g.mean()[i] + g.stddev()[i] * noise[i];
  return out;
}

namespace tape_ops {

ad::Var reparam_sample(ad::Tape& tape, ad::Var mean, ad::Var stddev, const ad::Tensor& noise) {
  return tape.add(mean, tape.mul(stddev, tape.constant(noise)));
}

ad::Var gaussian_log_pdf_sum(ad::Tape& tape, ad::Var x, ad::Var mean, ad::Var stddev) {
  // sum[-log(2pi)/2 - log s - (x - m)^2 / (2 s^2)]
  const ad::Var log_s = tape.log(stddev);
  const ad::Var inv_var = tape.exp(tape.scalar_mul(log_s, -2.0));
  const ad::Var sq = tape.mul(tape.square(tape.sub(x, mean)), inv_var);
  const ad::Var per = tape.add(log_s, tape.scalar_mul(sq, 0.5));
  const double count = static_cast<double>(tape.value(x).size());
  const ad::Var total = tape.scalar_mul(tape.sum(per), -1.0);
  return tape.add(total, tape.constant(ad::Tensor::scalar(-kHalfLog2Pi * count)));
}

ad::Var kl_to_standard_sum(ad::Tape& tape, ad::Var mean, ad::Var stddev) {
  // 0.5 * sum[s^2 + m^2 - 1 - 2 log s]
  const ad::Var terms = tape.sub(tape.add(tape.square(stddev), tape.square(mean)),
                                 tape.scalar_mul(tape.log(stddev), 2.0));
  const double count = static_cast<double>(tape.value(mean).size());
  return tape.scalar_mul(
      tape.add(tape.sum(terms), tape.constant(ad::Tensor::scalar(-count))), 0.5);
}

}  // namespace tape_ops
}  // namespace perm::irt
