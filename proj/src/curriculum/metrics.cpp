// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/curriculum/metrics.hpp"

#include <cmath>
#include <utility>

#include "perm/error.hpp"

namespace perm::curriculum {

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InvalidArgument("pearson: need two equal-length series of at least 2 values");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

double ols_r_squared(const std::vector<std::vector<double>>& x, std::span<const double> y) {
  const std::size_t n = y.size();
  const std::size_t p = x.size() + 1;
  for (const auto& col : x) {
    if (col.size() != n) throw ShapeError("ols_r_squared: column length differs from y");
  }
  if (n <= p) throw InvalidArgument("ols_r_squared: need more rows than coefficients");
  auto column = [&](std::size_t j, std::size_t i) { return j == 0 ? 1.0 : x[j - 1][i]; };

  // Normal equations [X'X | X'y], solved by elimination with partial pivoting.
  std::vector<std::vector<double>> m(p, std::vector<double>(p + 1, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < p; ++r) {
      for (std::size_t c = 0; c < p; ++c) m[r][c] += column(r, i) * column(c, i);
      m[r][p] += column(r, i) * y[i];
    }
  }
  for (std::size_t c = 0; c < p; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < p; ++r) {
      if (std::abs(m[r][c]) > std::abs(m[piv][c])) piv = r;
    }
    if (std::abs(m[piv][c]) < 1e-300) throw InvalidArgument("ols_r_squared: singular design");
    std::swap(m[c], m[piv]);
    for (std::size_t r = 0; r < p; ++r) {
      if (r == c) continue;
      const double f = m[r][c] / m[c][c];
      for (std::size_t k = c; k <= p; ++k) m[r][k] -= f * m[c][k];
    }
  }
  std::vector<double> beta(p);
  for (std::size_t c = 0; c < p; ++c) beta[c] = m[c][p] / m[c][c];

  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double fit = 0.0;
    for (std::size_t j = 0; j < p; ++j) fit += beta[j] * column(j, i);
    ss_res += (y[i] - fit) * (y[i] - fit);
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

AnalysisMetrics analysis_metrics(const model::PermModel& perm,
                                 std::span<const model::Observation> holdout) {
  if (holdout.size() < kMinHoldout) {
    throw InvalidArgument("analysis_metrics: holdout has " + std::to_string(holdout.size()) +
                          " records, need at least " + std::to_string(kMinHoldout));
  }
  const std::size_t n = perm.latent_dim();
  const std::size_t p = perm.space().dim();
  std::vector<std::vector<double>> a(n), d(n);
  std::vector<double> r;
  AnalysisMetrics out;
  out.count = holdout.size();
  for (const auto& o : holdout) {
    const auto gd = perm.encode_difficulty(o.r, o.lambda);
    const auto ga = perm.encode_ability(gd.mean(), o.r, o.lambda);
    const auto resp = perm.decode_response(ga.mean(), gd.mean());
    const auto params = perm.decode_params(gd.mean());
    out.response_mse += (resp.mean()[0] - o.r) * (resp.mean()[0] - o.r);
    for (std::size_t i = 0; i < p; ++i) {
      const double e = params.mean()[i] - o.lambda[i];
      out.lambda_mse += e * e / static_cast<double>(p);
    }
    for (std::size_t i = 0; i < n; ++i) {
      a[i].push_back(ga.mean()[i]);
      d[i].push_back(gd.mean()[i]);
    }
    r.push_back(o.r);
  }
  const double count = static_cast<double>(holdout.size());
  out.response_mse /= count;
  out.lambda_mse /= count;
  std::vector<std::vector<double>> design = a;
  design.insert(design.end(), d.begin(), d.end());
  out.r_squared = ols_r_squared(design, r);
  out.corr_a_r = pearson(a[0], r);
  out.corr_d_r = pearson(d[0], r);
  return out;
}

store::Json to_json(const AnalysisMetrics& m) {
  store::Json j;
  j["response_mse"] = m.response_mse;
  j["lambda_mse"] = m.lambda_mse;
  j["r_squared"] = m.r_squared;
  j["corr_a_r"] = m.corr_a_r;
  j["corr_d_r"] = m.corr_d_r;
  j["count"] = m.count;
  return j;
}

}  // namespace perm::curriculum
