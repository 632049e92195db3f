// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "perm/model/perm_model.hpp"
#include "perm/store/records.hpp"

namespace perm::curriculum {

inline constexpr std::size_t kMinHoldout = 50;

struct AnalysisMetrics {
  double response_mse = 0.0;  // on normalized r
  double lambda_mse = 0.0;    // normalized coordinates
  double r_squared = 0.0;     // OLS of r on (mean a, mean d)
  double corr_a_r = 0.0;      // first latent component
  double corr_d_r = 0.0;
  std::size_t count = 0;
};

double pearson(std::span<const double> x, std::span<const double> y);

// Coefficient of determination of y on the columns of `x` plus an
// intercept.
double ols_r_squared(const std::vector<std::vector<double>>& x, std::span<const double> y);

// Throws InvalidArgument for fewer than kMinHoldout records.
AnalysisMetrics analysis_metrics(const model::PermModel& perm,
                                 std::span<const model::Observation> holdout);

store::Json to_json(const AnalysisMetrics& m);

}  // namespace perm::curriculum
