// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/kernels/dense.hpp"

#include <omp.h>

#include <cstdint>

namespace perm::kernels {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  const bool big = m * k * n >= kParallelThreshold && m > 1;
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t i = 0; i < rows; ++i) {
    double* o = out.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) o[j] = 0.0;
    const double* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += av * bp[j];
    }
  }
}

void matmul_tn_accumulate(std::span<const double> a, std::span<const double> g,
                          std::span<double> out, std::size_t m, std::size_t k, std::size_t n) {
  const bool big = m * k * n >= kParallelThreshold && k > 1;
  const auto rows = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t p = 0; p < rows; ++p) {
    double* o = out.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[i * k + p];
      const double* gi = g.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += av * gi[j];
    }
  }
}

void matmul_nt_accumulate(std::span<const double> g, std::span<const double> b,
                          std::span<double> out, std::size_t m, std::size_t k, std::size_t n) {
  const bool big = m * k * n >= kParallelThreshold && m > 1;
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (big)
  for (std::int64_t i = 0; i < rows; ++i) {
    const double* gi = g.data() + i * n;
    double* o = out.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b.data() + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += gi[j] * bp[j];
      o[p] += s;
    }
  }
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
}

int max_threads() { return omp_get_max_threads(); }

namespace reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      out[i * n + j] = s;
    }
  }
}

void matmul_tn_accumulate(std::span<const double> a, std::span<const double> g,
                          std::span<double> out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = out[p * n + j];
      for (std::size_t i = 0; i < m; ++i) s += a[i * k + p] * g[i * n + j];
      out[p * n + j] = s;
    }
  }
}

void matmul_nt_accumulate(std::span<const double> g, std::span<const double> b,
                          std::span<double> out, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * b[p * n + j];
      out[i * k + p] += s;
    }
  }
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  for (std::size_t i = 0; i < n; ++i) body(i);
}

}  // namespace reference
}  // namespace perm::kernels
