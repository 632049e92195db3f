// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>

// Dense row-major kernels used by the gradient engine.
//
// Every kernel in `perm::kernels` is OpenMP-parallel over output rows and
// accumulates each output element in the same order as its counterpart in
// `perm::kernels::reference`, so the two produce bit-identical results. The
// reference versions are plain serial loops kept for tests and benchmarks.
namespace perm::kernels {

// Work (m*k*n multiply-adds) below which the parallel kernels stay serial.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

// out[m x n] = a[m x k] * b[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);

// out[k x n] += a[m x k]^T * g[m x n]
void matmul_tn_accumulate(std::span<const double> a, std::span<const double> g,
                          std::span<double> out, std::size_t m, std::size_t k, std::size_t n);

// out[m x k] += g[m x n] * b[k x n]^T
void matmul_nt_accumulate(std::span<const double> g, std::span<const double> b,
                          std::span<double> out, std::size_t m, std::size_t k, std::size_t n);

// Runs body(i) for i in [0, n); iterations must be independent.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

int max_threads();

namespace reference {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_accumulate(std::span<const double> a, std::span<const double> g,
                          std::span<double> out, std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_accumulate(std::span<const double> g, std::span<const double> b,
                          std::span<double> out, std::size_t m, std::size_t k, std::size_t n);
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace reference
}  // namespace perm::kernels
