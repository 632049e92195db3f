// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

// Parallel kernels against their serial references.

#include <vector>

#include <benchmark/benchmark.h>

#include "perm/env/environments.hpp"
#include "perm/grad/grad_check.hpp"
#include "perm/kernels/dense.hpp"
#include "perm/model/perm_model.hpp"
#include "perm/rng.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  perm::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.standard_normal();
  return v;
}

template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1);
  const auto b = random_values(n * n, 2);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      perm::kernels::matmul(a, b, out, n, n, n);
    } else {
      perm::kernels::reference::matmul(a, b, out, n, n, n);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul<true>)->Name("matmul/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Matmul<false>)->Name("matmul/reference")->Arg(64)->Arg(128)->Arg(256);

template <perm::ad::Execution Exec>
void BM_ElboGradCheck(benchmark::State& state) {
  using namespace perm;
  const auto space = env::SyntheticEnv::default_space();
  model::PermConfig config;
  config.hidden = {16, 16};
  const model::PermModel perm_model(config, space);
  Rng rng(3);
  std::vector<model::Observation> batch;
  for (int i = 0; i < 4; ++i) batch.push_back({rng.normal(0.0, 1.0), {rng.uniform()}});
  const auto noise = model::ElboNoise::draw(batch.size(), config.latent_dim, rng);
  const auto& layout = perm_model.layout();
  ad::TapeFunction f = [&](ad::Tape& tape, std::span<const ad::Var> w) {
    return model::elbo_on_tape(tape, w, config, layout, 0.0, 1.0, batch, noise);
  };
  for (auto _ : state) {
    auto r = ad::grad_check(f, perm_model.weights().tensors, 1e-5, Exec);
    benchmark::DoNotOptimize(r.max_relative_error);
  }
}
BENCHMARK(BM_ElboGradCheck<perm::ad::Execution::parallel>)
    ->Name("elbo_grad_check/parallel")
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ElboGradCheck<perm::ad::Execution::serial>)
    ->Name("elbo_grad_check/serial")
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
