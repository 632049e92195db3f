// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "perm/error.hpp"
#include "perm/grad/adam.hpp"
#include "perm/grad/grad_check.hpp"
#include "perm/grad/tape.hpp"
#include "perm/kernels/dense.hpp"
#include "perm/rng.hpp"

using namespace perm;
using namespace perm::ad;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo, double hi) {
  std::vector<double> v(element_count(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

// Test-side central differences, independent of grad_check().
std::vector<double> central_difference(const TapeFunction& f, const std::vector<Tensor>& point,
                                       std::size_t which, double h) {
  std::vector<double> out(point[which].size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto eval = [&](double delta) {
      std::vector<Tensor> p = point;
      std::vector<double> v(p[which].values().begin(), p[which].values().end());
      v[i] += delta;
      p[which] = Tensor(p[which].shape(), std::move(v));
      Tape t;
      std::vector<Var> vars;
      for (auto& x : p) vars.push_back(t.parameter(x));
      return t.value(f(t, vars)).item();
    };
    out[i] = (eval(h) - eval(-h)) / (2 * h);
  }
  return out;
}

double max_rel_error_vs_fd(const TapeFunction& f, const std::vector<Tensor>& point) {
  Tape t;
  std::vector<Var> vars;
  for (auto& x : point) vars.push_back(t.parameter(x));
  const auto g = t.backward(f(t, vars));
  double worst = 0.0;
  for (std::size_t w = 0; w < point.size(); ++w) {
    const auto fd = central_difference(f, point, w, 1e-5);
    for (std::size_t i = 0; i < fd.size(); ++i) {
      worst = std::max(worst, relative_error(g[vars[w]][i], fd[i]));
    }
  }
  return worst;
}

}  // namespace

TEST(Tensor, RejectsNonFiniteAndBadShapes) {
  EXPECT_THROW(Tensor({2}, {1.0, NAN}), NonFiniteError);
  EXPECT_THROW(Tensor({2}, {1.0, INFINITY}), NonFiniteError);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(Tensor({0}, {}), ShapeError);
}

TEST(Forward, TrivialExamples) {
  Tape t;
  EXPECT_EQ(t.value(t.tanh(t.constant(Tensor::row({0.0})))).item(), 0.0);
  const Var a = t.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  const Var b = t.constant(Tensor::matrix(3, 1, {1, 0, -1}));
  const Var c = t.matmul(a, b);
  EXPECT_EQ(t.value(c).shape(), (Shape{2, 1}));
  EXPECT_EQ(t.value(c)[0], -2.0);
  EXPECT_EQ(t.value(c)[1], -2.0);
  EXPECT_NEAR(t.value(t.softplus(t.constant(Tensor::scalar(0.0)))).item(), 0.693147, 1e-6);
  EXPECT_DOUBLE_EQ(t.value(t.softplus(t.constant(Tensor::scalar(0.0)))).item(), std::log(2.0));
}

TEST(Forward, ShapeMismatchNamesOpAndShapes) {
  Tape t;
  const Var a = t.constant(Tensor::matrix(2, 3, std::vector<double>(6, 1.0)));
  const Var b = t.constant(Tensor::matrix(2, 2, std::vector<double>(4, 1.0)));
  try {
    t.matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[2 x 3]"), std::string::npos);
    EXPECT_NE(msg.find("[2 x 2]"), std::string::npos);
  }
  EXPECT_THROW(t.add(a, b), ShapeError);
  EXPECT_THROW(t.slice(a, 2, 5), ShapeError);
}

TEST(Forward, NonFiniteOutputRejected) {
  Tape t;
  EXPECT_THROW(t.log(t.constant(Tensor::scalar(-1.0))), NonFiniteError);
  EXPECT_THROW(t.exp(t.constant(Tensor::scalar(1000.0))), NonFiniteError);
}

TEST(Forward, ConcatSliceBroadcast) {
  Tape t;
  const Var a = t.constant(Tensor::matrix(2, 1, {1, 2}));
  const Var b = t.constant(Tensor::matrix(2, 2, {3, 4, 5, 6}));
  const Var c = t.concat({a, b});
  EXPECT_EQ(t.value(c), Tensor::matrix(2, 3, {1, 3, 4, 2, 5, 6}));
  EXPECT_EQ(t.value(t.slice(c, 1, 3)), Tensor::matrix(2, 2, {3, 4, 5, 6}));
  const Var r = t.constant(Tensor::row({10, 20}));
  EXPECT_EQ(t.value(t.broadcast_add_row(b, r)), Tensor::matrix(2, 2, {13, 24, 15, 26}));
}

TEST(Backward, TrivialExamples) {
  Tape t;
  const Var x = t.parameter(Tensor::scalar(3.0));
  const auto g = t.backward(t.square(x));
  EXPECT_EQ(g[x].item(), 6.0);

  Tape t2;
  const Var y = t2.parameter(Tensor::scalar(3.0));
  const Var k = t2.constant(Tensor::scalar(5.0));
  const auto g2 = t2.backward(t2.square(k));
  EXPECT_EQ(g2[y].item(), 0.0);
}

TEST(Backward, NonScalarRootRejected) {
  Tape t;
  const Var x = t.parameter(Tensor::row({1.0, 2.0}));
  EXPECT_THROW(t.backward(t.tanh(x)), ShapeError);
}

TEST(Backward, SumTanhMatchesFiniteDifferences) {
  Rng rng(7);
  const TapeFunction f = [](Tape& t, std::span<const Var> v) { return t.sum(t.tanh(v[0])); };
  for (int trial = 0; trial < 10; ++trial) {
    const std::vector<Tensor> point{random_tensor(rng, {8}, -2.0, 2.0)};
    EXPECT_LE(max_rel_error_vs_fd(f, point), 1e-4);
  }
}

// Every op's analytic gradient agrees with central differences at 100
// random points.
TEST(Backward, EveryOpMatchesFiniteDifferencesProperty) {
  struct Case {
    const char* name;
    std::vector<Shape> shapes;
    double lo, hi;
    TapeFunction f;
  };
  auto weighted = [](Tape& t, Var y) {
    // Non-uniform weights so permuted gradients would be caught.
    const auto n = t.value(y).size();
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = 0.3 + 0.17 * static_cast<double>(i);
    return t.sum(t.mul(y, t.constant(Tensor(t.value(y).shape(), w))));
  };
  std::vector<Case> cases = {
      {"matmul", {{2, 3}, {3, 2}}, -1, 1,
       [&](Tape& t, std::span<const Var> v) { return weighted(t, t.matmul(v[0], v[1])); }},
      {"add", {{2, 2}, {2, 2}}, -1, 1,
       [&](Tape& t, std::span<const Var> v) { return weighted(t, t.add(v[0], v[1])); }},
      {"sub", {{2, 2}, {2, 2}}, -1, 1,
       [&](Tape& t, std::span<const Var> v) { return weighted(t, t.sub(v[0], v[1])); }},
      {"mul", {{2, 2}, {2, 2}}, -1, 1,
       [&](Tape& t, std::span<const Var> v) { return weighted(t, t.mul(v[0], v[1])); }},
      {"scalar-mul", {{3}}, -1, 1,
       [&](Tape& t, std::span<const Var> v) { return weighted(t, t.scalar_mul(v[0], -1.7)); }},
      {"tanh", {{3}}, -2, 2,
       [&](Tape& t, std::span<const Var> v) { return weighted(t, t.tanh(v[0])); }},
      {"softplus", {{3}}, -3, 3,
       [&](Tape& t, std::span<const Var> v) { return weighted(t, t.softplus(v[0])); }},
      {"exp", {{3}}, -2, 2,
       [&](Tape& t, std::span<const Var> v) { return weighted(t, t.exp(v[0])); }},
      {"log", {{3}}, 0.2, 3,
       [&](Tape& t, std::span<const Var> v) { return weighted(t, t.log(v[0])); }},
      {"square", {{3}}, -2, 2,
       [&](Tape& t, std::span<const Var> v) { return weighted(t, t.square(v[0])); }},
      {"sum", {{2, 3}}, -1, 1,
       [&](Tape& t, std::span<const Var> v) { return t.square(t.sum(v[0])); }},
      {"mean", {{2, 3}}, -1, 1,
       [&](Tape& t, std::span<const Var> v) { return t.square(t.mean(v[0])); }},
      {"concat", {{2, 1}, {2, 2}}, -1, 1,
       [&](Tape& t, std::span<const Var> v) {
         return weighted(t, t.tanh(t.concat({v[0], v[1]})));
       }},
      {"slice", {{2, 4}}, -1, 1,
       [&](Tape& t, std::span<const Var> v) { return weighted(t, t.slice(v[0], 1, 3)); }},
      {"broadcast-add-row", {{3, 2}, {1, 2}}, -1, 1,
       [&](Tape& t, std::span<const Var> v) {
         return weighted(t, t.tanh(t.broadcast_add_row(v[0], v[1])));
       }},
  };
  Rng rng(2024);
  for (const auto& c : cases) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Tensor> point;
      for (const auto& s : c.shapes) point.push_back(random_tensor(rng, s, c.lo, c.hi));
      worst = std::max(worst, max_rel_error_vs_fd(c.f, point));
    }
    EXPECT_LE(worst, 1e-4) << c.name;
  }
}

TEST(Backward, LinearityOverSubgraphs) {
  Rng rng(3);
  const Tensor x0 = random_tensor(rng, {2, 3}, -1, 1);
  auto f = [](Tape& t, Var x) { return t.sum(t.tanh(x)); };
  auto g = [](Tape& t, Var x) { return t.mean(t.square(t.exp(x))); };

  Tape both;
  const Var xb = both.parameter(x0);
  const auto gb = both.backward(both.add(f(both, xb), g(both, xb)));
  Tape tf;
  const Var xf = tf.parameter(x0);
  const auto gf = tf.backward(f(tf, xf));
  Tape tg;
  const Var xg = tg.parameter(x0);
  const auto gg = tg.backward(g(tg, xg));
  for (std::size_t i = 0; i < x0.size(); ++i) {
    EXPECT_NEAR(gb[xb][i], gf[xf][i] + gg[xg][i], 1e-14);
  }
}

TEST(Backward, ReplayIsBitIdentical) {
  auto run = [] {
    Rng rng(11);
    Tape t;
    const Var w = t.parameter(random_tensor(rng, {4, 3}, -1, 1));
    const Var x = t.constant(random_tensor(rng, {5, 4}, -1, 1));
    const Var y = t.sum(t.softplus(t.matmul(x, w)));
    return std::pair{t.value(y), t.backward(y)[w]};
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Adam, ZeroGradientIsNoOp) {
  const Tensor p = Tensor::row({1.5, -2.0});
  AdamState s = AdamState::for_param(p);
  const Tensor q = adam_step(p, Tensor::zeros(p.shape()), s);
  EXPECT_EQ(q, p);
  EXPECT_EQ(s.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // m = 0.1, v = 0.001, bias-corrected mhat = 1, vhat = 1.
  const Tensor p = Tensor::scalar(0.0);
  AdamState s = AdamState::for_param(p, {.lr = 0.1});
  const Tensor q = adam_step(p, Tensor::scalar(1.0), s);
  EXPECT_NEAR(q.item(), -0.1, 1e-8);
  EXPECT_NEAR(q.item(), -0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, DeterministicAndShapeChecked) {
  const Tensor p = Tensor::row({0.3, 0.4});
  const Tensor g = Tensor::row({0.1, -0.2});
  AdamState s1 = AdamState::for_param(p), s2 = AdamState::for_param(p);
  EXPECT_EQ(adam_step(p, g, s1), adam_step(p, g, s2));
  EXPECT_THROW(adam_step(p, Tensor::scalar(1.0), s1), ShapeError);
}

TEST(GradCheck, IdentityAndTanhChain) {
  const TapeFunction identity = [](Tape& t, std::span<const Var> v) { return t.sum(v[0]); };
  const auto r0 = grad_check(identity, {Tensor::row({0.5, -1.0, 2.0})}, 1e-5);
  EXPECT_LE(r0.max_relative_error, 1e-9);

  const TapeFunction chain = [](Tape& t, std::span<const Var> v) {
    Var x = v[0];
    for (int i = 0; i < 5; ++i) x = t.tanh(x);
    return t.sum(x);
  };
  Rng rng(5);
  const auto r1 = grad_check(chain, {random_tensor(rng, {6}, -2, 2)}, 1e-5);
  EXPECT_LE(r1.max_relative_error, 1e-4);
  EXPECT_EQ(r1.coordinates, 6u);
}

TEST(GradCheck, StepMustBeSmallPositive) {
  const TapeFunction f = [](Tape& t, std::span<const Var> v) { return t.sum(v[0]); };
  EXPECT_THROW(grad_check(f, {Tensor::scalar(1.0)}, 0.0), InvalidArgument);
  EXPECT_THROW(grad_check(f, {Tensor::scalar(1.0)}, 1e-2), InvalidArgument);
}

TEST(GradCheck, SerialAndParallelAgree) {
  Rng rng(9);
  const std::vector<Tensor> point{random_tensor(rng, {3, 4}, -1, 1), random_tensor(rng, {4, 1}, -1, 1)};
  const TapeFunction f = [](Tape& t, std::span<const Var> v) {
    return t.sum(t.tanh(t.matmul(v[0], v[1])));
  };
  const auto a = grad_check(f, point, 1e-5, Execution::serial);
  const auto b = grad_check(f, point, 1e-5, Execution::parallel);
  EXPECT_EQ(a.max_relative_error, b.max_relative_error);
  EXPECT_EQ(a.worst_index, b.worst_index);
}

TEST(Kernels, ParallelMatchesReferenceBitExactly) {
  Rng rng(21);
  for (auto [m, k, n] : {std::tuple{1, 1, 1}, {3, 5, 2}, {128, 64, 64}, {257, 33, 65}}) {
    std::vector<double> a(m * k), b(k * n), g(m * n);
    for (auto& x : a) x = rng.uniform(-1, 1);
    for (auto& x : b) x = rng.uniform(-1, 1);
    for (auto& x : g) x = rng.uniform(-1, 1);
    std::vector<double> o1(m * n), o2(m * n);
    kernels::matmul(a, b, o1, m, k, n);
    kernels::reference::matmul(a, b, o2, m, k, n);
    EXPECT_EQ(o1, o2);
    std::vector<double> t1(k * n, 0.5), t2(k * n, 0.5);
    kernels::matmul_tn_accumulate(a, g, t1, m, k, n);
    kernels::reference::matmul_tn_accumulate(a, g, t2, m, k, n);
    EXPECT_EQ(t1, t2);
    std::vector<double> u1(m * k, -0.25), u2(m * k, -0.25);
    kernels::matmul_nt_accumulate(g, b, u1, m, k, n);
    kernels::reference::matmul_nt_accumulate(g, b, u2, m, k, n);
    EXPECT_EQ(u1, u2);
  }
}
