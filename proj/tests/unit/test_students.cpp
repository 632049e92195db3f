// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "perm/env/environments.hpp"
#include "perm/error.hpp"
#include "perm/rng.hpp"
#include "perm/students/policy_gradient.hpp"
#include "perm/students/trainee.hpp"
#include "perm/students/zpd.hpp"

using namespace perm;
using namespace perm::students;

namespace {

// Raw level whose true difficulty equals `d` on the default synthetic env.
std::vector<double> level_for(double d) { return {10.0 * (d + 2.0) / 4.0}; }

// Oracle: the learning kernel written out directly.
double kernel_gain(double eta, double w, double d, double skill) {
  return eta * std::exp(-(d - skill) * (d - skill) / (2.0 * w * w));
}

env::LanderObservation random_obs(Rng& rng) {
  env::LanderObservation o{};
  for (auto& v : o) v = rng.uniform(-2, 2);
  return o;
}

std::vector<double> flatten(const std::vector<ad::Tensor>& ts) {
  std::vector<double> out;
  for (const auto& t : ts) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

}  // namespace

TEST(Zpd, GainExamples) {
  const ScriptedZpdStudent s({.skill = 0.3, .learn_rate = 0.05, .zone_width = 0.5});
  EXPECT_EQ(s.gain(0.3), 0.05);
  EXPECT_LT(s.gain(0.3 + 10 * 0.5), 1e-20 * 0.05);
  EXPECT_LT(s.gain(0.3 - 10 * 0.5), 1e-20 * 0.05);
  for (double d = -3.0; d <= 3.0; d += 0.1) {
    EXPECT_NEAR(s.gain(d), kernel_gain(0.05, 0.5, d, 0.3), 1e-15) << d;
  }
}

TEST(Zpd, GainPeaksAtMatchedDifficultyProperty) {
  for (double skill : {-2.0, -0.5, 1.7}) {
    const ScriptedZpdStudent s({.skill = skill});
    for (double delta = 0.05; delta <= 4.0; delta += 0.05) {
      EXPECT_GT(s.gain(skill), s.gain(skill + delta));
      EXPECT_GT(s.gain(skill), s.gain(skill - delta));
    }
  }
}

TEST(Zpd, AlwaysMatchedTrajectoryIsLinear) {
  const env::SyntheticEnv env;
  ScriptedZpdStudent s({.skill = -1.5, .learn_rate = 0.01, .zone_width = 0.5});
  for (int t = 0; t < 100; ++t) s.respond(env, level_for(s.skill()), t);
  EXPECT_NEAR(s.skill(), -1.5 + 100 * 0.01, 1e-9);
}

TEST(Zpd, RewardFromPreEpisodeSkillAndMonotoneSkill) {
  const env::SyntheticEnv env;
  ScriptedZpdStudent s({.skill = 0.0});
  Rng rng(3);
  double prev = s.skill();
  for (int t = 0; t < 500; ++t) {
    const auto lam = env.space().sample_uniform(rng);
    const std::uint64_t seed = rng.next_u64();
    const double expected = env.play(lam, s.skill(), seed).raw_reward;
    EXPECT_EQ(s.respond(env, lam, seed).raw_reward, expected);
    EXPECT_GE(s.skill(), prev);
    prev = s.skill();
  }
  EXPECT_THROW(ScriptedZpdStudent({.zone_width = 0.0}), InvalidArgument);
}

TEST(ZpdTrainee, EvaluateDoesNotLearnAndCheckpointRoundTrips) {
  ZpdTrainee t({.skill = -1.0, .learn_rate = 0.1, .zone_width = 0.5});
  const auto before = t.digest();
  t.evaluate(level_for(-1.0), 1);
  EXPECT_EQ(t.digest(), before);
  t.play(level_for(-1.0), 1);
  EXPECT_NE(t.digest(), before);
  EXPECT_NEAR(*t.skill(), -0.9, 1e-12);
  const auto p = ZpdTrainee::params_from_checkpoint(t.to_checkpoint());
  EXPECT_EQ(p.skill, *t.skill());
  EXPECT_EQ(p.learn_rate, 0.1);
}

TEST(PolicyGradient, SoftmaxExamples) {
  const std::vector<double> zero(4, 0.0);
  for (double lp : log_softmax(zero)) EXPECT_NEAR(std::exp(lp), 0.25, 1e-15);
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> logits(4);
    for (auto& l : logits) l = rng.uniform(-50, 50);
    double sum = 0.0;
    for (double lp : log_softmax(logits)) sum += std::exp(lp);
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  EXPECT_THROW(log_softmax(std::vector<double>{0.0, 1.0}), ShapeError);
}

TEST(PolicyGradient, ProbabilitiesSumToOneAndGreedyIsArgmax) {
  const PolicyGradientStudent s({.seed = 4});
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const auto o = random_obs(rng);
    const auto p = s.action_probabilities(o);
    double sum = 0.0;
    for (double v : p) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    const auto best = std::max_element(p.begin(), p.end()) - p.begin();
    EXPECT_EQ(static_cast<int>(s.act_greedy(o)), best);
  }
  auto bad = random_obs(rng);
  bad[3] = std::nan("");
  EXPECT_THROW(s.action_probabilities(bad), NonFiniteError);
}

TEST(PolicyGradient, SamplingDeterministicGivenSeed) {
  const PolicyGradientStudent s({.seed = 5});
  Rng obs_rng(3);
  const auto o = random_obs(obs_rng);
  std::vector<env::LanderAction> a, b;
  Rng r1(9), r2(9);
  for (int i = 0; i < 50; ++i) {
    a.push_back(s.sample(o, r1));
    b.push_back(s.sample(o, r2));
  }
  EXPECT_EQ(a, b);
}

TEST(PolicyGradient, AdvantageExamples) {
  const std::vector<double> r1{1.0}, v0{0.0};
  EXPECT_EQ(compute_advantages(r1, v0, 0.99, 0.95), std::vector<double>{1.0});
  // Two steps: delta_1 = r1 - v1, delta_0 = r0 + g v1 - v0, A_0 = delta_0 + g l delta_1.
  const std::vector<double> r{0.5, 2.0}, v{0.3, 0.7};
  const double g = 0.9, l = 0.8;
  const double d1 = 2.0 - 0.7, d0 = 0.5 + g * 0.7 - 0.3;
  const auto a = compute_advantages(r, v, g, l);
  EXPECT_NEAR(a[1], d1, 1e-15);
  EXPECT_NEAR(a[0], d0 + g * l * d1, 1e-15);
  EXPECT_THROW(compute_advantages(r, v0, g, l), ShapeError);
}

TEST(PolicyGradient, ZeroAdvantageLeavesPolicyUnchanged) {
  PolicyGradientStudent s({.entropy_coef = 0.0, .shaping = 0.0, .seed = 6});
  const double gamma = s.hyper().discount;
  Rng rng(4);
  std::vector<env::LanderObservation> obs;
  for (int i = 0; i < 6; ++i) obs.push_back(random_obs(rng));
  // r_t = V(s_t) - gamma V(s_{t+1}) makes every TD residual zero.
  for (std::size_t t = 0; t < obs.size(); ++t) {
    s.act(obs[t], rng);
    const double next = t + 1 < obs.size() ? s.value(obs[t + 1]) : 0.0;
    s.observe(s.value(obs[t]) - gamma * next, t + 1 == obs.size());
  }
  const auto before = flatten(s.policy_params());
  const auto value_before = flatten(s.value_params());
  s.update();
  const auto after = flatten(s.policy_params());
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_NEAR(after[i], before[i], 1e-9);
  EXPECT_NE(flatten(s.value_params()), value_before);
}

TEST(PolicyGradient, UpdateKeepsParametersFiniteAndClearsBuffer) {
  PolicyGradientStudent s({.seed = 7});
  env::Lander lander;
  EXPECT_THROW(s.update(), InvalidArgument);
  s.run_episode(lander, std::vector<double>{15.0, 6.0}, 1);
  s.run_episode(lander, std::vector<double>{4.0, -9.0}, 2);
  EXPECT_EQ(s.buffered_episodes(), 2u);
  const auto digest = s.digest();
  const auto summary = s.update();
  EXPECT_GT(summary.transitions, 0u);
  EXPECT_EQ(s.buffered_transitions(), 0u);
  EXPECT_EQ(s.buffered_episodes(), 0u);
  EXPECT_NE(s.digest(), digest);
  for (double v : flatten(s.policy_params())) EXPECT_TRUE(std::isfinite(v));
  for (double v : flatten(s.value_params())) EXPECT_TRUE(std::isfinite(v));
  EXPECT_THROW(s.update(), InvalidArgument);
  EXPECT_THROW(s.observe(1.0, true), InvalidArgument);
}

TEST(PolicyGradient, CheckpointRoundTrip) {
  PolicyGradientStudent s({.seed = 8});
  env::Lander lander;
  s.run_episode(lander, std::vector<double>{10.0, 0.0}, 1);
  s.update();
  const auto back = PolicyGradientStudent::from_checkpoint(s.to_checkpoint());
  EXPECT_EQ(back.digest(), s.digest());
  EXPECT_EQ(store::encode_checkpoint(back.to_checkpoint()),
            store::encode_checkpoint(s.to_checkpoint()));
  Rng rng(1);
  const auto o = random_obs(rng);
  EXPECT_EQ(back.action_probabilities(o), s.action_probabilities(o));
  store::Checkpoint wrong = s.to_checkpoint();
  wrong.kind = "zpd-student";
  EXPECT_THROW(PolicyGradientStudent::from_checkpoint(wrong), store::CorruptError);
}

TEST(LanderTrainee, EvaluateIsFrozenAndDeterministic) {
  LanderTrainee t({.seed = 9});
  const std::vector<double> lam{8.0, 3.0};
  const auto digest = t.digest();
  const auto a = t.evaluate(lam, 4), b = t.evaluate(lam, 4);
  EXPECT_EQ(a.raw_reward, b.raw_reward);
  EXPECT_EQ(a.episode_length, b.episode_length);
  EXPECT_EQ(t.digest(), digest);
  t.end_block();  // empty buffer: no update
  EXPECT_EQ(t.digest(), digest);
  t.play(lam, 1);
  t.end_block();
  EXPECT_NE(t.digest(), digest);
}

TEST(LanderTrainee, LearnsEasyLanderInMostSeeds) {
  const std::vector<double> easy{3.0, 0.0};
  int learned = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    LanderTrainee t({.seed = seed});
    Rng rng(seed);
    double tail = 0.0;
    int tail_n = 0;
    for (int update = 0; update < 300; ++update) {
      for (int e = 0; e < 4; ++e) {
        const double r = t.play(easy, rng.next_u64()).raw_reward;
        if (update >= 290) {
          tail += r;
          ++tail_n;
        }
      }
      t.end_block();
    }
    const double mean = tail / tail_n;
    std::printf("seed %llu: mean return over final 10 updates %.1f\n",
                static_cast<unsigned long long>(seed), mean);
    learned += mean > 0.0;
  }
  EXPECT_GE(learned, 4);
}
