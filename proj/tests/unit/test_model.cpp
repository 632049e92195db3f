// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "perm/env/environments.hpp"
#include "perm/error.hpp"
#include "perm/grad/grad_check.hpp"
#include "perm/model/perm_model.hpp"
#include "perm/rng.hpp"

using namespace perm;
using namespace perm::model;
namespace fs = std::filesystem;

namespace {

// Synthetic records from a population of fixed-skill students; responses
// are the raw reward over 3.
std::vector<Observation> synthetic_observations(
    std::size_t n, std::uint64_t seed,
    env::ParamSpace space = env::SyntheticEnv::default_space()) {
  const env::SyntheticEnv env(std::move(space));
  Rng rng(seed);
  std::vector<Observation> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto lam = env.space().sample_uniform(rng);
    const double skill = rng.uniform(-2.0, 2.0);
    const double r = env.play(lam, skill, rng.next_u64()).raw_reward / 3.0;
    out.push_back({r, env.space().normalize(lam).value});
  }
  return out;
}

PermConfig small_config(ResponseLink link = ResponseLink::mlp) {
  PermConfig c;
  c.hidden = {8, 8};
  c.response_link = link;
  c.seed = 3;
  return c;
}

double full_elbo_grad_error(const PermModel& m, std::span<const Observation> batch,
                            std::uint64_t seed) {
  Rng rng(seed);
  const auto noise = ElboNoise::draw(batch.size(), m.latent_dim(), rng);
  const auto& w = m.weights();
  const ad::TapeFunction f = [&](ad::Tape& t, std::span<const ad::Var> vars) {
    return elbo_on_tape(t, vars, m.config(), m.layout(), w.r_mean, w.r_std, batch, noise);
  };
  return ad::grad_check(f, w.tensors, 1e-5).max_relative_error;
}

// Zeroes a sub-network's output layer and sets its stddev-head biases.
void set_output_layer(PermWeights& w, std::size_t begin, const MlpShape& shape, double sd_bias) {
  auto& weight = w.tensors[begin + 2 * (shape.layers() - 1)];
  auto& bias = w.tensors[begin + 2 * (shape.layers() - 1) + 1];
  weight = ad::Tensor::zeros(weight.shape());
  std::vector<double> b(bias.size(), 0.0);
  for (std::size_t i = shape.out / 2; i < shape.out; ++i) b[i] = sd_bias;
  bias = ad::Tensor(bias.shape(), b);
}

class TrainedModel : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    PermConfig c;
    c.hidden = {32, 32};
    c.response_link = ResponseLink::linear_margin;
    c.seed = 11;
    model_ = new PermModel(c, env::SyntheticEnv::default_space());
    const auto data = synthetic_observations(3000, 5);
    std::span<const Observation> all(data);
    FitOptions fo;
    fo.steps = 1500;
    fo.patience = 0;
    fit(*model_, all.subspan(0, 2500), all.subspan(2500), fo);
  }
  static void TearDownTestSuite() {
    delete model_;
    model_ = nullptr;
  }
  static PermModel* model_;
};

PermModel* TrainedModel::model_ = nullptr;

}  // namespace

TEST(PermModel, FullElboGradCheck) {
  const auto data = synthetic_observations(4, 1);
  for (auto link : {ResponseLink::mlp, ResponseLink::linear_margin}) {
    PermModel m(small_config(link), env::SyntheticEnv::default_space());
    EXPECT_LE(full_elbo_grad_error(m, data, 2), 1e-4) << to_string(link);
  }
  PermConfig two = small_config();
  two.latent_dim = 2;
  PermModel m2(two, env::SyntheticEnv::default_space());
  EXPECT_LE(full_elbo_grad_error(m2, data, 3), 1e-4);
}

TEST(PermModel, EncodersDeterministicWithLatentShape) {
  PermConfig c = small_config();
  c.latent_dim = 3;
  const PermModel m(c, env::SyntheticEnv::default_space());
  const std::vector<double> lam{0.2};
  const auto a = m.encode_difficulty(0.4, lam);
  EXPECT_EQ(a, m.encode_difficulty(0.4, lam));
  EXPECT_EQ(a.dim(), 3u);
  const auto q = m.encode_ability(a.mean(), 0.4, lam);
  EXPECT_EQ(q, m.encode_ability(a.mean(), 0.4, lam));
  EXPECT_EQ(q.dim(), 3u);
  EXPECT_THROW(m.encode_difficulty(std::nan(""), lam), NonFiniteError);
  EXPECT_THROW(m.encode_difficulty(0.0, std::vector<double>{0.5, 0.5}), ShapeError);
  EXPECT_THROW(m.decode_response(std::vector<double>{0.0}, a.mean()), ShapeError);
}

TEST(PermModel, ZeroOutputLayerGivesInputIndependentPosterior) {
  PermModel m(small_config(), env::SyntheticEnv::default_space());
  auto w = m.weights();
  set_output_layer(w, m.layout().enc_d_begin, m.layout().enc_d, 0.0);
  m.set_weights(w);
  const double want_sd = std::log(2.0) + irt::kStddevFloor;
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const auto g = m.encode_difficulty(rng.uniform(-3, 3), {{rng.uniform()}});
    EXPECT_EQ(g.mean()[0], 0.0);
    EXPECT_NEAR(g.stddev()[0], want_sd, 1e-15);
  }
}

TEST(PermModel, PriorEncodersGiveZeroKl) {
  PermModel m(small_config(), env::SyntheticEnv::default_space());
  auto w = m.weights();
  // softplus(b) + floor = 1
  const double b = std::log(std::expm1(1.0 - irt::kStddevFloor));
  set_output_layer(w, m.layout().enc_d_begin, m.layout().enc_d, b);
  set_output_layer(w, m.layout().enc_a_begin, m.layout().enc_a, b);
  m.set_weights(w);
  Rng rng(5);
  const auto t = m.elbo(synthetic_observations(16, 6), rng);
  EXPECT_NEAR(t.kl_a, 0.0, 1e-12);
  EXPECT_NEAR(t.kl_d, 0.0, 1e-12);
}

TEST(PermModel, KlNonNegativeAndTotalConsistent) {
  const PermModel m(small_config(), env::SyntheticEnv::default_space());
  Rng rng(7);
  for (int i = 0; i < 20; ++i) {
    const auto t = m.elbo(synthetic_observations(8, 100 + i), rng);
    EXPECT_GE(t.kl_a, 0.0);
    EXPECT_GE(t.kl_d, 0.0);
    EXPECT_NEAR(t.total, t.recon_r + t.recon_lambda - t.kl_a - t.kl_d, 1e-12);
  }
  EXPECT_THROW(m.elbo(std::vector<Observation>{}, rng), InvalidArgument);
}

TEST(PermModel, LinearMarginLink) {
  PermModel m(small_config(ResponseLink::linear_margin), env::SyntheticEnv::default_space());
  auto w = m.weights();
  const std::size_t i = m.layout().dec_r_begin;
  w.tensors[i] = ad::Tensor::matrix(1, 1, {0.7});
  w.tensors[i + 1] = ad::Tensor::matrix(1, 1, {-0.25});
  m.set_weights(w);
  for (double x : {-2.0, 0.0, 1.5}) {
    const std::vector<double> v{x};
    EXPECT_NEAR(m.decode_response(v, v).mean()[0], -0.25, 1e-15);
  }
  const std::vector<double> d{0.3};
  double prev = -1e9;
  for (double a = -3.0; a <= 3.0; a += 0.25) {
    const double mean = m.decode_response(std::vector<double>{a}, d).mean()[0];
    EXPECT_NEAR(mean, 0.7 * (a - 0.3) - 0.25, 1e-12);
    EXPECT_GT(mean, prev);
    prev = mean;
  }
}

TEST(PermModel, DecodedParamsInsideUnitBox) {
  const PermModel m(small_config(), env::SyntheticEnv::default_space());
  for (double d = -50.0; d <= 50.0; d += 2.5) {
    const auto g = m.decode_params(std::vector<double>{d});
    EXPECT_EQ(g, m.decode_params(std::vector<double>{d}));
    for (double u : g.mean()) {
      EXPECT_GE(u, 0.0);
      EXPECT_LE(u, 1.0);
    }
  }
}

TEST(PermModel, InferAbilitySingleSampleIsConditionalPosterior) {
  PermConfig c = small_config();
  c.mc_samples = 1;
  const PermModel m(c, env::SyntheticEnv::default_space());
  const std::vector<double> lam{0.3};
  FixedNoise noise({0.8});
  const auto got = m.infer_ability(0.5, lam, noise);
  const auto qd = m.encode_difficulty(0.5, lam);
  const std::vector<double> d{qd.mean()[0] + qd.stddev()[0] * 0.8};
  const auto want = m.encode_ability(d, 0.5, lam);
  EXPECT_NEAR(got.mean()[0], want.mean()[0], 1e-12);
  EXPECT_NEAR(got.stddev()[0], want.stddev()[0], 1e-12);
}

TEST(PermModel, InferAbilityMomentMatchingProperty) {
  PermConfig c = small_config();
  c.mc_samples = 4;
  const PermModel m(c, env::SyntheticEnv::default_space());
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> lam{rng.uniform()};
    const double r = rng.uniform(-2, 2);
    const std::vector<double> z{rng.standard_normal(), rng.standard_normal(),
                                rng.standard_normal(), rng.standard_normal()};
    FixedNoise noise(z);
    const auto mix = m.infer_ability(r, lam, noise);
    const auto qd = m.encode_difficulty(r, lam);
    double mean = 0.0, var = 0.0;
    for (double zi : z) {
      const std::vector<double> d{qd.mean()[0] + qd.stddev()[0] * zi};
      const auto comp = m.encode_ability(d, r, lam);
      mean += comp.mean()[0] / 4.0;
      var += comp.stddev()[0] * comp.stddev()[0] / 4.0;
    }
    EXPECT_NEAR(mix.mean()[0], mean, 1e-12);
    EXPECT_GE(mix.stddev()[0] * mix.stddev()[0], var - 1e-12);
  }
}

TEST(PermModel, GenerateLambdaInBoundsAndMeanMode) {
  const PermModel m(small_config(), env::Lander::default_space());
  Rng rng(9);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> d{rng.uniform(-5, 5)};
    EXPECT_TRUE(m.space().contains(m.generate_lambda(d, rng)));
    const auto lam = m.generate_lambda_mean(d);
    EXPECT_EQ(lam, m.generate_lambda_mean(d));
    const auto unit = m.decode_params(d).mean();
    const auto want = m.space().denormalize(unit);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(lam[k], want[k], 1e-12);
  }
}

TEST(PermModel, TrainStepDeterministicAndZeroRateNoop) {
  const auto data = synthetic_observations(64, 10);
  auto run = [&](double lr) {
    PermConfig c = small_config();
    c.learning_rate = lr;
    PermModel m(c, env::SyntheticEnv::default_space());
    Rng rng(1);
    std::vector<double> trace;
    for (int s = 0; s < 20; ++s) trace.push_back(m.train_step(data, rng, s).total);
    return std::make_pair(trace, m.weights());
  };
  const auto a = run(1e-3), b = run(1e-3);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  const PermModel fresh(small_config(), env::SyntheticEnv::default_space());
  EXPECT_EQ(run(0.0).second, fresh.weights());
  EXPECT_NE(a.second, fresh.weights());
}

TEST(PermModel, NonFiniteBatchAbortsStep) {
  PermModel m(small_config(), env::SyntheticEnv::default_space());
  const auto before = m.weights();
  std::vector<Observation> bad = synthetic_observations(4, 11);
  bad[2].r = std::numeric_limits<double>::infinity();
  Rng rng(1);
  EXPECT_THROW(m.train_step(bad, rng, 42), NonFiniteError);
  EXPECT_EQ(m.weights(), before);
}

TEST(PermModel, SmoothedElboRisesDuringTraining) {
  PermConfig c;
  c.seed = 2;
  PermModel m(c, env::SyntheticEnv::default_space());
  const auto data = synthetic_observations(2000, 12);
  FitOptions fo;
  fo.steps = 500;
  fo.patience = 0;
  const auto res = fit(m, data, {}, fo);
  ASSERT_EQ(res.train_trace.size(), 500u);
  // Trailing 50-step mean at every step, compared with the mean one
  // window earlier.
  constexpr std::size_t kWindow = 50;
  std::vector<double> smooth;
  double acc = 0.0;
  for (std::size_t t = 0; t < res.train_trace.size(); ++t) {
    acc += res.train_trace[t].total;
    if (t >= kWindow) acc -= res.train_trace[t - kWindow].total;
    if (t + 1 >= kWindow) smooth.push_back(acc / kWindow);
  }
  std::size_t rising = 0, total = 0;
  for (std::size_t t = kWindow; t < smooth.size(); ++t, ++total) {
    rising += smooth[t] >= smooth[t - kWindow];
  }
  std::printf("smoothed ELBO rising in %zu of %zu windows\n", rising, total);
  EXPECT_GE(static_cast<double>(rising), 0.9 * static_cast<double>(total));
}

TEST(PermModel, IwEvidenceDeterministicAndSingleSampleMatchesElbo) {
  const PermModel m(small_config(), env::SyntheticEnv::default_space());
  const auto batch = synthetic_observations(32, 13);
  Rng a(5), b(5);
  EXPECT_EQ(m.iw_log_evidence(batch, 8, a), m.iw_log_evidence(batch, 8, b));
  EXPECT_THROW(m.iw_log_evidence(batch, 0, a), InvalidArgument);
  // K = 1 is an unbiased single-sample ELBO; compare means over many draws.
  double iw = 0.0, elbo = 0.0;
  const int reps = 400;
  Rng r1(6), r2(7);
  for (int i = 0; i < reps; ++i) {
    iw += m.iw_log_evidence(batch, 1, r1) / reps;
    elbo += m.elbo(batch, r2).total / reps;
  }
  EXPECT_NEAR(iw, elbo, 0.02 * std::abs(elbo) + 0.02);
}

TEST(PermModel, CheckpointRoundTrip) {
  const fs::path dir = fs::path(PERM_TEST_TMP) / "model";
  fs::create_directories(dir);
  PermModel m(small_config(), env::Lander::default_space());
  m.set_response_stats(0.3, 1.7);
  Rng rng(1);
  m.train_step(synthetic_observations(16, 14, env::Lander::default_space()), rng);
  m.save(dir / "m.ckpt");
  const auto back = PermModel::load(dir / "m.ckpt");
  EXPECT_EQ(back.weights(), m.weights());
  EXPECT_EQ(back.config(), m.config());
  EXPECT_EQ(back.space(), m.space());
  const std::vector<double> lam{0.1, 0.8};
  Rng n1(3), n2(3);
  EXPECT_EQ(back.infer_ability(0.2, lam, n1), m.infer_ability(0.2, lam, n2));
  back.save(dir / "m2.ckpt");
  EXPECT_EQ(store::file_sha256(dir / "m.ckpt"), store::file_sha256(dir / "m2.ckpt"));
  try {
    PermModel::load(dir / "m.ckpt", 2);
    FAIL() << "expected ShapeMismatch";
  } catch (const store::ShapeMismatch& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("1"), std::string::npos);
    EXPECT_NE(what.find("2"), std::string::npos);
  }
}

TEST_F(TrainedModel, DifficultyOrdering) {
  const std::vector<double> easy{0.0}, hard{1.0};
  const double r = 0.0;
  EXPECT_GT(model_->encode_difficulty(r, hard).mean()[0], model_->encode_difficulty(r, easy).mean()[0]);
}

TEST_F(TrainedModel, AbilityIncreasesWithResponse) {
  for (double u : {0.2, 0.5, 0.8}) {
    const std::vector<double> lam{u};
    double prev = -1e9;
    for (double r = -0.6; r <= 0.6; r += 0.2) {
      const auto d = model_->encode_difficulty(r, lam).mean();
      const double a = model_->encode_ability(d, r, lam).mean()[0];
      EXPECT_GT(a, prev) << u << " " << r;
      prev = a;
    }
  }
}

TEST_F(TrainedModel, GeneratedLevelsTrackTargetDifficulty) {
  const env::SyntheticEnv env;
  const auto low = model_->generate_lambda_mean(std::vector<double>{-1.0});
  const auto high = model_->generate_lambda_mean(std::vector<double>{1.0});
  EXPECT_GT(env.true_difficulty(high), env.true_difficulty(low));
}
