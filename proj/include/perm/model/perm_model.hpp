// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "perm/env/param_space.hpp"
#include "perm/grad/adam.hpp"
#include "perm/grad/tape.hpp"
#include "perm/irt/irt.hpp"
#include "perm/model/mlp.hpp"
#include "perm/rng.hpp"
#include "perm/store/checkpoint.hpp"
#include "perm/store/records.hpp"

namespace perm::model {

using irt::Gaussian;

enum class ResponseLink { mlp, linear_margin };

std::string to_string(ResponseLink link);
ResponseLink response_link_from_string(const std::string& s);

struct PermConfig {
  std::size_t latent_dim = 1;
  std::vector<std::size_t> hidden = {64, 64};
  ResponseLink response_link = ResponseLink::mlp;
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  std::size_t mc_samples = 16;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const PermConfig&) const = default;
};

store::Json to_json(const PermConfig& c);
// Rejects unknown keys; missing keys take defaults.
PermConfig perm_config_from_json(const store::Json& j);

// One training observation: normalized response and normalized parameters.
struct Observation {
  double r = 0.0;
  std::vector<double> lambda;
};

Observation observation_of(const store::InteractionRecord& rec);
std::vector<Observation> observations_of(std::span<const store::InteractionRecord> recs);

struct ElboTerms {
  double recon_r = 0.0;
  double recon_lambda = 0.0;
  double kl_a = 0.0;
  double kl_d = 0.0;
  double total = 0.0;
};

// Every trainable tensor plus the response standardization applied to
// encoder inputs. Tensor order: encoder-d, encoder-a, decoder-r,
// decoder-lambda.
struct PermWeights {
  std::vector<std::string> names;
  std::vector<ad::Tensor> tensors;
  double r_mean = 0.0;
  double r_std = 1.0;

  bool operator==(const PermWeights&) const = default;
};

// Index ranges of each sub-network inside PermWeights::tensors.
struct PermLayout {
  MlpShape enc_d, enc_a, dec_r, dec_lambda;
  std::size_t enc_d_begin = 0, enc_a_begin = 0, dec_r_begin = 0, dec_lambda_begin = 0, end = 0;

  static PermLayout make(const PermConfig& c, std::size_t lambda_dim);
};

// Per-record noise for one ELBO evaluation, [batch x n] each.
struct ElboNoise {
  ad::Tensor d;
  ad::Tensor a;

  static ElboNoise draw(std::size_t batch, std::size_t n, NoiseSource& noise);
};

// Batch-mean ELBO as a tape expression over the given weight nodes.
// Samples d first and feeds the sampled d to the ability encoder.
ad::Var elbo_on_tape(ad::Tape& tape, std::span<const ad::Var> weights, const PermConfig& config,
                     const PermLayout& layout, double r_mean, double r_std,
                     std::span<const Observation> batch, const ElboNoise& noise,
                     ElboTerms* terms = nullptr);

// Interface consumed by curriculum runners and the session service.
class AbilityModel {
 public:
  virtual ~AbilityModel() = default;
  virtual std::size_t latent_dim() const = 0;
  virtual const env::ParamSpace& space() const = 0;
  // Posterior over ability given a normalized response and normalized
  // parameters.
  virtual Gaussian infer_ability(double r, std::span<const double> lambda_norm,
                                 NoiseSource& noise) const = 0;
  // Raw, in-bounds parameters for a target difficulty.
  virtual std::vector<double> generate_lambda(std::span<const double> d_target,
                                              NoiseSource& noise) const = 0;
};

class PermModel final : public AbilityModel {
 public:
  PermModel(PermConfig config, env::ParamSpace space);

  const PermConfig& config() const { return config_; }
  const PermLayout& layout() const { return layout_; }
  std::size_t latent_dim() const override { return config_.latent_dim; }
  const env::ParamSpace& space() const override { return space_; }
  const PermWeights& weights() const { return weights_; }
  void set_weights(PermWeights w);
  void set_response_stats(double mean, double stddev);

  Gaussian encode_difficulty(double r, std::span<const double> lambda_norm) const;
  Gaussian encode_ability(std::span<const double> d, double r,
                          std::span<const double> lambda_norm) const;
  Gaussian decode_response(std::span<const double> a, std::span<const double> d) const;
  Gaussian decode_params(std::span<const double> d) const;

  ElboTerms elbo(std::span<const Observation> batch, NoiseSource& noise) const;
  // One Adam ascent step on the batch-mean ELBO. Returns the terms of the
  // batch as evaluated before the step. A non-finite loss or gradient
  // aborts the step, leaves the weights untouched and throws
  // NonFiniteError naming `batch_id`.
  ElboTerms train_step(std::span<const Observation> batch, NoiseSource& noise,
                       std::uint64_t batch_id = 0);
  void set_learning_rate(double lr);

  // Moment-matched mixture over mc_samples draws of d.
  Gaussian infer_ability(double r, std::span<const double> lambda_norm,
                         NoiseSource& noise) const override;
  std::vector<double> generate_lambda(std::span<const double> d_target,
                                      NoiseSource& noise) const override;
  // Diagnostic mode: the decoder's stddev is ignored and the mean is used.
  std::vector<double> generate_lambda_mean(std::span<const double> d_target) const;

  // Importance-weighted estimate of log p(r, lambda) per record, averaged
  // over the batch, with K posterior samples.
  double iw_log_evidence(std::span<const Observation> batch, std::size_t k,
                         NoiseSource& noise) const;

  store::Checkpoint to_checkpoint() const;
  static PermModel from_checkpoint(const store::Checkpoint& c,
                                   std::optional<std::size_t> expected_latent_dim = {});
  void save(const std::filesystem::path& path) const;
  static PermModel load(const std::filesystem::path& path,
                        std::optional<std::size_t> expected_latent_dim = {});

 private:
  PermConfig config_;
  env::ParamSpace space_;
  PermLayout layout_;
  PermWeights weights_;
  ad::Adam adam_;
};

struct FitOptions {
  std::size_t steps = 2000;
  // Holdout ELBO is evaluated every `eval_every` steps with fixed noise.
  std::size_t eval_every = 100;
  // Stop after this many evaluations without improvement; 0 disables.
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  // Fit the encoder's response standardization on the training split.
  bool fit_response_stats = true;
};

struct FitResult {
  std::vector<ElboTerms> train_trace;  // one entry per step
  std::vector<double> holdout_elbo;    // one entry per evaluation
  std::size_t steps_run = 0;
  bool early_stopped = false;
};

// Mini-batch training over shuffled epochs. When a holdout is given the
// weights with the best holdout ELBO are kept.
FitResult fit(PermModel& model, std::span<const Observation> train,
              std::span<const Observation> holdout, const FitOptions& options);

inline constexpr const char* kPermCheckpointKind = "perm-model";

store::Json to_json(const env::ParamSpace& s);
env::ParamSpace param_space_from_json(const store::Json& j);

}  // namespace perm::model
