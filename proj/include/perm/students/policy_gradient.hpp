// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "perm/env/environments.hpp"
#include "perm/grad/adam.hpp"
#include "perm/model/mlp.hpp"
#include "perm/rng.hpp"
#include "perm/store/checkpoint.hpp"

namespace perm::students {

inline constexpr std::size_t kActionCount = 4;

struct PgHyper {
  std::vector<std::size_t> hidden = {32, 32};
  double discount = 0.99;
  double advantage_mixing = 0.95;  // GAE lambda
  double clip = 0.2;
  std::size_t epochs = 4;
  std::size_t minibatch = 64;
  double lr = 1e-3;
  double entropy_coef = 0.01;
  // Student-side dense shaping: adds shaping * (phi(s') - phi(s)) with
  // phi(s) = -(|vy| + |vx| + 0.5 |x| + 0.5 y) to the learner's reward. The
  // environment reward reported to the teacher is unchanged.
  double shaping = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

store::Json to_json(const PgHyper& h);
PgHyper pg_hyper_from_json(const store::Json& j);

struct PgLossSummary {
  double policy_objective = 0.0;  // mean clipped surrogate
  double value_loss = 0.0;        // mean squared error
  double entropy = 0.0;
  double clip_fraction = 0.0;
  std::size_t transitions = 0;
};

// Generalized advantage estimation over one episode. `values` has one
// entry per step; the value after a terminal step is 0.
std::vector<double> compute_advantages(std::span<const double> rewards,
                                       std::span<const double> values, double discount,
                                       double mixing);

// Log-probabilities of a softmax over logits.
std::array<double, kActionCount> log_softmax(std::span<const double> logits);

// Clipped-surrogate policy-gradient learner with a separate value network.
// The value baseline stays private to the student.
class PolicyGradientStudent {
 public:
  explicit PolicyGradientStudent(PgHyper hyper = {});

  const PgHyper& hyper() const { return hyper_; }

  std::array<double, kActionCount> action_probabilities(const env::LanderObservation& obs) const;
  double value(const env::LanderObservation& obs) const;

  // Samples from the policy and buffers the transition.
  env::LanderAction act(const env::LanderObservation& obs, Rng& rng);
  env::LanderAction act_greedy(const env::LanderObservation& obs) const;
  // Draws an action without touching the buffer.
  env::LanderAction sample(const env::LanderObservation& obs, Rng& rng) const;

  // Reward for the most recent act(); `done` closes the episode.
  void observe(double reward, bool done);

  std::size_t buffered_transitions() const { return obs_.size(); }
  std::size_t buffered_episodes() const { return episode_ends_.size(); }
  void clear_buffer();

  // Needs at least one complete episode. Clears the buffer.
  PgLossSummary update();

  // Runs one training episode on `lander`, buffering every transition.
  env::EpisodeResult run_episode(env::Lander& lander, std::span<const double> lambda_raw,
                                 std::uint64_t seed);
  // Frozen-policy episode; greedy unless `rng` is given.
  env::EpisodeResult evaluate_episode(std::span<const double> lambda_raw, std::uint64_t seed,
                                      bool greedy) const;

  const std::vector<ad::Tensor>& policy_params() const { return policy_; }
  const std::vector<ad::Tensor>& value_params() const { return value_; }
  std::string digest() const;

  store::Checkpoint to_checkpoint() const;
  static PolicyGradientStudent from_checkpoint(const store::Checkpoint& c);

 private:
  static std::array<double, 7> features(const env::LanderObservation& obs);
  static double potential(const env::LanderObservation& obs);

  PgHyper hyper_;
  model::MlpShape policy_shape_, value_shape_;
  std::vector<ad::Tensor> policy_, value_;
  ad::Adam policy_opt_, value_opt_;

  std::vector<std::array<double, 7>> obs_;
  std::vector<std::size_t> actions_;
  std::vector<double> logp_, values_, rewards_;
  std::vector<std::size_t> episode_ends_;  // exclusive end index per episode
};

inline constexpr const char* kPgCheckpointKind = "pg-student";

}  // namespace perm::students
