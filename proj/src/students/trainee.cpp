// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/students/trainee.hpp"

#include <cstring>
#include <utility>
#include <vector>

namespace perm::students {

ZpdTrainee::ZpdTrainee(ZpdParams params, env::SyntheticEnv env, std::string id)
    : student_(params), env_(std::move(env)), id_(std::move(id)) {}

env::EpisodeResult ZpdTrainee::play(std::span<const double> lambda_raw, std::uint64_t seed) {
  return student_.respond(env_, lambda_raw, seed);
}

env::EpisodeResult ZpdTrainee::evaluate(std::span<const double> lambda_raw,
                                        std::uint64_t seed) const {
  return student_.probe(env_, lambda_raw, seed);
}

std::string ZpdTrainee::digest() const {
  const auto& p = student_.params();
  const double v[3] = {p.skill, p.learn_rate, p.zone_width};
  std::vector<unsigned char> bytes(sizeof v);
  std::memcpy(bytes.data(), v, sizeof v);
  return store::sha256_hex(bytes);
}

store::Checkpoint ZpdTrainee::to_checkpoint() const {
  const auto& p = student_.params();
  store::Checkpoint c;
  c.kind = kZpdCheckpointKind;
  c.meta["id"] = id_;
  c.add("zpd", ad::Tensor({1, 3}, {p.skill, p.learn_rate, p.zone_width}));
  return c;
}

ZpdParams ZpdTrainee::params_from_checkpoint(const store::Checkpoint& c) {
  if (c.kind != kZpdCheckpointKind) {
    throw store::CorruptError("checkpoint kind '" + c.kind + "' is not " + kZpdCheckpointKind);
  }
  const auto t = c.tensor("zpd", {1, 3});
  ZpdParams p{t.at(0, 0), t.at(0, 1), t.at(0, 2)};
  p.validate();
  return p;
}

LanderTrainee::LanderTrainee(PgHyper hyper, env::ParamSpace space, std::string id)
    : LanderTrainee(PolicyGradientStudent(std::move(hyper)), std::move(space), std::move(id)) {}

LanderTrainee::LanderTrainee(PolicyGradientStudent student, env::ParamSpace space,
                             std::string id)
    : student_(std::move(student)), lander_(std::move(space)), id_(std::move(id)) {}

env::EpisodeResult LanderTrainee::play(std::span<const double> lambda_raw, std::uint64_t seed) {
  return student_.run_episode(lander_, lambda_raw, seed);
}

void LanderTrainee::end_block() {
  if (student_.buffered_episodes() > 0) last_ = student_.update();
}

env::EpisodeResult LanderTrainee::evaluate(std::span<const double> lambda_raw,
                                           std::uint64_t seed) const {
  env::Lander lander(lander_.space());
  auto obs = lander.reset(lambda_raw, seed);
  while (!lander.done()) obs = lander.step(student_.act_greedy(obs)).observation;
  return {lander.episode_return(), lander.steps(), lander.terminal()};
}

}  // namespace perm::students
