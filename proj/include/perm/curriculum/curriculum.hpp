// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "perm/env/normalizer.hpp"
#include "perm/model/perm_model.hpp"
#include "perm/rng.hpp"
#include "perm/store/records.hpp"
#include "perm/students/trainee.hpp"

namespace perm::curriculum {

enum class Mode { perm_online, perm_offline, dr };
enum class AbilityMode { sample, mean };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);
std::string to_string(AbilityMode m);
AbilityMode ability_mode_from_string(const std::string& s);

struct CurriculumConfig {
  Mode mode = Mode::perm_online;
  std::size_t k = 32;
  // Uniform episodes before ability-matched generation starts. Episode 0
  // is always uniform.
  std::size_t warmup = 64;
  std::size_t total_episodes = 1000;
  // Environment-step budget; 0 means episodes only.
  std::int64_t total_steps = 0;
  // 0 evaluates only at the end.
  std::size_t eval_every = 0;
  std::vector<std::vector<double>> eval_set;
  std::size_t eval_episodes = 10;
  std::uint64_t seed = 0;
  AbilityMode ability_mode = AbilityMode::sample;
  // Adam steps on the last k records per online update.
  std::size_t perm_update_steps = 5;
  env::NormalizerConfig normalizer;
  // Ends the run once the student's ground-truth skill reaches this value.
  std::optional<double> stop_at_skill;

  void validate() const;
  bool operator==(const CurriculumConfig&) const = default;
};

store::Json to_json(const CurriculumConfig& c);
// Rejects unknown keys.
CurriculumConfig curriculum_config_from_json(const store::Json& j);

struct EpisodeRow {
  std::int64_t episode_index = 0;
  std::vector<double> lambda_raw;
  std::vector<double> lambda_normalized;
  double raw_reward = 0.0;
  double response = 0.0;  // normalized r
  std::int64_t episode_length = 1;
  env::TerminalKind terminal = env::TerminalKind::synthetic;
  // Difficulty this episode's parameters were generated for; empty for
  // uniform episodes.
  std::vector<double> difficulty_target;
  // Posterior after this episode and the ability drawn from it; empty when
  // no inference ran.
  std::vector<double> ability_mean;
  std::vector<double> ability_stddev;
  std::vector<double> ability_sample;
  std::optional<double> skill;

  bool operator==(const EpisodeRow&) const = default;
};

struct EvalResult {
  std::vector<double> per_env;
  double pooled = 0.0;
  bool operator==(const EvalResult&) const = default;
};

struct EvalRow {
  std::int64_t episode_index = 0;  // episodes completed when evaluated
  std::vector<std::vector<double>> eval_set;
  EvalResult result;
  bool operator==(const EvalRow&) const = default;
};

struct Summary {
  std::string strategy;
  std::int64_t episodes = 0;
  std::int64_t discarded = 0;
  std::int64_t env_steps = 0;
  double mean_episode_length = 0.0;
  double mean_raw_reward = 0.0;
  double final_eval = 0.0;
  std::optional<std::int64_t> episodes_to_skill;
  std::optional<double> final_skill;
  std::int64_t inference_calls = 0;
  std::int64_t perm_updates = 0;
  std::int64_t student_updates = 0;
  std::string perm_digest_before;
  std::string perm_digest_after;

  bool operator==(const Summary&) const = default;
};

struct CurriculumReport {
  std::vector<EpisodeRow> episodes;
  std::vector<EvalRow> evals;
  Summary summary;
};

// Optional side channels of a run.
struct RunOptions {
  // Replaces the run's internal ability/generation noise.
  NoiseSource* noise = nullptr;
  // Receives one InteractionRecord per kept episode.
  store::RecordLog* records = nullptr;
  // Receives a line for every discarded episode.
  store::JsonlWriter* events = nullptr;
};

// Mean return over `episodes` frozen episodes per parameter setting.
EvalResult evaluate(const students::Trainee& student,
                    const std::vector<std::vector<double>>& eval_set, std::size_t episodes,
                    std::uint64_t seed);

// Teacher loop. `perm` is required for the PERM modes and ignored for dr.
// In perm-offline mode the model is never modified.
CurriculumReport run_curriculum(students::Trainee& student, model::PermModel* perm,
                                const CurriculumConfig& config, const RunOptions& options = {});

// Domain randomization; equivalent to run_curriculum in dr mode.
CurriculumReport run_dr(students::Trainee& student, const CurriculumConfig& config,
                        const RunOptions& options = {});

store::Json to_json(const EpisodeRow& r);
store::Json to_json(const EvalRow& r);
store::Json to_json(const Summary& s);

// One line per episode row, then evaluation rows, then the summary.
void write_report(const std::filesystem::path& path, const CurriculumReport& report);
// Plain-text summary table.
std::string format_summary(const Summary& s);

// Hex SHA-256 of the model's checkpoint encoding.
std::string model_digest(const model::PermModel& m);

}  // namespace perm::curriculum
