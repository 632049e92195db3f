// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "perm/curriculum/curriculum.hpp"
#include "perm/env/param_space.hpp"
#include "perm/model/perm_model.hpp"
#include "perm/students/trainee.hpp"

namespace perm::cli {

// Configuration problems map to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class EnvKind { synthetic, lander };
enum class StudentKind { zpd, pg };

struct EnvironmentSection {
  EnvKind kind = EnvKind::synthetic;
  // Defaults to the environment's own space.
  std::optional<env::ParamSpace> space;
  double noise_std = 0.1;  // synthetic only

  env::ParamSpace param_space() const;
};

struct StudentSection {
  StudentKind kind = StudentKind::zpd;
  students::ZpdParams zpd;
  students::PgHyper pg;
  std::string id = "student";
};

struct FitSection {
  std::size_t steps = 2000;
  std::size_t eval_every = 100;
  std::size_t patience = 10;
  double holdout_fraction = 0.2;
  std::size_t min_records = 500;
};

struct ServiceSection {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string log_dir = "sessions";
  std::size_t smoothing_window = 5;
};

// Declarative run configuration. Unknown keys are rejected at every level;
// to_json materializes every default.
struct RunConfig {
  std::uint64_t seed = 0;
  EnvironmentSection environment;
  StudentSection student;
  model::PermConfig perm;
  FitSection fit;
  curriculum::CurriculumConfig curriculum;
  ServiceSection service;

  void validate() const;
};

RunConfig run_config_from_json(const store::Json& j);
store::Json to_json(const RunConfig& c);
// Throws ConfigError naming the path when missing or malformed.
RunConfig load_run_config(const std::filesystem::path& path);

// Default evaluation levels: the centre of the space and the midpoints of
// its lower and upper halves.
std::vector<std::vector<double>> default_eval_set(const env::ParamSpace& space);

// Fresh student bound to the configured environment.
std::unique_ptr<students::Trainee> make_trainee(const RunConfig& c);
// Student restored from a checkpoint; throws ConfigError when the
// checkpoint kind does not fit the configured environment.
std::unique_ptr<students::Trainee> load_trainee(const RunConfig& c, const store::Checkpoint& ckpt);

}  // namespace perm::cli
