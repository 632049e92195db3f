// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

namespace perm::cli {

// Stable exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct CollectOptions {
  std::string config;
  std::size_t episodes = 0;
  std::string out;
  std::optional<std::uint64_t> seed;
};

struct TrainPermOptions {
  std::string config;
  std::string data;
  std::optional<double> holdout_fraction;
  std::string out;
  std::optional<std::size_t> steps;
  std::optional<std::uint64_t> seed;
};

struct CurriculumOptions {
  std::string config;
  std::optional<std::string> mode;
  std::optional<std::string> perm;  // frozen model (offline) or warm start (online)
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> episodes;
};

struct EvalOptions {
  std::string config;
  std::string student;
  std::optional<std::uint64_t> seed;
};

struct ServeOptions {
  std::string config;
  std::string perm;
  std::optional<int> port;
  std::optional<std::string> host;
  std::optional<std::string> log_dir;
};

// Each command returns its exit code; diagnostics go to `err`.
int cmd_collect(const CollectOptions& o, std::ostream& out, std::ostream& err);
int cmd_train_perm(const TrainPermOptions& o, std::ostream& out, std::ostream& err);
int cmd_curriculum(const CurriculumOptions& o, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err);
// Blocks until SIGINT or SIGTERM.
int cmd_serve(const ServeOptions& o, std::ostream& out, std::ostream& err);

// Parses argv and dispatches.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace perm::cli
