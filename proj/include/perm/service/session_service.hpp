// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "perm/env/normalizer.hpp"
#include "perm/error.hpp"
#include "perm/model/perm_model.hpp"
#include "perm/store/records.hpp"

namespace perm::service {

using irt::Gaussian;

inline constexpr int kApiVersion = 1;

// Request failure carrying the HTTP status it maps to.
class ServiceError : public Error {
 public:
  ServiceError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct ServiceConfig {
  std::filesystem::path log_dir = "sessions";
  env::NormalizerConfig normalizer;
  // Per-episode posteriors combined into the reported ability.
  std::size_t smoothing_window = 5;
  std::uint64_t seed = 0;
  // Session ids come from the seed instead of the system entropy source.
  bool deterministic_ids = false;
};

struct LevelServed {
  std::vector<double> lambda_raw;
  std::vector<double> difficulty_target;  // empty for the uniform first level
  bool operator==(const LevelServed&) const = default;
};

struct ResultEntry {
  std::string idempotency_key;
  double raw_reward = 0.0;
  std::int64_t episode_length = 1;
  double response = 0.0;
  std::vector<double> lambda_raw;  // level the result was played on
  Gaussian episode_posterior;
  Gaussian ability;  // precision-weighted over the smoothing window
  std::vector<double> ability_sample;
  std::string wall_time;
  bool operator==(const ResultEntry&) const = default;
};

struct SessionState {
  std::string id;
  std::string label;
  std::uint64_t seed = 0;
  std::string created;
  std::string updated;
  std::vector<LevelServed> levels;
  std::vector<ResultEntry> results;
  bool operator==(const SessionState&) const = default;
};

struct SubmitRequest {
  double raw_reward = 0.0;
  std::int64_t episode_length = 1;
  // Index of the level being answered; must be the pending one when given.
  std::optional<std::size_t> level_index;
  std::string idempotency_key;
};

// Precision-weighted combination of diagonal Gaussians.
Gaussian precision_weighted(std::span<const Gaussian> posteriors);

// Adaptive sessions over a frozen ability model. Every session is
// event-sourced to `<log_dir>/<id>.jsonl`.
class SessionService {
 public:
  // A null model makes create_session answer 503.
  SessionService(std::shared_ptr<const model::AbilityModel> model, ServiceConfig config);
  ~SessionService();

  SessionService(const SessionService&) = delete;
  SessionService& operator=(const SessionService&) = delete;

  bool ready() const { return model_ != nullptr; }
  const ServiceConfig& config() const { return config_; }

  store::Json create_session(const std::string& label);
  // Replays the stored response for a repeated idempotency key.
  store::Json submit_result(const std::string& id, const SubmitRequest& req);
  store::Json history(const std::string& id) const;
  SessionState state(const std::string& id) const;
  std::vector<std::string> session_ids() const;

  // Rebuilds every session found in the log directory by re-executing its
  // events; throws CorruptError when a replayed level differs from the log.
  std::size_t replay();
  // Appends a close marker to every open session log.
  void close_all();

 private:
  struct Session {
    std::mutex mutex;
    SessionState state;
    env::ResponseNormalizer normalizer;
    std::map<std::string, store::Json> responses;  // by idempotency key
    store::JsonlWriter log;
    bool closed = false;
    explicit Session(const env::NormalizerConfig& n) : normalizer(n) {}
  };

  std::shared_ptr<Session> find(const std::string& id) const;
  std::string new_id();
  store::Json apply_result(Session& s, const SubmitRequest& req, const std::string& wall_time);
  store::Json level_json(const SessionState& st, std::size_t index) const;
  std::filesystem::path log_path(const std::string& id) const;

  std::shared_ptr<const model::AbilityModel> model_;
  ServiceConfig config_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::mutex id_mutex_;
  std::uint64_t id_counter_ = 0;
};

store::Json to_json(const Gaussian& g);

}  // namespace perm::service
