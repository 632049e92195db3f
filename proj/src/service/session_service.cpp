// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/service/session_service.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <random>

#include "perm/rng.hpp"
#include "perm/store/checkpoint.hpp"

namespace perm::service {

namespace {

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

store::Json nullable(const std::vector<double>& v) {
  return v.empty() ? store::Json(nullptr) : store::Json(v);
}

}  // namespace

store::Json to_json(const Gaussian& g) {
  store::Json j;
  j["mean"] = g.mean();
  j["stddev"] = g.stddev();
  return j;
}

Gaussian precision_weighted(std::span<const Gaussian> posteriors) {
  if (posteriors.empty()) throw InvalidArgument("precision_weighted: no posteriors");
  const std::size_t n = posteriors.front().dim();
  std::vector<double> precision(n, 0.0), weighted(n, 0.0);
  for (const auto& g : posteriors) {
    if (g.dim() != n) throw ShapeError("precision_weighted: dimension mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      const double p = 1.0 / (g.stddev()[i] * g.stddev()[i]);
      precision[i] += p;
      weighted[i] += p * g.mean()[i];
    }
  }
  std::vector<double> mean(n), sd(n);
  for (std::size_t i = 0; i < n; ++i) {
    mean[i] = weighted[i] / precision[i];
    sd[i] = 1.0 / std::sqrt(precision[i]);
  }
  return Gaussian(std::move(mean), std::move(sd));
}

SessionService::SessionService(std::shared_ptr<const model::AbilityModel> model,
                               ServiceConfig config)
    : model_(std::move(model)), config_(std::move(config)) {
  config_.normalizer.validate();
  if (config_.smoothing_window == 0) throw InvalidArgument("smoothing_window must be >= 1");
  std::filesystem::create_directories(config_.log_dir);
}

SessionService::~SessionService() {
  try {
    close_all();
  } catch (...) {
  }
}

std::filesystem::path SessionService::log_path(const std::string& id) const {
  return config_.log_dir / (id + ".jsonl");
}

std::string SessionService::new_id() {
  std::lock_guard lock(id_mutex_);
  if (config_.deterministic_ids) {
    const std::uint64_t n = id_counter_++;
    return hex64(fork_seed(config_.seed, 2 * n)) + hex64(fork_seed(config_.seed, 2 * n + 1));
  }
  std::random_device rd;
  std::uint64_t a = (static_cast<std::uint64_t>(rd()) << 32) | rd();
  std::uint64_t b = (static_cast<std::uint64_t>(rd()) << 32) | rd();
  return hex64(a) + hex64(b);
}

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& id) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw ServiceError(404, "unknown session '" + id + "'");
  return it->second;
}

store::Json SessionService::level_json(const SessionState& st, std::size_t index) const {
  store::Json j;
  j["index"] = index;
  j["lambda_raw"] = st.levels[index].lambda_raw;
  j["difficulty_target"] = nullable(st.levels[index].difficulty_target);
  return j;
}

store::Json SessionService::create_session(const std::string& label) {
  if (!model_) throw ServiceError(503, "no PERM checkpoint loaded");
  const std::string id = new_id();
  auto session = std::make_shared<Session>(config_.normalizer);
  auto& st = session->state;
  st.id = id;
  st.label = label;
  st.seed = fork_seed(config_.seed, id);
  st.created = st.updated = store::utc_timestamp();
  Rng first(fork_seed(st.seed, "first-level"));
  st.levels.push_back({model_->space().sample_uniform(first), {}});

  session->log = store::JsonlWriter(log_path(id), /*truncate=*/true);
  store::Json ev;
  ev["event"] = "created";
  ev["format_version"] = store::kLogFormatVersion;
  ev["session_id"] = id;
  ev["label"] = label;
  ev["seed"] = st.seed;
  ev["wall_time"] = st.created;
  ev["level"] = level_json(st, 0);
  session->log.write(ev);

  store::Json out;
  out["api_version"] = kApiVersion;
  out["session_id"] = id;
  out["label"] = label;
  out["level"] = level_json(st, 0);
  const auto& space = model_->space();
  out["parameters"] = store::Json::array();
  for (std::size_t i = 0; i < space.dim(); ++i) {
    out["parameters"].push_back(
        {{"name", space.names()[i]}, {"lower", space.lower()[i]}, {"upper", space.upper()[i]}});
  }
  {
    std::unique_lock lock(sessions_mutex_);
    sessions_[id] = std::move(session);
  }
  return out;
}

store::Json SessionService::apply_result(Session& s, const SubmitRequest& req,
                                         const std::string& wall_time) {
  auto& st = s.state;
  const auto& space = model_->space();
  const std::size_t answered = st.levels.size() - 1;
  const auto lambda = st.levels.back().lambda_raw;
  const auto lambda_norm = space.normalize(lambda).value;

  ResultEntry e;
  e.idempotency_key = req.idempotency_key;
  e.raw_reward = req.raw_reward;
  e.episode_length = req.episode_length;
  e.response = s.normalizer.normalize(req.raw_reward);
  e.lambda_raw = lambda;
  e.wall_time = wall_time;

  Rng noise(fork_seed(st.seed, static_cast<std::uint64_t>(answered)));
  e.episode_posterior = model_->infer_ability(e.response, lambda_norm, noise);
  std::vector<Gaussian> recent;
  const std::size_t from =
      st.results.size() + 1 > config_.smoothing_window
          ? st.results.size() + 1 - config_.smoothing_window
          : 0;
  for (std::size_t i = from; i < st.results.size(); ++i) {
    recent.push_back(st.results[i].episode_posterior);
  }
  recent.push_back(e.episode_posterior);
  e.ability = precision_weighted(recent);

  // The target follows the per-episode posterior; smoothing is display only.
  e.ability_sample = e.episode_posterior.mean();
  for (std::size_t i = 0; i < e.ability_sample.size(); ++i) {
    e.ability_sample[i] += e.episode_posterior.stddev()[i] * noise.standard_normal();
  }
  auto next = model_->generate_lambda(e.ability_sample, noise);
  st.levels.push_back({std::move(next), e.ability_sample});
  st.updated = wall_time;

  store::Json out;
  out["session_id"] = st.id;
  out["result_index"] = st.results.size();
  out["answered_level"] = answered;
  out["normalized_response"] = e.response;
  out["ability"] = to_json(e.ability);
  out["episode_ability"] = to_json(e.episode_posterior);
  out["difficulty_target"] = e.ability_sample;
  out["level"] = level_json(st, st.levels.size() - 1);
  st.results.push_back(std::move(e));
  s.responses[req.idempotency_key] = out;
  return out;
}

store::Json SessionService::submit_result(const std::string& id, const SubmitRequest& req) {
  auto session = find(id);
  std::lock_guard lock(session->mutex);
  if (req.idempotency_key.empty()) throw ServiceError(400, "Idempotency-Key header is required");
  if (auto it = session->responses.find(req.idempotency_key); it != session->responses.end()) {
    return it->second;
  }
  if (!std::isfinite(req.raw_reward)) throw ServiceError(422, "raw_reward must be finite");
  if (req.episode_length < 1) throw ServiceError(400, "episode_length must be >= 1");
  const std::size_t pending = session->state.levels.size() - 1;
  if (req.level_index && *req.level_index != pending) {
    throw ServiceError(409, "level " + std::to_string(*req.level_index) +
                                " is not pending (pending level is " + std::to_string(pending) +
                                ")");
  }
  const std::string wall = store::utc_timestamp();
  auto out = apply_result(*session, req, wall);
  store::Json ev;
  ev["event"] = "result";
  ev["idempotency_key"] = req.idempotency_key;
  ev["raw_reward"] = req.raw_reward;
  ev["episode_length"] = req.episode_length;
  ev["level_index"] = pending;
  ev["wall_time"] = wall;
  ev["response"] = out;
  session->log.write(ev);
  session->closed = false;
  return out;
}

store::Json SessionService::history(const std::string& id) const {
  auto session = find(id);
  std::lock_guard lock(session->mutex);
  const auto& st = session->state;
  store::Json j;
  j["api_version"] = kApiVersion;
  j["session_id"] = st.id;
  j["label"] = st.label;
  j["created"] = st.created;
  j["updated"] = st.updated;
  j["levels"] = store::Json::array();
  for (std::size_t i = 0; i < st.levels.size(); ++i) j["levels"].push_back(level_json(st, i));
  j["results"] = store::Json::array();
  for (std::size_t i = 0; i < st.results.size(); ++i) {
    const auto& e = st.results[i];
    store::Json r;
    r["index"] = i;
    r["lambda_raw"] = e.lambda_raw;
    r["raw_reward"] = e.raw_reward;
    r["episode_length"] = e.episode_length;
    r["normalized_response"] = e.response;
    r["episode_ability"] = to_json(e.episode_posterior);
    r["ability"] = to_json(e.ability);
    r["difficulty_target"] = e.ability_sample;
    r["wall_time"] = e.wall_time;
    j["results"].push_back(r);
  }
  return j;
}

SessionState SessionService::state(const std::string& id) const {
  auto session = find(id);
  std::lock_guard lock(session->mutex);
  return session->state;
}

std::vector<std::string> SessionService::session_ids() const {
  std::shared_lock lock(sessions_mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, _] : sessions_) ids.push_back(id);
  return ids;
}

std::size_t SessionService::replay() {
  if (!model_) throw ServiceError(503, "no PERM checkpoint loaded");
  std::size_t count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(config_.log_dir)) {
    if (entry.path().extension() != ".jsonl") continue;
    const auto contents = store::read_jsonl(entry.path());
    const std::string where = entry.path().string();
    if (!contents.issues.empty()) {
      throw store::CorruptError(where + ":" + std::to_string(contents.issues.front().line) + ": " +
                                contents.issues.front().message);
    }
    if (contents.lines.empty()) continue;
    auto session = std::make_shared<Session>(config_.normalizer);
    auto& st = session->state;
    try {
      const auto& created = contents.lines.front();
      if (created.at("event") != "created") {
        throw store::CorruptError(where + ": first event is not 'created'");
      }
      st.id = created.at("session_id").get<std::string>();
      st.label = created.at("label").get<std::string>();
      st.seed = created.at("seed").get<std::uint64_t>();
      st.created = st.updated = created.at("wall_time").get<std::string>();
      Rng first(fork_seed(st.seed, "first-level"));
      st.levels.push_back({model_->space().sample_uniform(first), {}});
      if (st.levels[0].lambda_raw !=
          created.at("level").at("lambda_raw").get<std::vector<double>>()) {
        throw store::CorruptError(where + ": replayed first level differs from the log");
      }
      for (std::size_t i = 1; i < contents.lines.size(); ++i) {
        const auto& ev = contents.lines[i];
        const auto kind = ev.at("event").get<std::string>();
        if (kind == "closed") {
          session->closed = true;
          continue;
        }
        if (kind != "result") {
          throw store::CorruptError(where + ":" + std::to_string(contents.line_numbers[i]) +
                                    ": unknown event '" + kind + "'");
        }
        SubmitRequest req;
        req.idempotency_key = ev.at("idempotency_key").get<std::string>();
        req.raw_reward = ev.at("raw_reward").get<double>();
        req.episode_length = ev.at("episode_length").get<std::int64_t>();
        const auto out = apply_result(*session, req, ev.at("wall_time").get<std::string>());
        if (out != ev.at("response")) {
          throw store::CorruptError(where + ":" + std::to_string(contents.line_numbers[i]) +
                                    ": replayed result differs from the log");
        }
        session->closed = false;
      }
    } catch (const nlohmann::json::exception& e) {
      throw store::CorruptError(where + ": " + e.what());
    }
    session->log = store::JsonlWriter(entry.path());
    std::unique_lock lock(sessions_mutex_);
    sessions_[st.id] = std::move(session);
    ++count;
  }
  return count;
}

void SessionService::close_all() {
  std::shared_lock lock(sessions_mutex_);
  for (auto& [id, session] : sessions_) {
    std::lock_guard slock(session->mutex);
    if (session->closed || !session->log.is_open()) continue;
    store::Json ev;
    ev["event"] = "closed";
    ev["wall_time"] = store::utc_timestamp();
    session->log.write(ev);
    session->closed = true;
  }
}

}  // namespace perm::service
