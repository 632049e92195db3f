// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "perm/curriculum/curriculum.hpp"
#include "perm/env/environments.hpp"
#include "perm/model/perm_model.hpp"
#include "perm/service/http_server.hpp"
#include "perm/service/session_service.hpp"

using namespace perm;
using namespace perm::service;
namespace fs = std::filesystem;

namespace {

// Ability posterior N(0.5 + 0.1 r, 0.05); the generator returns the
// target itself, clamped to the unit box.
class StubModel final : public model::AbilityModel {
 public:
  std::size_t latent_dim() const override { return 1; }
  const env::ParamSpace& space() const override { return space_; }
  Gaussian infer_ability(double r, std::span<const double>, NoiseSource&) const override {
    return Gaussian({0.5 + 0.1 * r}, {0.05});
  }
  std::vector<double> generate_lambda(std::span<const double> d, NoiseSource&) const override {
    return space_.clamp(d);
  }

 private:
  env::ParamSpace space_{{"level"}, {0.0}, {1.0}};
};

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path(PERM_TEST_TMP) / "service" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ServiceConfig config_for(const fs::path& dir) {
  ServiceConfig c;
  c.log_dir = dir;
  c.seed = 99;
  c.deterministic_ids = true;
  c.normalizer = {.mode = env::NormalizerMode::fixed, .scale = 3.0};
  return c;
}

SubmitRequest req(double reward, const std::string& key) {
  SubmitRequest r;
  r.raw_reward = reward;
  r.episode_length = 1;
  r.idempotency_key = key;
  return r;
}

int status_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    return e.status();
  }
  return 0;
}

std::shared_ptr<model::PermModel> trained_synthetic_model() {
  model::PermConfig c;
  c.hidden = {32, 32};
  c.response_link = model::ResponseLink::linear_margin;
  c.seed = 11;
  auto m = std::make_shared<model::PermModel>(c, env::SyntheticEnv::default_space());
  const env::SyntheticEnv env;
  Rng rng(5);
  std::vector<model::Observation> data;
  for (int i = 0; i < 2500; ++i) {
    const auto lam = env.space().sample_uniform(rng);
    const double skill = rng.uniform(-2.0, 2.0);
    const double r = env.play(lam, skill, rng.next_u64()).raw_reward / 3.0;
    data.push_back({r, env.space().normalize(lam).value});
  }
  model::FitOptions fo;
  fo.steps = 1500;
  fo.patience = 0;
  model::fit(*m, data, {}, fo);
  return m;
}

}  // namespace

TEST(PrecisionWeighted, Oracle) {
  const std::vector<Gaussian> g{Gaussian({1.0}, {1.0}), Gaussian({3.0}, {0.5})};
  // Precisions 1 and 4.
  const auto p = precision_weighted(g);
  EXPECT_NEAR(p.mean()[0], (1.0 * 1.0 + 4.0 * 3.0) / 5.0, 1e-15);
  EXPECT_NEAR(p.stddev()[0], std::sqrt(1.0 / 5.0), 1e-15);
  const std::vector<Gaussian> one{Gaussian({0.2}, {0.7})};
  EXPECT_EQ(precision_weighted(one).mean(), one[0].mean());
}

TEST(SessionService, CreateSessionExamples) {
  const auto dir = fresh_dir("create");
  SessionService svc(std::make_shared<StubModel>(), config_for(dir));
  const auto a = svc.create_session("alice");
  const auto b = svc.create_session("bob");
  EXPECT_NE(a.at("session_id"), b.at("session_id"));
  const double lam = a.at("level").at("lambda_raw")[0].get<double>();
  EXPECT_GE(lam, 0.0);
  EXPECT_LE(lam, 1.0);
  EXPECT_TRUE(a.at("level").at("difficulty_target").is_null());
  ASSERT_EQ(a.at("parameters").size(), 1u);
  EXPECT_EQ(a.at("parameters")[0].at("name"), "level");
  EXPECT_EQ(a.at("parameters")[0].at("lower"), 0.0);
  EXPECT_EQ(a.at("parameters")[0].at("upper"), 1.0);
  EXPECT_TRUE(fs::exists(dir / (a.at("session_id").get<std::string>() + ".jsonl")));

  SessionService none(nullptr, config_for(dir));
  EXPECT_EQ(status_of([&] { none.create_session("x"); }), 503);
}

TEST(SessionService, SubmitAdvancesAndTargetsTheNextLevel) {
  const auto dir = fresh_dir("submit");
  SessionService svc(std::make_shared<StubModel>(), config_for(dir));
  const std::string id = svc.create_session("s").at("session_id");
  const auto out = svc.submit_result(id, req(1.5, "k1"));
  const auto st = svc.state(id);
  EXPECT_EQ(st.levels.size(), 2u);
  EXPECT_EQ(st.results.size(), 1u);
  // Identity generator: the served level is the difficulty target.
  EXPECT_EQ(st.levels[1].lambda_raw, st.levels[1].difficulty_target);
  EXPECT_EQ(out.at("difficulty_target").get<std::vector<double>>(), st.levels[1].difficulty_target);
  EXPECT_EQ(out.at("level").at("lambda_raw").get<std::vector<double>>(), st.levels[1].lambda_raw);
  EXPECT_NEAR(st.results[0].response, 0.5, 1e-15);
  EXPECT_NEAR(st.results[0].episode_posterior.mean()[0], 0.55, 1e-15);
  for (int i = 0; i < 8; ++i) svc.submit_result(id, req(0.1 * i, "n" + std::to_string(i)));
  for (const auto& level : svc.state(id).levels) {
    EXPECT_GE(level.lambda_raw[0], 0.0);
    EXPECT_LE(level.lambda_raw[0], 1.0);
  }
}

TEST(SessionService, SmoothedAbilityUsesLastFivePosteriors) {
  const auto dir = fresh_dir("smooth");
  SessionService svc(std::make_shared<StubModel>(), config_for(dir));
  const std::string id = svc.create_session("s").at("session_id");
  const std::vector<double> rewards{3.0, -3.0, 1.5, 0.0, -1.5, 3.0, 0.3};
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    svc.submit_result(id, req(rewards[i], "k" + std::to_string(i)));
  }
  const auto st = svc.state(id);
  // Equal stddevs: the precision-weighted mean is the plain average.
  double want = 0.0;
  for (std::size_t i = rewards.size() - 5; i < rewards.size(); ++i) {
    want += (0.5 + 0.1 * rewards[i] / 3.0) / 5.0;
  }
  EXPECT_NEAR(st.results.back().ability.mean()[0], want, 1e-12);
  EXPECT_NEAR(st.results.back().ability.stddev()[0], 0.05 / std::sqrt(5.0), 1e-12);
}

TEST(SessionService, ErrorStatuses) {
  const auto dir = fresh_dir("errors");
  SessionService svc(std::make_shared<StubModel>(), config_for(dir));
  const std::string id = svc.create_session("s").at("session_id");
  EXPECT_EQ(status_of([&] { svc.submit_result("nope", req(1.0, "a")); }), 404);
  EXPECT_EQ(status_of([&] { svc.history("nope"); }), 404);
  EXPECT_EQ(status_of([&] { svc.submit_result(id, req(1.0, "")); }), 400);
  EXPECT_EQ(status_of([&] { svc.submit_result(id, req(std::nan(""), "a")); }), 422);
  EXPECT_EQ(status_of([&] { svc.submit_result(id, req(INFINITY, "a")); }), 422);
  auto zero_len = req(1.0, "z");
  zero_len.episode_length = 0;
  EXPECT_EQ(status_of([&] { svc.submit_result(id, zero_len); }), 400);
  auto answered = req(1.0, "first");
  answered.level_index = 0;
  svc.submit_result(id, answered);
  auto stale = req(1.0, "second");
  stale.level_index = 0;
  EXPECT_EQ(status_of([&] { svc.submit_result(id, stale); }), 409);
  EXPECT_EQ(svc.state(id).results.size(), 1u);
}

TEST(SessionService, IdempotentResubmit) {
  const auto dir = fresh_dir("idem");
  SessionService svc(std::make_shared<StubModel>(), config_for(dir));
  const std::string id = svc.create_session("s").at("session_id");
  const auto first = svc.submit_result(id, req(2.0, "same"));
  const auto again = svc.submit_result(id, req(2.0, "same"));
  EXPECT_EQ(first, again);
  EXPECT_EQ(svc.state(id).results.size(), 1u);
  EXPECT_EQ(svc.state(id).levels.size(), 2u);
}

TEST(SessionService, HistoryIsReadOnly) {
  const auto dir = fresh_dir("history");
  SessionService svc(std::make_shared<StubModel>(), config_for(dir));
  const std::string id = svc.create_session("s").at("session_id");
  for (int i = 0; i < 3; ++i) svc.submit_result(id, req(i, "k" + std::to_string(i)));
  const auto h1 = svc.history(id);
  const auto h2 = svc.history(id);
  EXPECT_EQ(h1, h2);
  ASSERT_EQ(h1.at("results").size(), 3u);
  EXPECT_EQ(h1.at("levels").size(), 4u);
  for (const auto& r : h1.at("results")) {
    for (const char* k : {"lambda_raw", "raw_reward", "normalized_response", "ability",
                          "episode_ability", "difficulty_target"}) {
      EXPECT_TRUE(r.contains(k)) << k;
    }
  }
}

TEST(SessionService, ReplayReconstructsState) {
  const auto dir = fresh_dir("replay");
  std::vector<std::string> ids;
  std::vector<SessionState> states;
  {
    SessionService svc(std::make_shared<StubModel>(), config_for(dir));
    for (int s = 0; s < 3; ++s) {
      ids.push_back(svc.create_session("t" + std::to_string(s)).at("session_id"));
      for (int i = 0; i <= s * 3; ++i) {
        svc.submit_result(ids.back(), req(0.7 * i - s, "k" + std::to_string(i)));
      }
    }
    for (const auto& id : ids) states.push_back(svc.state(id));
    svc.close_all();
  }
  SessionService back(std::make_shared<StubModel>(), config_for(dir));
  EXPECT_EQ(back.replay(), 3u);
  for (std::size_t i = 0; i < ids.size(); ++i) EXPECT_EQ(back.state(ids[i]), states[i]);
  // Replayed sessions keep their idempotency table and keep serving.
  const auto again = back.submit_result(ids[0], req(0.0, "k0"));
  EXPECT_EQ(again.at("result_index"), 0);
  back.submit_result(ids[0], req(0.0, "fresh"));
  EXPECT_EQ(back.state(ids[0]).results.size(), 2u);
}

TEST(SessionService, ReplayDetectsTamperedLog) {
  const auto dir = fresh_dir("tamper");
  std::string id;
  {
    SessionService svc(std::make_shared<StubModel>(), config_for(dir));
    id = svc.create_session("t").at("session_id");
    svc.submit_result(id, req(1.0, "a"));
  }
  const auto path = dir / (id + ".jsonl");
  auto lines = store::read_jsonl(path).lines;
  lines[1]["raw_reward"] = 2.0;
  {
    store::JsonlWriter w(path, true);
    for (const auto& l : lines) w.write(l);
  }
  SessionService back(std::make_shared<StubModel>(), config_for(dir));
  EXPECT_THROW(back.replay(), store::CorruptError);
}

TEST(SessionService, ConcurrentSubmitsAreSerialized) {
  const auto dir = fresh_dir("concurrent");
  SessionService svc(std::make_shared<StubModel>(), config_for(dir));
  const std::string id = svc.create_session("c").at("session_id");
  constexpr int kThreads = 8, kEach = 20;
  std::atomic<int> conflicts{0};
  std::vector<std::thread> threads;
  for (int t = 0; t < kThreads; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < kEach; ++i) {
        svc.submit_result(id, req(0.1 * t, "t" + std::to_string(t) + "-" + std::to_string(i)));
        // Every thread also races on one shared key.
        svc.submit_result(id, req(0.0, "shared"));
        auto stale = req(0.0, "stale" + std::to_string(t) + "-" + std::to_string(i));
        stale.level_index = 0;
        if (status_of([&] { svc.submit_result(id, stale); }) == 409) ++conflicts;
      }
    });
  }
  for (auto& th : threads) th.join();
  const auto st = svc.state(id);
  EXPECT_EQ(st.results.size(), static_cast<std::size_t>(kThreads * kEach + 1));
  EXPECT_EQ(st.levels.size(), st.results.size() + 1);
  EXPECT_EQ(conflicts.load(), kThreads * kEach);
  // Each result answered the level pending at the time.
  for (std::size_t i = 0; i < st.results.size(); ++i) {
    EXPECT_EQ(st.results[i].lambda_raw, st.levels[i].lambda_raw);
  }
  // The log replays to the same state.
  SessionService back(std::make_shared<StubModel>(), config_for(dir));
  back.replay();
  EXPECT_EQ(back.state(id), st);
}

TEST(SessionService, TrainedModelRanksHighAboveLowAndStaysFrozen) {
  const auto dir = fresh_dir("trained");
  const auto model = trained_synthetic_model();
  const auto digest = curriculum::model_digest(*model);
  SessionService svc(model, config_for(dir));
  const std::string high = svc.create_session("high").at("session_id");
  const std::string low = svc.create_session("low").at("session_id");
  for (int i = 0; i < 10; ++i) {
    svc.submit_result(high, req(2.5, "h" + std::to_string(i)));
    svc.submit_result(low, req(-2.5, "l" + std::to_string(i)));
  }
  const double a_high = svc.state(high).results.back().ability.mean()[0];
  const double a_low = svc.state(low).results.back().ability.mean()[0];
  EXPECT_GT(a_high, a_low);
  EXPECT_EQ(curriculum::model_digest(*model), digest);
  for (const auto& id : {high, low}) {
    for (const auto& level : svc.state(id).levels) {
      EXPECT_TRUE(model->space().contains(level.lambda_raw));
    }
  }
}

TEST(HttpApi, HandlersMapStatuses) {
  const auto dir = fresh_dir("handlers");
  SessionService svc(std::make_shared<StubModel>(), config_for(dir));
  EXPECT_EQ(handle_health(svc).status, 200);
  const auto created = handle_create(svc, R"({"label":"h"})");
  ASSERT_EQ(created.status, 201);
  const std::string id = created.body.at("session_id");
  EXPECT_EQ(handle_create(svc, "{bad json").status, 400);
  EXPECT_EQ(handle_submit(svc, id, R"({"raw_reward":1.0})", "").status, 400);
  EXPECT_EQ(handle_submit(svc, id, R"({"raw_reward":"NaN"})", "k").status, 422);
  EXPECT_EQ(handle_submit(svc, id, R"({"episode_length":3})", "k").status, 400);
  EXPECT_EQ(handle_submit(svc, "missing", R"({"raw_reward":1.0})", "k").status, 404);
  EXPECT_EQ(handle_submit(svc, id, R"({"raw_reward":1.0,"level_index":0})", "k").status, 200);
  EXPECT_EQ(handle_submit(svc, id, R"({"raw_reward":1.0,"level_index":0})", "k2").status, 409);
  const auto h = handle_history(svc, id);
  EXPECT_EQ(h.status, 200);
  EXPECT_EQ(h.body.at("results").size(), 1u);
}

TEST(HttpApi, ServesOverLoopback) {
  const auto dir = fresh_dir("http");
  SessionService svc(std::make_shared<StubModel>(), config_for(dir));
  HttpServer server(svc);
  const int port = server.bind("127.0.0.1", 0);
  std::thread runner([&] { server.run(); });
  server.wait_until_ready();

  httplib::Client cli("127.0.0.1", port);
  auto health = cli.Get("/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  auto created = cli.Post("/sessions", R"({"label":"web"})", "application/json");
  ASSERT_TRUE(created);
  EXPECT_EQ(created->status, 201);
  const std::string id = store::Json::parse(created->body).at("session_id");
  httplib::Headers key{{"Idempotency-Key", "one"}};
  auto r1 = cli.Post("/sessions/" + id + "/results", key, R"({"raw_reward":0.5})",
                     "application/json");
  auto r2 = cli.Post("/sessions/" + id + "/results", key, R"({"raw_reward":0.5})",
                     "application/json");
  ASSERT_TRUE(r1 && r2);
  EXPECT_EQ(r1->status, 200);
  EXPECT_EQ(store::Json::parse(r1->body), store::Json::parse(r2->body));
  auto hist = cli.Get("/sessions/" + id + "/history");
  ASSERT_TRUE(hist);
  EXPECT_EQ(store::Json::parse(hist->body).at("results").size(), 1u);
  auto missing = cli.Get("/sessions/none/history");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);

  server.stop();
  runner.join();
}
