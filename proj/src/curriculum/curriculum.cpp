// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/curriculum/curriculum.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include "perm/error.hpp"

namespace perm::curriculum {

namespace {

// Consecutive non-finite episodes tolerated before the run is aborted.
constexpr std::size_t kMaxConsecutiveDiscards = 1000;

store::Json normalizer_to_json(const env::NormalizerConfig& n) {
  store::Json j;
  j["mode"] = env::to_string(n.mode);
  j["window"] = n.window;
  j["center"] = n.center;
  j["scale"] = n.scale;
  return j;
}

env::NormalizerConfig normalizer_from_json(const store::Json& j) {
  if (!j.is_object()) throw InvalidArgument("curriculum.normalizer must be an object");
  env::NormalizerConfig n;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "mode") n.mode = env::normalizer_mode_from_string(v.get<std::string>());
      else if (key == "window") n.window = v.get<std::size_t>();
      else if (key == "center") n.center = v.get<double>();
      else if (key == "scale") n.scale = v.get<double>();
      else throw InvalidArgument("unknown key 'curriculum.normalizer." + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("bad value for 'curriculum.normalizer." + key + "': " + e.what());
    }
  }
  n.validate();
  return n;
}

template <typename T>
store::Json optional_json(const std::optional<T>& v) {
  return v ? store::Json(*v) : store::Json(nullptr);
}

}  // namespace

std::string to_string(Mode m) {
  switch (m) {
    case Mode::perm_online: return "perm-online";
    case Mode::perm_offline: return "perm-offline";
    case Mode::dr: return "dr";
  }
  return "dr";
}

Mode mode_from_string(const std::string& s) {
  if (s == "perm-online") return Mode::perm_online;
  if (s == "perm-offline") return Mode::perm_offline;
  if (s == "dr") return Mode::dr;
  throw InvalidArgument("unknown curriculum mode '" + s +
                        "' (expected perm-online, perm-offline or dr)");
}

std::string to_string(AbilityMode m) { return m == AbilityMode::sample ? "sample" : "mean"; }

AbilityMode ability_mode_from_string(const std::string& s) {
  if (s == "sample") return AbilityMode::sample;
  if (s == "mean") return AbilityMode::mean;
  throw InvalidArgument("unknown ability mode '" + s + "' (expected sample or mean)");
}

void CurriculumConfig::validate() const {
  if (k < 1) throw InvalidArgument("curriculum.k must be >= 1");
  if (total_episodes < 1) throw InvalidArgument("curriculum.total_episodes must be >= 1");
  if (total_steps < 0) throw InvalidArgument("curriculum.total_steps must be >= 0");
  if (eval_set.empty()) throw InvalidArgument("curriculum.eval_set must be nonempty");
  if (eval_episodes < 1) throw InvalidArgument("curriculum.eval_episodes must be >= 1");
  for (const auto& e : eval_set) {
    if (e.empty()) throw InvalidArgument("curriculum.eval_set entries must be nonempty");
    for (double v : e) {
      if (!std::isfinite(v)) throw InvalidArgument("curriculum.eval_set has a non-finite value");
    }
  }
  if (stop_at_skill && !std::isfinite(*stop_at_skill)) {
    throw InvalidArgument("curriculum.stop_at_skill must be finite");
  }
  normalizer.validate();
}

store::Json to_json(const CurriculumConfig& c) {
  store::Json j;
  j["mode"] = to_string(c.mode);
  j["k"] = c.k;
  j["warmup"] = c.warmup;
  j["total_episodes"] = c.total_episodes;
  j["total_steps"] = c.total_steps;
  j["eval_every"] = c.eval_every;
  j["eval_set"] = c.eval_set;
  j["eval_episodes"] = c.eval_episodes;
  j["seed"] = c.seed;
  j["ability_mode"] = to_string(c.ability_mode);
  j["perm_update_steps"] = c.perm_update_steps;
  j["normalizer"] = normalizer_to_json(c.normalizer);
  j["stop_at_skill"] = optional_json(c.stop_at_skill);
  return j;
}

CurriculumConfig curriculum_config_from_json(const store::Json& j) {
  if (!j.is_object()) throw InvalidArgument("curriculum config must be an object");
  CurriculumConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "mode") c.mode = mode_from_string(v.get<std::string>());
      else if (key == "k") c.k = v.get<std::size_t>();
      else if (key == "warmup") c.warmup = v.get<std::size_t>();
      else if (key == "total_episodes") c.total_episodes = v.get<std::size_t>();
      else if (key == "total_steps") c.total_steps = v.get<std::int64_t>();
      else if (key == "eval_every") c.eval_every = v.get<std::size_t>();
      else if (key == "eval_set") c.eval_set = v.get<std::vector<std::vector<double>>>();
      else if (key == "eval_episodes") c.eval_episodes = v.get<std::size_t>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "ability_mode") c.ability_mode = ability_mode_from_string(v.get<std::string>());
      else if (key == "perm_update_steps") c.perm_update_steps = v.get<std::size_t>();
      else if (key == "normalizer") c.normalizer = normalizer_from_json(v);
      else if (key == "stop_at_skill") {
        if (v.is_null()) c.stop_at_skill.reset();
        else c.stop_at_skill = v.get<double>();
      } else {
        throw InvalidArgument("unknown key 'curriculum." + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("bad value for 'curriculum." + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

EvalResult evaluate(const students::Trainee& student,
                    const std::vector<std::vector<double>>& eval_set, std::size_t episodes,
                    std::uint64_t seed) {
  if (eval_set.empty()) throw InvalidArgument("evaluate: empty eval set");
  if (episodes == 0) throw InvalidArgument("evaluate: episodes must be >= 1");
  EvalResult out;
  double pooled = 0.0;
  for (std::size_t e = 0; e < eval_set.size(); ++e) {
    const std::uint64_t env_seed = fork_seed(seed, e);
    double sum = 0.0;
    for (std::size_t i = 0; i < episodes; ++i) {
      sum += student.evaluate(eval_set[e], fork_seed(env_seed, i)).raw_reward;
    }
    out.per_env.push_back(sum / static_cast<double>(episodes));
    pooled += sum;
  }
  out.pooled = pooled / static_cast<double>(episodes * eval_set.size());
  return out;
}

std::string model_digest(const model::PermModel& m) {
  return store::sha256_hex(store::encode_checkpoint(m.to_checkpoint()));
}

CurriculumReport run_curriculum(students::Trainee& student, model::PermModel* perm,
                                const CurriculumConfig& config, const RunOptions& options) {
  config.validate();
  const auto& space = student.space();
  for (const auto& e : config.eval_set) space.require_dim(e.size(), "run_curriculum eval_set");
  const bool use_perm = config.mode != Mode::dr;
  if (use_perm) {
    if (perm == nullptr) {
      throw InvalidArgument("run_curriculum: mode " + to_string(config.mode) +
                            " requires a PERM model");
    }
    if (perm->space().dim() != space.dim()) {
      throw InvalidArgument("run_curriculum: PERM parameter dimension " +
                            std::to_string(perm->space().dim()) + " != environment dimension " +
                            std::to_string(space.dim()));
    }
    if (!(perm->space() == space)) {
      throw InvalidArgument("run_curriculum: PERM parameter space differs from the environment's");
    }
  }

  const Rng root(config.seed);
  Rng lambda_rng = root.fork("lambda");
  Rng episode_rng = root.fork("episodes");
  Rng own_noise = root.fork("perm-noise");
  NoiseSource& noise = options.noise ? *options.noise : own_noise;
  Rng train_noise = root.fork("perm-train");
  const std::uint64_t eval_seed = fork_seed(config.seed, "eval");

  env::ResponseNormalizer normalizer(config.normalizer);
  CurriculumReport report;
  Summary& s = report.summary;
  s.strategy = to_string(config.mode);
  if (use_perm) s.perm_digest_before = model_digest(*perm);

  std::vector<model::Observation> history;
  std::vector<double> lambda = space.sample_uniform(lambda_rng);
  std::vector<double> target;
  std::size_t consecutive_discards = 0;
  double reward_sum = 0.0;

  auto run_eval = [&](std::int64_t at) {
    report.evals.push_back({at, config.eval_set, evaluate(student, config.eval_set, config.eval_episodes,
                                         fork_seed(eval_seed, static_cast<std::uint64_t>(at)))});
  };

  while (static_cast<std::size_t>(s.episodes) < config.total_episodes &&
         (config.total_steps == 0 || s.env_steps < config.total_steps)) {
    const auto result = student.play(lambda, episode_rng.next_u64());
    if (!std::isfinite(result.raw_reward)) {
      ++s.discarded;
      if (options.events) {
        store::Json ev;
        ev["event"] = "discarded_episode";
        ev["episode_index"] = s.episodes;
        ev["lambda_raw"] = lambda;
        ev["reason"] = "non-finite reward";
        options.events->write(ev);
      }
      if (++consecutive_discards > kMaxConsecutiveDiscards) {
        throw NonFiniteError("run_curriculum: too many consecutive non-finite rewards");
      }
      continue;
    }
    consecutive_discards = 0;

    EpisodeRow row;
    row.episode_index = s.episodes;
    row.lambda_raw = lambda;
    row.lambda_normalized = space.normalize(lambda).value;
    row.raw_reward = result.raw_reward;
    row.response = normalizer.normalize(result.raw_reward);
    row.episode_length = result.episode_length;
    row.terminal = result.terminal;
    row.difficulty_target = target;
    row.skill = student.skill();
    history.push_back({row.response, row.lambda_normalized});

    if (options.records) {
      store::InteractionRecord rec;
      rec.episode_index = row.episode_index;
      rec.student_id = student.id();
      rec.lambda_names = space.names();
      rec.lambda_raw = row.lambda_raw;
      rec.lambda_normalized = row.lambda_normalized;
      rec.raw_reward = row.raw_reward;
      rec.normalized_response = row.response;
      rec.episode_length = row.episode_length;
      rec.terminal_kind = std::string(env::to_string(row.terminal));
      rec.wall_time = store::utc_timestamp();
      options.records->append(rec);
    }

    ++s.episodes;
    s.env_steps += result.episode_length;
    reward_sum += result.raw_reward;
    const auto done = static_cast<std::size_t>(s.episodes);

    if (done % config.k == 0) {
      if (config.mode == Mode::perm_online && config.perm_update_steps > 0) {
        const std::span<const model::Observation> block(history.data() + history.size() - config.k,
                                                        config.k);
        for (std::size_t step = 0; step < config.perm_update_steps; ++step) {
          perm->train_step(block, train_noise, static_cast<std::size_t>(s.perm_updates));
        }
        ++s.perm_updates;
      }
      student.end_block();
      ++s.student_updates;
    }

    if (use_perm && done >= config.warmup) {
      const auto posterior = perm->infer_ability(row.response, row.lambda_normalized, noise);
      ++s.inference_calls;
      std::vector<double> a = posterior.mean();
      if (config.ability_mode == AbilityMode::sample) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += posterior.stddev()[i] * noise.standard_normal();
      }
      row.ability_mean = posterior.mean();
      row.ability_stddev = posterior.stddev();
      row.ability_sample = a;
      target = a;
      lambda = perm->generate_lambda(target, noise);
    } else {
      target.clear();
      lambda = space.sample_uniform(lambda_rng);
    }
    report.episodes.push_back(std::move(row));

    if (config.stop_at_skill && !s.episodes_to_skill) {
      if (auto sk = student.skill(); sk && *sk >= *config.stop_at_skill) {
        s.episodes_to_skill = s.episodes;
        break;
      }
    }
    if (config.eval_every > 0 && done % config.eval_every == 0) run_eval(s.episodes);
  }

  if (report.evals.empty() || report.evals.back().episode_index != s.episodes) run_eval(s.episodes);
  s.final_eval = report.evals.back().result.pooled;
  s.final_skill = student.skill();
  if (s.episodes > 0) {
    s.mean_episode_length = static_cast<double>(s.env_steps) / static_cast<double>(s.episodes);
    s.mean_raw_reward = reward_sum / static_cast<double>(s.episodes);
  }
  if (use_perm) s.perm_digest_after = model_digest(*perm);
  return report;
}

CurriculumReport run_dr(students::Trainee& student, const CurriculumConfig& config,
                        const RunOptions& options) {
  CurriculumConfig c = config;
  c.mode = Mode::dr;
  return run_curriculum(student, nullptr, c, options);
}

store::Json to_json(const EpisodeRow& r) {
  store::Json j;
  j["type"] = "episode";
  j["episode_index"] = r.episode_index;
  j["lambda_raw"] = r.lambda_raw;
  j["lambda_normalized"] = r.lambda_normalized;
  j["raw_reward"] = r.raw_reward;
  j["normalized_response"] = r.response;
  j["episode_length"] = r.episode_length;
  j["terminal_kind"] = std::string(env::to_string(r.terminal));
  j["difficulty_target"] = r.difficulty_target;
  j["ability_mean"] = r.ability_mean;
  j["ability_stddev"] = r.ability_stddev;
  j["ability_sample"] = r.ability_sample;
  j["skill"] = optional_json(r.skill);
  return j;
}

store::Json to_json(const EvalRow& r) {
  store::Json j;
  j["type"] = "eval";
  j["episode_index"] = r.episode_index;
  j["eval_set"] = r.eval_set;
  j["per_env_mean_return"] = r.result.per_env;
  j["pooled_mean_return"] = r.result.pooled;
  return j;
}

store::Json to_json(const Summary& s) {
  store::Json j;
  j["type"] = "summary";
  j["strategy"] = s.strategy;
  j["episodes"] = s.episodes;
  j["discarded"] = s.discarded;
  j["env_steps"] = s.env_steps;
  j["mean_episode_length"] = s.mean_episode_length;
  j["mean_raw_reward"] = s.mean_raw_reward;
  j["final_eval"] = s.final_eval;
  j["episodes_to_skill"] = optional_json(s.episodes_to_skill);
  j["final_skill"] = optional_json(s.final_skill);
  j["inference_calls"] = s.inference_calls;
  j["perm_updates"] = s.perm_updates;
  j["student_updates"] = s.student_updates;
  j["perm_digest_before"] = s.perm_digest_before;
  j["perm_digest_after"] = s.perm_digest_after;
  return j;
}

void write_report(const std::filesystem::path& path, const CurriculumReport& report) {
  store::JsonlWriter w(path, /*truncate=*/true);
  for (const auto& r : report.episodes) w.write(to_json(r));
  for (const auto& r : report.evals) w.write(to_json(r));
  w.write(to_json(report.summary));
}

std::string format_summary(const Summary& s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  auto line = [&os](const char* key, const auto& value) {
    os << std::left << std::setw(22) << key << value << '\n';
  };
  line("strategy", s.strategy);
  line("episodes", s.episodes);
  line("discarded", s.discarded);
  line("env_steps", s.env_steps);
  line("mean_episode_length", s.mean_episode_length);
  line("mean_raw_reward", s.mean_raw_reward);
  line("final_eval", s.final_eval);
  if (s.episodes_to_skill) line("episodes_to_skill", *s.episodes_to_skill);
  if (s.final_skill) line("final_skill", *s.final_skill);
  line("inference_calls", s.inference_calls);
  line("perm_updates", s.perm_updates);
  line("student_updates", s.student_updates);
  return os.str();
}

}  // namespace perm::curriculum
