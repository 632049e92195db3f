// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/cli/run_config.hpp"

#include <fstream>

namespace perm::cli {

namespace {

template <typename F>
void each_key(const store::Json& j, const std::string& where, F&& f) {
  if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (!f(key, v)) throw ConfigError("unknown key '" + where + "." + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("bad value for '" + where + "." + key + "': " + e.what());
    }
  }
}

std::string to_string(EnvKind k) { return k == EnvKind::synthetic ? "synthetic" : "lander"; }
std::string to_string(StudentKind k) { return k == StudentKind::zpd ? "zpd" : "pg"; }

students::ZpdParams zpd_from_json(const store::Json& j) {
  students::ZpdParams p;
  each_key(j, "student.zpd", [&](const std::string& key, const store::Json& v) {
    if (key == "skill") p.skill = v.get<double>();
    else if (key == "learn_rate") p.learn_rate = v.get<double>();
    else if (key == "zone_width") p.zone_width = v.get<double>();
    else return false;
    return true;
  });
  return p;
}

store::Json to_json(const students::ZpdParams& p) {
  return {{"skill", p.skill}, {"learn_rate", p.learn_rate}, {"zone_width", p.zone_width}};
}

}  // namespace

env::ParamSpace EnvironmentSection::param_space() const {
  if (space) return *space;
  return kind == EnvKind::synthetic ? env::SyntheticEnv::default_space()
                                    : env::Lander::default_space();
}

void RunConfig::validate() const {
  const auto space = environment.param_space();
  if (environment.kind == EnvKind::synthetic && student.kind != StudentKind::zpd) {
    throw ConfigError("the synthetic environment needs student.kind = zpd");
  }
  if (environment.kind == EnvKind::lander && student.kind != StudentKind::pg) {
    throw ConfigError("the lander environment needs student.kind = pg");
  }
  if (environment.kind == EnvKind::lander && space.dim() != 2) {
    throw ConfigError("the lander parameter space must have two parameters (gravity, wind)");
  }
  if (!(environment.noise_std >= 0.0)) throw ConfigError("environment.noise_std must be >= 0");
  if (!(fit.holdout_fraction > 0.0 && fit.holdout_fraction < 1.0)) {
    throw ConfigError("fit.holdout_fraction must lie in (0, 1)");
  }
  if (service.port < 0 || service.port > 65535) throw ConfigError("service.port out of range");
  if (service.smoothing_window == 0) throw ConfigError("service.smoothing_window must be >= 1");
  try {
    student.zpd.validate();
    student.pg.validate();
    perm.validate();
    curriculum.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  for (const auto& e : curriculum.eval_set) {
    if (e.size() != space.dim()) {
      throw ConfigError("curriculum.eval_set entries need " + std::to_string(space.dim()) +
                        " values");
    }
  }
}

std::vector<std::vector<double>> default_eval_set(const env::ParamSpace& space) {
  std::vector<std::vector<double>> out;
  for (double u : {0.25, 0.5, 0.75}) {
    out.push_back(space.denormalize(std::vector<double>(space.dim(), u)));
  }
  return out;
}

RunConfig run_config_from_json(const store::Json& j) {
  RunConfig c;
  try {
    if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
    for (const auto& [key, _] : j.items()) {
      if (key.starts_with("//")) continue;  // comment
      static const char* known[] = {"seed",    "environment", "student", "perm",
                                    "fit",     "curriculum",  "service"};
      bool ok = false;
      for (const char* k : known) ok = ok || key == k;
      if (!ok) throw ConfigError("unknown key '" + key + "'");
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("environment")) {
      each_key(j.at("environment"), "environment", [&](const std::string& key, const store::Json& v) {
        if (key == "kind") {
          const auto s = v.get<std::string>();
          if (s == "synthetic") c.environment.kind = EnvKind::synthetic;
          else if (s == "lander") c.environment.kind = EnvKind::lander;
          else throw ConfigError("environment.kind must be synthetic or lander, got '" + s + "'");
        } else if (key == "space") {
          c.environment.space = model::param_space_from_json(v);
        } else if (key == "noise_std") {
          c.environment.noise_std = v.get<double>();
        } else {
          return false;
        }
        return true;
      });
    }
    // Student defaults follow the environment.
    c.student.kind = c.environment.kind == EnvKind::synthetic ? StudentKind::zpd : StudentKind::pg;
    if (j.contains("student")) {
      each_key(j.at("student"), "student", [&](const std::string& key, const store::Json& v) {
        if (key == "kind") {
          const auto s = v.get<std::string>();
          if (s == "zpd") c.student.kind = StudentKind::zpd;
          else if (s == "pg") c.student.kind = StudentKind::pg;
          else throw ConfigError("student.kind must be zpd or pg, got '" + s + "'");
        } else if (key == "zpd") {
          c.student.zpd = zpd_from_json(v);
        } else if (key == "pg") {
          c.student.pg = students::pg_hyper_from_json(v);
        } else if (key == "id") {
          c.student.id = v.get<std::string>();
        } else {
          return false;
        }
        return true;
      });
    }
    if (j.contains("perm")) c.perm = model::perm_config_from_json(j.at("perm"));
    if (j.contains("fit")) {
      each_key(j.at("fit"), "fit", [&](const std::string& key, const store::Json& v) {
        if (key == "steps") c.fit.steps = v.get<std::size_t>();
        else if (key == "eval_every") c.fit.eval_every = v.get<std::size_t>();
        else if (key == "patience") c.fit.patience = v.get<std::size_t>();
        else if (key == "holdout_fraction") c.fit.holdout_fraction = v.get<double>();
        else if (key == "min_records") c.fit.min_records = v.get<std::size_t>();
        else return false;
        return true;
      });
    }
    store::Json cur = j.contains("curriculum") ? j.at("curriculum") : store::Json::object();
    if (!cur.is_object()) throw ConfigError("'curriculum' must be an object");
    if (!cur.contains("eval_set")) cur["eval_set"] = default_eval_set(c.environment.param_space());
    c.curriculum = curriculum::curriculum_config_from_json(cur);
    if (j.contains("service")) {
      each_key(j.at("service"), "service", [&](const std::string& key, const store::Json& v) {
        if (key == "host") c.service.host = v.get<std::string>();
        else if (key == "port") c.service.port = v.get<int>();
        else if (key == "log_dir") c.service.log_dir = v.get<std::string>();
        else if (key == "smoothing_window") c.service.smoothing_window = v.get<std::size_t>();
        else return false;
        return true;
      });
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad configuration value: ") + e.what());
  }
  c.validate();
  return c;
}

store::Json to_json(const RunConfig& c) {
  store::Json j;
  j["seed"] = c.seed;
  j["environment"] = {{"kind", to_string(c.environment.kind)},
                      {"space", model::to_json(c.environment.param_space())},
                      {"noise_std", c.environment.noise_std}};
  j["student"] = {{"kind", to_string(c.student.kind)},
                  {"id", c.student.id},
                  {"zpd", to_json(c.student.zpd)},
                  {"pg", students::to_json(c.student.pg)}};
  j["perm"] = model::to_json(c.perm);
  j["fit"] = {{"steps", c.fit.steps},
              {"eval_every", c.fit.eval_every},
              {"patience", c.fit.patience},
              {"holdout_fraction", c.fit.holdout_fraction},
              {"min_records", c.fit.min_records}};
  j["curriculum"] = curriculum::to_json(c.curriculum);
  j["service"] = {{"host", c.service.host},
                  {"port", c.service.port},
                  {"log_dir", c.service.log_dir},
                  {"smoothing_window", c.service.smoothing_window}};
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  store::Json j;
  try {
    j = store::Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::unique_ptr<students::Trainee> make_trainee(const RunConfig& c) {
  const auto space = c.environment.param_space();
  if (c.environment.kind == EnvKind::synthetic) {
    return std::make_unique<students::ZpdTrainee>(
        c.student.zpd, env::SyntheticEnv(space, c.environment.noise_std), c.student.id);
  }
  students::PgHyper h = c.student.pg;
  h.seed = fork_seed(c.seed, h.seed);
  return std::make_unique<students::LanderTrainee>(h, space, c.student.id);
}

std::unique_ptr<students::Trainee> load_trainee(const RunConfig& c, const store::Checkpoint& ckpt) {
  const auto space = c.environment.param_space();
  if (c.environment.kind == EnvKind::synthetic) {
    if (ckpt.kind != students::kZpdCheckpointKind) {
      throw ConfigError("checkpoint kind '" + ckpt.kind +
                        "' does not fit the synthetic environment (expected " +
                        students::kZpdCheckpointKind + ")");
    }
    return std::make_unique<students::ZpdTrainee>(
        students::ZpdTrainee::params_from_checkpoint(ckpt),
        env::SyntheticEnv(space, c.environment.noise_std), c.student.id);
  }
  if (ckpt.kind != students::kPgCheckpointKind) {
    throw ConfigError("checkpoint kind '" + ckpt.kind +
                      "' does not fit the lander environment (expected " +
                      students::kPgCheckpointKind + ")");
  }
  return std::make_unique<students::LanderTrainee>(
      students::PolicyGradientStudent::from_checkpoint(ckpt), space, c.student.id);
}

}  // namespace perm::cli
