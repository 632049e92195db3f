// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/cli/commands.hpp"

#include <csignal>
#include <iomanip>
#include <pthread.h>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "perm/cli/run_config.hpp"
#include "perm/curriculum/metrics.hpp"
#include "perm/service/http_server.hpp"
#include "perm/store/checkpoint.hpp"

namespace perm::cli {

namespace {

namespace fs = std::filesystem;

// Runs `body`, mapping configuration problems to exit 2 and everything
// else to exit 1.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

std::string run_id(const std::string& command, std::uint64_t seed, const store::Json& config) {
  const auto text = config.dump();
  const std::vector<unsigned char> bytes(text.begin(), text.end());
  return command + "-" + std::to_string(seed) + "-" + store::sha256_hex(bytes).substr(0, 12);
}

void refuse_existing(const fs::path& manifest) {
  if (fs::exists(manifest)) {
    throw ConfigError("manifest '" + manifest.string() +
                      "' already exists; choose a new output path");
  }
}

std::string format_vector(const std::vector<double>& v) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ']';
  return os.str();
}

store::Checkpoint read_checkpoint_or_usage(const std::string& path, const char* what) {
  if (!fs::exists(path)) throw ConfigError(std::string(what) + " checkpoint '" + path + "' not found");
  return store::read_checkpoint(path);
}

}  // namespace

int cmd_collect(const CollectOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto c = load_run_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (o.episodes == 0) throw ConfigError("--episodes must be >= 1");
    if (o.out.empty()) throw ConfigError("--out is required");
    const fs::path manifest = o.out + ".manifest.json";
    refuse_existing(manifest);

    auto cc = c.curriculum;
    cc.mode = curriculum::Mode::dr;
    cc.total_episodes = o.episodes;
    cc.total_steps = 0;
    cc.stop_at_skill.reset();
    cc.eval_every = 0;
    cc.seed = fork_seed(c.seed, "collect");
    auto student = make_trainee(c);
    store::RecordLog log(o.out, /*truncate=*/true);
    curriculum::RunOptions ro;
    ro.records = &log;
    const auto report = curriculum::run_dr(*student, cc, ro);

    out << std::fixed << std::setprecision(4) << "records         " << report.summary.episodes
        << "\nmean_reward     " << report.summary.mean_raw_reward << "\nmean_length     "
        << report.summary.mean_episode_length << '\n';

    store::RunManifest m;
    m.config = to_json(c);
    m.config["curriculum"] = curriculum::to_json(cc);
    m.run_id = run_id("collect", c.seed, m.config);
    m.command = "collect";
    m.mode = "dr";
    m.seed = c.seed;
    m.artifacts = {o.out};
    store::write_manifest(manifest, m);
    return kExitOk;
  });
}

int cmd_train_perm(const TrainPermOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto c = load_run_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (o.holdout_fraction) c.fit.holdout_fraction = *o.holdout_fraction;
    if (o.steps) c.fit.steps = *o.steps;
    c.validate();
    if (o.out.empty()) throw ConfigError("--out is required");
    if (!fs::exists(o.data)) throw ConfigError("data log '" + o.data + "' not found");
    const fs::path manifest = o.out + ".manifest.json";
    refuse_existing(manifest);

    const auto read = store::read_records(o.data);
    for (const auto& issue : read.issues) {
      err << "warning: " << o.data << ':' << issue.line << ": " << issue.message << '\n';
    }
    if (read.truncated_lines > 0) {
      err << "warning: " << o.data << ": dropped " << read.truncated_lines
          << " truncated trailing line\n";
    }
    if (read.records.size() < c.fit.min_records) {
      throw ConfigError("log has " + std::to_string(read.records.size()) +
                        " valid records, need at least " + std::to_string(c.fit.min_records));
    }
    const auto space = c.environment.param_space();
    for (const auto& r : read.records) {
      if (r.lambda_names != space.names()) {
        throw ConfigError("record parameter names do not match the configured environment");
      }
    }
    const auto obs = model::observations_of(read.records);
    const auto [train, holdout] =
        store::split_holdout(obs, c.fit.holdout_fraction, fork_seed(c.seed, "split"));

    model::PermModel perm(c.perm, space);
    model::FitOptions fo;
    fo.steps = c.fit.steps;
    fo.eval_every = c.fit.eval_every;
    fo.patience = c.fit.patience;
    fo.seed = fork_seed(c.seed, "fit");
    const auto fr = model::fit(perm, train, holdout, fo);
    perm.save(o.out);

    out << std::fixed << std::setprecision(6);
    out << "train_records   " << train.size() << "\nholdout_records " << holdout.size()
        << "\nsteps_run       " << fr.steps_run << "\nearly_stopped   "
        << (fr.early_stopped ? "yes" : "no") << '\n';
    if (holdout.size() >= curriculum::kMinHoldout) {
      const auto m = curriculum::analysis_metrics(perm, holdout);
      out << "response_mse    " << m.response_mse << "  (normalized r)\n"
          << "lambda_mse      " << m.lambda_mse << "  (normalized lambda)\n"
          << "r_squared       " << m.r_squared << "\ncorr_a_r        " << m.corr_a_r
          << "\ncorr_d_r        " << m.corr_d_r << '\n';
    } else {
      out << "metrics         skipped (holdout below " << curriculum::kMinHoldout
          << " records)\n";
    }

    store::RunManifest m;
    m.config = to_json(c);
    m.config["data"] = o.data;
    m.run_id = run_id("train-perm", c.seed, m.config);
    m.command = "train-perm";
    m.mode = "offline";
    m.seed = c.seed;
    m.artifacts = {o.out};
    store::write_manifest(manifest, m);
    return kExitOk;
  });
}

int cmd_curriculum(const CurriculumOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto c = load_run_config(o.config);
    if (o.seed) c.seed = *o.seed;
    try {
      if (o.mode) c.curriculum.mode = curriculum::mode_from_string(*o.mode);
    } catch (const InvalidArgument& e) {
      throw ConfigError(e.what());
    }
    if (o.episodes) c.curriculum.total_episodes = *o.episodes;
    c.curriculum.seed = fork_seed(c.seed, "curriculum");
    c.validate();
    if (o.out_dir.empty()) throw ConfigError("--out is required");
    const fs::path dir = o.out_dir;
    refuse_existing(dir / "manifest.json");
    const auto mode = c.curriculum.mode;
    if (mode == curriculum::Mode::perm_offline && !o.perm) {
      throw ConfigError("perm-offline mode requires --perm CKPT");
    }

    const auto space = c.environment.param_space();
    std::optional<model::PermModel> perm;
    if (mode != curriculum::Mode::dr) {
      if (o.perm) {
        auto ckpt = read_checkpoint_or_usage(*o.perm, "PERM");
        perm.emplace(model::PermModel::from_checkpoint(ckpt, c.perm.latent_dim));
        if (!(perm->space() == space)) {
          throw ConfigError("PERM checkpoint parameter space differs from the environment's");
        }
      } else {
        auto pc = c.perm;
        pc.seed = fork_seed(c.seed, fork_seed(pc.seed, "perm-init"));
        perm.emplace(pc, space);
      }
    }

    fs::create_directories(dir);
    auto student = make_trainee(c);
    store::RecordLog records(dir / "records.jsonl", /*truncate=*/true);
    store::JsonlWriter events(dir / "events.jsonl", /*truncate=*/true);
    curriculum::RunOptions ro;
    ro.records = &records;
    ro.events = &events;
    const auto report = curriculum::run_curriculum(*student, perm ? &*perm : nullptr,
                                                   c.curriculum, ro);
    events.close();
    curriculum::write_report(dir / "report.jsonl", report);
    store::write_checkpoint(dir / "student.ckpt", student->to_checkpoint());
    std::vector<std::string> artifacts = {(dir / "report.jsonl").string(),
                                          (dir / "records.jsonl").string(),
                                          (dir / "events.jsonl").string(),
                                          (dir / "student.ckpt").string()};
    if (mode == curriculum::Mode::perm_online) {
      perm->save(dir / "perm.ckpt");
      artifacts.push_back((dir / "perm.ckpt").string());
    }
    out << curriculum::format_summary(report.summary);

    store::RunManifest m;
    m.config = to_json(c);
    if (o.perm && mode != curriculum::Mode::dr) m.config["perm_checkpoint"] = *o.perm;
    m.run_id = run_id("curriculum", c.seed, m.config);
    m.command = "curriculum";
    m.mode = curriculum::to_string(mode);
    m.seed = c.seed;
    m.artifacts = artifacts;
    store::write_manifest(dir / "manifest.json", m);
    return kExitOk;
  });
}

int cmd_eval(const EvalOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto c = load_run_config(o.config);
    if (o.seed) c.seed = *o.seed;
    const auto ckpt = read_checkpoint_or_usage(o.student, "student");
    const auto student = load_trainee(c, ckpt);
    const auto& set = c.curriculum.eval_set;
    const auto result =
        curriculum::evaluate(*student, set, c.curriculum.eval_episodes, fork_seed(c.seed, "eval"));
    out << std::left << std::setw(8) << "env" << std::setw(28) << "lambda"
        << "mean_return\n";
    out << std::fixed << std::setprecision(4);
    for (std::size_t i = 0; i < set.size(); ++i) {
      out << std::left << std::setw(8) << i << std::setw(28) << format_vector(set[i])
          << result.per_env[i] << '\n';
    }
    out << std::left << std::setw(36) << "pooled" << result.pooled << '\n';
    return kExitOk;
  });
}

int cmd_serve(const ServeOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto c = load_run_config(o.config);
    if (o.port) c.service.port = *o.port;
    if (o.host) c.service.host = *o.host;
    if (o.log_dir) c.service.log_dir = *o.log_dir;
    c.validate();
    const auto ckpt = read_checkpoint_or_usage(o.perm, "PERM");
    auto perm = std::make_shared<const model::PermModel>(
        model::PermModel::from_checkpoint(ckpt, c.perm.latent_dim));

    service::ServiceConfig sc;
    sc.log_dir = c.service.log_dir;
    sc.normalizer = c.curriculum.normalizer;
    sc.smoothing_window = c.service.smoothing_window;
    sc.seed = c.seed;
    service::SessionService svc(perm, sc);
    const auto restored = svc.replay();

    // Handle SIGINT/SIGTERM on a dedicated thread; every other thread
    // keeps them blocked.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    service::HttpServer server(svc);
    const int port = server.bind(c.service.host, c.service.port);
    out << "listening on " << c.service.host << ':' << port << " (" << restored
        << " sessions restored)" << std::endl;

    std::thread waiter([&] {
      int sig = 0;
      sigwait(&signals, &sig);
      server.stop();
    });
    server.run();
    // run() also returns on listen failure; wake the waiter either way.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    svc.close_all();
    out << "stopped; session logs closed" << std::endl;
    return kExitOk;
  });
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"PERM curriculum generator"};
  app.require_subcommand(1);

  CollectOptions co;
  auto* collect = app.add_subcommand("collect", "Collect a domain-randomization interaction log");
  collect->add_option("--config", co.config, "Run configuration file")->required();
  collect->add_option("--episodes", co.episodes, "Number of episodes")->required();
  collect->add_option("--out", co.out, "Output log path")->required();
  collect->add_option("--seed", co.seed, "Root seed override");

  TrainPermOptions to;
  auto* train = app.add_subcommand("train-perm", "Train PERM offline on an interaction log");
  train->add_option("--config", to.config, "Run configuration file")->required();
  train->add_option("--data", to.data, "Interaction log")->required();
  train->add_option("--holdout-frac", to.holdout_fraction, "Holdout fraction");
  train->add_option("--out", to.out, "Output checkpoint")->required();
  train->add_option("--steps", to.steps, "Training step budget");
  train->add_option("--seed", to.seed, "Root seed override");

  CurriculumOptions cu;
  auto* cur = app.add_subcommand("curriculum", "Train a student under a curriculum");
  cur->add_option("--config", cu.config, "Run configuration file")->required();
  cur->add_option("--mode", cu.mode, "perm-online, perm-offline or dr");
  cur->add_option("--perm", cu.perm, "PERM checkpoint");
  cur->add_option("--out", cu.out_dir, "Output directory")->required();
  cur->add_option("--seed", cu.seed, "Root seed override");
  cur->add_option("--episodes", cu.episodes, "Episode budget override");

  EvalOptions eo;
  auto* ev = app.add_subcommand("eval", "Evaluate a frozen student on the evaluation set");
  ev->add_option("--config", eo.config, "Run configuration file")->required();
  ev->add_option("--student", eo.student, "Student checkpoint")->required();
  ev->add_option("--seed", eo.seed, "Root seed override");

  ServeOptions so;
  auto* serve = app.add_subcommand("serve", "Serve adaptive sessions over HTTP");
  serve->add_option("--config", so.config, "Run configuration file")->required();
  serve->add_option("--perm", so.perm, "Frozen PERM checkpoint")->required();
  serve->add_option("--port", so.port, "Port (0 picks a free one)");
  serve->add_option("--host", so.host, "Bind address");
  serve->add_option("--log-dir", so.log_dir, "Session log directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  if (*collect) return cmd_collect(co, out, err);
  if (*train) return cmd_train_perm(to, out, err);
  if (*cur) return cmd_curriculum(cu, out, err);
  if (*ev) return cmd_eval(eo, out, err);
  return cmd_serve(so, out, err);
}

}  // namespace perm::cli
