// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "perm/cli/commands.hpp"
#include "perm/store/checkpoint.hpp"
#include "perm/store/records.hpp"

using namespace perm;
using namespace perm::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::path(PERM_TEST_TMP) / "cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "perm");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// The shipped synthetic configuration shrunk for test runtimes.
fs::path small_config(const fs::path& dir) {
  std::ifstream in(fs::path(PERM_SOURCE_DIR) / "configs" / "synthetic.json");
  auto j = store::Json::parse(in);
  j["perm"]["hidden"] = {16, 16};
  j["fit"]["steps"] = 60;
  j["fit"]["eval_every"] = 20;
  j["curriculum"]["total_episodes"] = 160;
  j["curriculum"]["eval_every"] = 80;
  j["curriculum"]["eval_episodes"] = 2;
  const auto path = dir / "config.json";
  std::ofstream(path) << j.dump(2);
  return path;
}

std::vector<store::Json> without_wall_time(const fs::path& p) {
  auto lines = store::read_jsonl(p).lines;
  for (auto& l : lines) l.erase("wall_time");
  return lines;
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(invoke({}).code, kExitUsage);
  EXPECT_EQ(invoke({"bogus"}).code, kExitUsage);
  EXPECT_EQ(invoke({"collect", "--episodes", "5"}).code, kExitUsage);
  const auto dir = fresh_dir("usage");
  std::ofstream(dir / "bad.json") << R"({"seed": 1, "unknown_key": 3})";
  const auto r = invoke({"collect", "--config", (dir / "bad.json").string(), "--episodes", "5",
                      "--out", (dir / "x.jsonl").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(invoke({"eval", "--config", (dir / "missing.json").string(), "--student", "s"}).code,
            kExitUsage);
}

TEST(Cli, CollectWritesRecordsAndManifestDeterministically) {
  const auto dir = fresh_dir("collect");
  const auto cfg = small_config(dir).string();
  const auto a = dir / "a.jsonl", b = dir / "b.jsonl";
  ASSERT_EQ(invoke({"collect", "--config", cfg, "--episodes", "50", "--out", a.string()}).code,
            kExitOk);
  ASSERT_EQ(invoke({"collect", "--config", cfg, "--episodes", "50", "--out", b.string()}).code,
            kExitOk);
  const auto recs = store::read_records(a);
  EXPECT_EQ(recs.records.size(), 50u);
  EXPECT_TRUE(recs.issues.empty());
  EXPECT_EQ(without_wall_time(a), without_wall_time(b));
  const auto m = store::read_manifest(a.string() + ".manifest.json");
  EXPECT_EQ(m.command, "collect");
  EXPECT_EQ(m.seed, 7u);
  // Manifests are never overwritten.
  EXPECT_EQ(invoke({"collect", "--config", cfg, "--episodes", "50", "--out", a.string()}).code,
            kExitUsage);
  const auto c = dir / "c.jsonl";
  ASSERT_EQ(invoke({"collect", "--config", cfg, "--episodes", "50", "--out", c.string(), "--seed",
                 "8"}).code,
            kExitOk);
  EXPECT_NE(without_wall_time(a), without_wall_time(c));
}

TEST(Cli, TrainCurriculumEvalPipeline) {
  const auto dir = fresh_dir("pipeline");
  const auto cfg = small_config(dir).string();
  const auto data = (dir / "d.jsonl").string();
  const auto ckpt = (dir / "perm.ckpt").string();
  const auto few = (dir / "few.jsonl").string();
  ASSERT_EQ(invoke({"collect", "--config", cfg, "--episodes", "200", "--out", few}).code, kExitOk);
  // Too little data to train on.
  EXPECT_EQ(invoke({"train-perm", "--config", cfg, "--data", few, "--out", ckpt}).code,
            kExitUsage);
  ASSERT_EQ(invoke({"collect", "--config", cfg, "--episodes", "600", "--out", data}).code, kExitOk);
  const auto train = invoke({"train-perm", "--config", cfg, "--data", data, "--out", ckpt});
  ASSERT_EQ(train.code, kExitOk) << train.err;
  EXPECT_NO_THROW(store::read_checkpoint(ckpt));
  EXPECT_TRUE(fs::exists(ckpt + ".manifest.json"));

  const auto ckpt_hash = store::file_sha256(ckpt);
  const auto run = dir / "offline";
  const auto cur = invoke({"curriculum", "--config", cfg, "--mode", "perm-offline", "--perm", ckpt,
                        "--out", run.string()});
  ASSERT_EQ(cur.code, kExitOk) << cur.err;
  for (const char* f : {"manifest.json", "report.jsonl", "records.jsonl", "events.jsonl",
                        "student.ckpt"}) {
    EXPECT_TRUE(fs::exists(run / f)) << f;
  }
  EXPECT_EQ(store::read_records(run / "records.jsonl").records.size(), 160u);
  // The frozen model is left untouched on disk.
  EXPECT_EQ(store::file_sha256(ckpt), ckpt_hash);

  const auto ev = invoke({"eval", "--config", cfg, "--student", (run / "student.ckpt").string()});
  ASSERT_EQ(ev.code, kExitOk) << ev.err;
  EXPECT_NE(ev.out.find("pooled"), std::string::npos);

  // Offline mode without a model is a usage error.
  EXPECT_EQ(invoke({"curriculum", "--config", cfg, "--mode", "perm-offline", "--out",
                 (dir / "nomodel").string()}).code,
            kExitUsage);
  EXPECT_EQ(invoke({"curriculum", "--config", cfg, "--mode", "sideways", "--out",
                 (dir / "badmode").string()}).code,
            kExitUsage);
  // A corrupt checkpoint is a runtime failure.
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  EXPECT_NE(invoke({"eval", "--config", cfg, "--student", (dir / "junk.ckpt").string()}).code,
            kExitOk);
}

TEST(Cli, CurriculumRunsAreReproducible) {
  const auto dir = fresh_dir("repro");
  const auto cfg = small_config(dir).string();
  for (const char* name : {"one", "two"}) {
    ASSERT_EQ(invoke({"curriculum", "--config", cfg, "--mode", "perm-online", "--out",
                   (dir / name).string()}).code,
              kExitOk);
  }
  EXPECT_EQ(without_wall_time(dir / "one" / "records.jsonl"),
            without_wall_time(dir / "two" / "records.jsonl"));
  EXPECT_EQ(without_wall_time(dir / "one" / "report.jsonl"),
            without_wall_time(dir / "two" / "report.jsonl"));
  EXPECT_EQ(store::read_checkpoint(dir / "one" / "perm.ckpt"),
            store::read_checkpoint(dir / "two" / "perm.ckpt"));
}

TEST(Cli, BinaryExitCodes) {
  const std::string bin = PERM_CLI_BIN;
  EXPECT_EQ(WEXITSTATUS(std::system((bin + " --help > /dev/null").c_str())), 0);
  EXPECT_EQ(WEXITSTATUS(std::system((bin + " nosuch 2> /dev/null").c_str())), 2);
}
