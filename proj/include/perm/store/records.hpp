// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace perm::store {

using Json = nlohmann::ordered_json;

inline constexpr int kLogFormatVersion = 1;

// One student-environment episode.
struct InteractionRecord {
  std::int64_t episode_index = 0;
  std::string student_id;
  std::vector<std::string> lambda_names;
  std::vector<double> lambda_raw;
  std::vector<double> lambda_normalized;
  double raw_reward = 0.0;
  double normalized_response = 0.0;
  std::int64_t episode_length = 1;
  std::string terminal_kind = "synthetic";
  std::string wall_time;

  bool operator==(const InteractionRecord&) const = default;
};

Json to_json(const InteractionRecord& r);
// Throws InvalidArgument describing the first violated field.
InteractionRecord record_from_json(const Json& j);
// Empty when valid.
std::string validate(const InteractionRecord& r);

// Current UTC time, ISO-8601 with milliseconds.
std::string utc_timestamp();

// Append-only line-delimited JSON file; one object per line, flushed
// after every write. Single writer per file.
class JsonlWriter {
 public:
  JsonlWriter() = default;
  // `truncate` starts a fresh file; otherwise appends.
  explicit JsonlWriter(const std::filesystem::path& path, bool truncate = false);

  void write(const Json& line);
  const std::filesystem::path& path() const { return path_; }
  bool is_open() const { return out_.is_open(); }
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

struct LineIssue {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct JsonlContents {
  std::vector<Json> lines;
  std::vector<std::size_t> line_numbers;
  // Partial trailing line (no newline) that was dropped.
  std::size_t truncated_lines = 0;
  std::vector<LineIssue> issues;
};

// Reads complete lines only; never modifies the file.
JsonlContents read_jsonl(const std::filesystem::path& path);

class RecordLog {
 public:
  explicit RecordLog(const std::filesystem::path& path, bool truncate = false)
      : writer_(path, truncate) {}
  void append(const InteractionRecord& r);
  const std::filesystem::path& path() const { return writer_.path(); }

 private:
  JsonlWriter writer_;
};

struct RecordReadResult {
  std::vector<InteractionRecord> records;
  std::size_t truncated_lines = 0;
  std::vector<LineIssue> issues;  // invalid records, with line numbers
};

RecordReadResult read_records(const std::filesystem::path& path);

// Deterministic shuffle-and-split. The holdout gets round(fraction * n)
// elements.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_holdout(const std::vector<T>& items,
                                                        double fraction, std::uint64_t seed);

std::vector<std::size_t> holdout_permutation(std::size_t n, double fraction, std::uint64_t seed,
                                             std::size_t* holdout_count);

template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_holdout(const std::vector<T>& items,
                                                        double fraction, std::uint64_t seed) {
  std::size_t hold = 0;
  const auto perm = holdout_permutation(items.size(), fraction, seed, &hold);
  std::vector<T> train, holdout;
  train.reserve(items.size() - hold);
  holdout.reserve(hold);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    (i < hold ? holdout : train).push_back(items[perm[i]]);
  }
  return {std::move(train), std::move(holdout)};
}

// Run manifest: the full materialized configuration of a run plus the
// artifacts it produced.
struct RunManifest {
  std::string run_id;
  std::string command;
  std::string mode;
  std::uint64_t seed = 0;
  Json config;
  std::vector<std::string> artifacts;
};

// Verifies every artifact exists, then writes the manifest (refusing to
// overwrite an existing one).
void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

}  // namespace perm::store
