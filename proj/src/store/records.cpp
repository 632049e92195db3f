// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/store/records.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

#include "perm/error.hpp"

namespace perm::store {

Json to_json(const InteractionRecord& r) {
  Json j;
  j["episode_index"] = r.episode_index;
  j["student_id"] = r.student_id;
  j["lambda_names"] = r.lambda_names;
  j["lambda_raw"] = r.lambda_raw;
  j["lambda_normalized"] = r.lambda_normalized;
  j["raw_reward"] = r.raw_reward;
  j["normalized_response"] = r.normalized_response;
  j["episode_length"] = r.episode_length;
  j["terminal_kind"] = r.terminal_kind;
  j["wall_time"] = r.wall_time;
  return j;
}

InteractionRecord record_from_json(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("record is not an object");
  auto field = [&j](const char* name) -> const Json& {
    auto it = j.find(name);
    if (it == j.end()) throw InvalidArgument(std::string("missing field '") + name + "'");
    return *it;
  };
  InteractionRecord r;
  try {
    r.episode_index = field("episode_index").get<std::int64_t>();
    r.student_id = field("student_id").get<std::string>();
    r.lambda_names = field("lambda_names").get<std::vector<std::string>>();
    r.lambda_raw = field("lambda_raw").get<std::vector<double>>();
    r.lambda_normalized = field("lambda_normalized").get<std::vector<double>>();
    r.raw_reward = field("raw_reward").get<double>();
    r.normalized_response = field("normalized_response").get<double>();
    r.episode_length = field("episode_length").get<std::int64_t>();
    r.terminal_kind = field("terminal_kind").get<std::string>();
    r.wall_time = field("wall_time").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad field type: ") + e.what());
  }
  if (auto msg = validate(r); !msg.empty()) throw InvalidArgument(msg);
  return r;
}

std::string validate(const InteractionRecord& r) {
  const auto p = r.lambda_names.size();
  if (p == 0) return "lambda_names is empty";
  if (r.lambda_raw.size() != p || r.lambda_normalized.size() != p) {
    return "lambda_raw/lambda_normalized length differs from lambda_names";
  }
  for (double v : r.lambda_raw) {
    if (!std::isfinite(v)) return "lambda_raw has a non-finite value";
  }
  for (double v : r.lambda_normalized) {
    if (!(v >= 0.0 && v <= 1.0)) return "lambda_normalized outside [0, 1]";
  }
  if (!std::isfinite(r.raw_reward)) return "raw_reward is not finite";
  if (!std::isfinite(r.normalized_response)) return "normalized_response is not finite";
  if (r.episode_length < 1) return "episode_length must be >= 1";
  if (r.episode_index < 0) return "episode_index must be >= 0";
  return {};
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << ms
     << 'Z';
  return os.str();
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path, bool truncate) : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, truncate ? std::ios::out | std::ios::trunc : std::ios::out | std::ios::app);
  if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
}

void JsonlWriter::write(const Json& line) {
  out_ << line.dump() << '\n';
  out_.flush();
  if (!out_) throw IoError("write failed for '" + path_.string() + "'");
}

void JsonlWriter::close() {
  if (out_.is_open()) out_.close();
}

JsonlContents read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  JsonlContents out;
  std::size_t start = 0, line_no = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    ++line_no;
    if (nl == std::string::npos) {
      out.truncated_lines = 1;
      break;
    }
    const std::string_view line(text.data() + start, nl - start);
    start = nl + 1;
    if (line.empty()) continue;
    try {
      out.lines.push_back(Json::parse(line));
      out.line_numbers.push_back(line_no);
    } catch (const nlohmann::json::exception& e) {
      out.issues.push_back({line_no, std::string("unparseable line: ") + e.what()});
    }
  }
  return out;
}

void RecordLog::append(const InteractionRecord& r) {
  if (auto msg = validate(r); !msg.empty()) throw InvalidArgument("append_record: " + msg);
  writer_.write(to_json(r));
}

RecordReadResult read_records(const std::filesystem::path& path) {
  auto contents = read_jsonl(path);
  RecordReadResult out;
  out.truncated_lines = contents.truncated_lines;
  out.issues = std::move(contents.issues);
  std::set<std::int64_t> seen;
  for (std::size_t i = 0; i < contents.lines.size(); ++i) {
    try {
      auto r = record_from_json(contents.lines[i]);
      if (!seen.insert(r.episode_index).second) {
        throw InvalidArgument("duplicate episode_index " + std::to_string(r.episode_index));
      }
      out.records.push_back(std::move(r));
    } catch (const InvalidArgument& e) {
      out.issues.push_back({contents.line_numbers[i], e.what()});
    }
  }
  return out;
}

std::vector<std::size_t> holdout_permutation(std::size_t n, double fraction, std::uint64_t seed,
                                             std::size_t* holdout_count) {
  if (n == 0) throw InvalidArgument("split_holdout: empty input");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw InvalidArgument("split_holdout: fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 engine(seed);
  // Fisher-Yates with an explicit index draw, independent of std::shuffle's
  // implementation.
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(engine() % (i + 1));
    std::swap(perm[i], perm[j]);
  }
  *holdout_count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return perm;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  for (const auto& a : m.artifacts) {
    if (!std::filesystem::exists(a)) throw IoError("manifest artifact missing: " + a);
  }
  if (std::filesystem::exists(path)) {
    throw IoError("manifest already exists (manifests are immutable): " + path.string());
  }
  Json j;
  j["format_version"] = kLogFormatVersion;
  j["run_id"] = m.run_id;
  j["command"] = m.command;
  j["mode"] = m.mode;
  j["seed"] = m.seed;
  j["config"] = m.config;
  j["artifacts"] = m.artifacts;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad manifest: ") + e.what());
  }
  RunManifest m;
  m.run_id = j.at("run_id").get<std::string>();
  m.command = j.at("command").get<std::string>();
  m.mode = j.at("mode").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config = j.at("config");
  m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
  return m;
}

}  // namespace perm::store
