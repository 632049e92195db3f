// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "perm/error.hpp"
#include "perm/grad/tensor.hpp"
#include "perm/store/records.hpp"

// Versioned binary checkpoint container shared by PERM models and students.
//
// Layout (little-endian):
//   magic     8 bytes  "PERMCKPT"
//   version   u32
//   kind      u32 length + UTF-8 bytes
//   meta      u64 length + JSON text
//   count     u32 number of arrays
//   arrays    name (u32 length + bytes), rank u32, dims u64 x rank,
//             values f64 x product(dims)
//   digest    32 bytes SHA-256 over everything above
namespace perm::store {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class VersionError : public Error {
 public:
  using Error::Error;
};
class CorruptError : public Error {
 public:
  using Error::Error;
};
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

struct NamedArray {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;

  bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
  std::string kind;
  Json meta = Json::object();
  std::vector<NamedArray> arrays;

  void add(std::string name, const ad::Tensor& t);
  // Throws CorruptError when absent.
  const NamedArray& get(const std::string& name) const;
  // Throws ShapeMismatch naming both shapes when the stored shape differs.
  ad::Tensor tensor(const std::string& name, const ad::Shape& expected) const;

  bool operator==(const Checkpoint& o) const {
    return kind == o.kind && meta == o.meta && arrays == o.arrays;
  }
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& c);
// Checks magic, then version, then digest, then structure.
Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes);

// Atomic: writes a sibling temporary file and renames it into place.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::filesystem::path& path);

std::string sha256_hex(const std::vector<unsigned char>& bytes);
// Hex SHA-256 of a file's bytes.
std::string file_sha256(const std::filesystem::path& path);

}  // namespace perm::store
