// Copyright 2026 The PERM Curriculum Authors
// SPDX-License-Identifier: Apache-2.0

#include "perm/store/checkpoint.hpp"

#include <openssl/sha.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace perm::store {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

constexpr char kMagic[8] = {'P', 'E', 'R', 'M', 'C', 'K', 'P', 'T'};
constexpr std::size_t kDigestSize = SHA256_DIGEST_LENGTH;

class Writer {
 public:
  template <typename T>
  void put(T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.insert(out.end(), b, b + sizeof(T));
  }
  void put_bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    out.insert(out.end(), c, c + n);
  }
  void put_string32(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  std::vector<unsigned char> out;
};

class Reader {
 public:
  Reader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, p_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(std::uint64_t len) {
    need(len);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), len);
    pos_ += len;
    return s;
  }
  bool at_end() const { return pos_ == n_; }

 private:
  void need(std::uint64_t k) const {
    if (k > n_ - pos_) throw CorruptError("checkpoint: unexpected end of data");
  }
  const unsigned char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> sha256(const unsigned char* p, std::size_t n) {
  std::vector<unsigned char> d(kDigestSize);
  SHA256(p, n, d.data());
  return d;
}

}  // namespace

void Checkpoint::add(std::string name, const ad::Tensor& t) {
  arrays.push_back({std::move(name), t.shape(), {t.values().begin(), t.values().end()}});
}

const NamedArray& Checkpoint::get(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw CorruptError("checkpoint: missing array '" + name + "'");
}

ad::Tensor Checkpoint::tensor(const std::string& name, const ad::Shape& expected) const {
  const auto& a = get(name);
  if (a.shape != expected) {
    throw ShapeMismatch("checkpoint array '" + name + "': stored shape " + ad::to_string(a.shape) +
                        ", expected " + ad::to_string(expected));
  }
  return ad::Tensor(a.shape, a.values);
}

std::vector<unsigned char> encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put_string32(c.kind);
  const std::string meta = c.meta.dump();
  w.put<std::uint64_t>(meta.size());
  w.put_bytes(meta.data(), meta.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.arrays.size()));
  for (const auto& a : c.arrays) {
    if (ad::element_count(a.shape) != a.values.size()) {
      throw ShapeError("checkpoint array '" + a.name + "': shape " + ad::to_string(a.shape) +
                       " does not match " + std::to_string(a.values.size()) + " values");
    }
    w.put_string32(a.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) w.put<std::uint64_t>(d);
    w.put_bytes(a.values.data(), a.values.size() * sizeof(double));
  }
  const auto digest = sha256(w.out.data(), w.out.size());
  w.put_bytes(digest.data(), digest.size());
  return std::move(w.out);
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + kDigestSize ||
      std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CorruptError("checkpoint: bad magic (not a checkpoint file)");
  }
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + sizeof kMagic, sizeof version);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint: file format version " + std::to_string(version) +
                       ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  const std::size_t body = bytes.size() - kDigestSize;
  if (sha256(bytes.data(), body) !=
      std::vector<unsigned char>(bytes.begin() + static_cast<std::ptrdiff_t>(body), bytes.end())) {
    throw CorruptError("checkpoint: digest mismatch (file is corrupt)");
  }

  Reader r(bytes.data(), body);
  r.get_string(sizeof kMagic);
  r.get<std::uint32_t>();
  Checkpoint c;
  c.kind = r.get_string(r.get<std::uint32_t>());
  try {
    c.meta = Json::parse(r.get_string(r.get<std::uint64_t>()));
  } catch (const nlohmann::json::exception& e) {
    throw CorruptError(std::string("checkpoint: bad metadata: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.get_string(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    if (rank == 0 || rank > 2) throw CorruptError("checkpoint: bad rank for '" + a.name + "'");
    std::uint64_t total = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      const auto d = r.get<std::uint64_t>();
      if (d == 0 || d > (std::uint64_t{1} << 32)) throw CorruptError("checkpoint: bad dimension");
      a.shape.push_back(static_cast<std::size_t>(d));
      total *= d;
    }
    if (total > body / sizeof(double)) throw CorruptError("checkpoint: array exceeds file size");
    a.values.resize(static_cast<std::size_t>(total));
    for (auto& v : a.values) {
      v = r.get<double>();
      if (!std::isfinite(v)) throw CorruptError("checkpoint: non-finite value in '" + a.name + "'");
    }
    c.arrays.push_back(std::move(a));
  }
  if (!r.at_end()) throw CorruptError("checkpoint: trailing bytes before digest");
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  const auto bytes = encode_checkpoint(c);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("cannot write checkpoint '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into '" + path.string() + "': " + ec.message());
}

namespace {
std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}
}  // namespace

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_bytes(path));
  } catch (const CorruptError& e) {
    throw CorruptError(path.string() + ": " + e.what());
  }
}

std::string sha256_hex(const std::vector<unsigned char>& bytes) {
  const auto d = sha256(bytes.data(), bytes.size());
  std::ostringstream os;
  for (unsigned char b : d) os << std::hex << std::setw(2) << std::setfill('0') << int(b);
  return os.str();
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_bytes(path)); }

}  // namespace perm::store
