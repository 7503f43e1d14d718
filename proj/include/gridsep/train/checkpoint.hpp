// gridsep/train/checkpoint.hpp

// Copyright 2026 The gridsep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Binary checkpoint container (all integers little-endian):
//
//   "TFGN" | u32 version | str config
//   u32 n | n x array                        parameters, lexicographic
//   u32 m | m x array                        Adam moments ("adam.m/<name>", "adam.v/<name>")
//   str state                                 `key = value` lines
//
//   str   = u32 byte length, UTF-8 bytes
//   array = str name | u8 rank | rank x u32 extent | elements
//
// Elements are IEEE float32, or float64 when the config says
// `precision = float64`.

#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "gridsep/adcore/parameters.hpp"
#include "gridsep/train/optim.hpp"
#include "gridsep/train/run_config.hpp"

namespace gridsep::train {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedArray {
  std::string name;
  ad::Shape shape;
  std::vector<double> values;
};

/// Everything needed to rebuild a model and resume training.
struct Checkpoint {
  RunConfig config;
  std::vector<NamedArray> params;   // lexicographic by name
  std::vector<NamedArray> moments;  // adam.m/<name>, adam.v/<name>
  std::map<std::string, std::string> state;
};

namespace detail {

class Writer {
 public:
  explicit Writer(bool wide) : wide_(wide) {}
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void array(const NamedArray& a) {
    str(a.name);
    u8(static_cast<std::uint8_t>(a.shape.size()));
    for (auto e : a.shape) u32(static_cast<std::uint32_t>(e));
    for (double v : a.values) {
      if (wide_) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
      } else {
        const float f = static_cast<float>(v);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        u32(bits);
      }
    }
  }
  const std::vector<char>& bytes() const { return buf_; }

 private:
  bool wide_;
  std::vector<char> buf_;
};

class Reader {
 public:
  Reader(const std::vector<char>& b, std::string what) : b_(b), what_(std::move(what)) {}
  void need(std::size_t n) const {
    if (pos_ + n > b_.size())
      throw CheckpointError(fmt::format("{}: truncated at byte {} (need {} more, file has {})",
                                        what_, pos_, n, b_.size()));
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(b_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(b_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(b_[pos_++])) << (8 * i);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(b_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(b_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  NamedArray array(bool wide) {
    NamedArray a;
    a.name = str();
    const std::uint8_t rank = u8();
    for (std::uint8_t i = 0; i < rank; ++i) a.shape.push_back(u32());
    const std::size_t n = ad::numel(a.shape);
    need(n * (wide ? 8 : 4));
    a.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (wide) {
        const std::uint64_t bits = u64();
        std::memcpy(&a.values[i], &bits, 8);
      } else {
        const std::uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        a.values[i] = f;
      }
    }
    return a;
  }
  bool at_end() const { return pos_ == b_.size(); }

 private:
  const std::vector<char>& b_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::string state_text(const std::map<std::string, std::string>& st) {
  std::string s;
  for (const auto& [k, v] : st) s += k + " = " + v + "\n";
  return s;
}

inline std::map<std::string, std::string> parse_state(const std::string& text) {
  std::map<std::string, std::string> st;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    st[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return st;
}

}  // namespace detail

inline bool wide_elements(const RunConfig& c) { return c.train.precision == Precision::kFloat64; }

inline std::vector<char> encode_checkpoint(const Checkpoint& ck) {
  detail::Writer w(wide_elements(ck.config));
  w.u8('T');
  w.u8('F');
  w.u8('G');
  w.u8('N');
  w.u32(kCheckpointVersion);
  w.str(ck.config.to_text());
  w.u32(static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& a : ck.params) w.array(a);
  w.u32(static_cast<std::uint32_t>(ck.moments.size()));
  for (const auto& a : ck.moments) w.array(a);
  w.str(detail::state_text(ck.state));
  return w.bytes();
}

/// Parses a whole container; any defect throws before a Checkpoint exists.
inline Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& what) {
  detail::Reader r(bytes, what);
  if (r.raw(4) != "TFGN") throw CheckpointError(what + ": bad magic (not a gridsep checkpoint)");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError(fmt::format("{}: unsupported checkpoint version {} (expected {})", what,
                                      version, kCheckpointVersion));
  Checkpoint ck;
  try {
    ck.config = parse_run_config(r.str(), {}, what + " (embedded config)");
  } catch (const ConfigError& e) {
    throw CheckpointError(e.what());
  }
  const bool wide = wide_elements(ck.config);
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) ck.params.push_back(r.array(wide));
  const std::uint32_t m = r.u32();
  for (std::uint32_t i = 0; i < m; ++i) ck.moments.push_back(r.array(wide));
  ck.state = detail::parse_state(r.str());
  if (!r.at_end()) throw CheckpointError(what + ": trailing bytes after the state block");
  for (std::size_t i = 1; i < ck.params.size(); ++i)
    if (!(ck.params[i - 1].name < ck.params[i].name))
      throw CheckpointError(what + ": parameters not in lexicographic order");
  return ck;
}

/// Writes via a temporary file and rename, so readers never see a partial file.
inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = encode_checkpoint(ck);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

template <class S>
std::vector<NamedArray> export_parameters(const ad::ParameterSet<S>& params) {
  std::vector<NamedArray> out;
  for (const auto& [name, t] : params)
    out.push_back({name, t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
  return out;
}

template <class S>
ad::ParameterSet<S> import_parameters(const std::vector<NamedArray>& arrays) {
  ad::ParameterSet<S> ps;
  for (const auto& a : arrays)
    ps.add(a.name, a.shape, std::vector<S>(a.values.begin(), a.values.end()));
  return ps;
}

}  // namespace gridsep::train
