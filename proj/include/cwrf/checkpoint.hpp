//
// Copyright 2026 The CWRF Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Binary container shared by parameters, score vectors and masks.
//
//   offset  size  field
//   0       4     magic "CWRF"
//   4       2     u16 format version (1)
//   6       2     u16 payload kind (see PayloadKind)
//   8       4     u32 layout entry count N
//   12      32*N  entries: u32 layer_id, u8 layer kind, u8 rectified,
//                 u16 reserved (0), u32 fan_in, u32 width, u64 offset, u64 length
//   ..      8     u64 value count m
//   ..      4     u32 aux count A
//   ..      8*A   f64 aux values (kind-specific metadata)
//   ..            payload: m x f32 for values, ceil(m/8) bytes for a bit mask
//                 (bit i at byte i/8, position i%8, LSB first)
//
// All integers and floats are little-endian regardless of host order.

#ifndef CWRF_CHECKPOINT_HPP_
#define CWRF_CHECKPOINT_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "cwrf/error.hpp"
#include "cwrf/model.hpp"

namespace cwrf::io {

inline constexpr char kMagic[4] = {'C', 'W', 'R', 'F'};
inline constexpr std::uint16_t kFormatVersion = 1;

enum class PayloadKind : std::uint16_t {
  parameters = 0,
  learnability_scores = 1,
  privacy_scores = 2,
  mask_pair = 3,
};

struct Container {
  PayloadKind kind = PayloadKind::parameters;
  nn::Layout layout;
  std::vector<double> aux;
  std::vector<float> values;        // parameters / scores
  std::vector<std::uint8_t> bits;   // mask payload, one byte per flag in memory
};

namespace detail {

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::span<const char> s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void expect(std::size_t n) const {
    if (remaining() < n) throw FormatError("checkpoint: truncated file");
  }

 private:
  std::uint64_t get(int n) {
    expect(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> encode(const Container& c) {
  const bool is_mask = c.kind == PayloadKind::mask_pair;
  const std::size_t m = c.layout.size();
  require(is_mask ? c.bits.size() == m : c.values.size() == m,
          "checkpoint: payload length does not match layout");
  detail::Writer w;
  w.raw(kMagic);
  w.u16(kFormatVersion);
  w.u16(static_cast<std::uint16_t>(c.kind));
  w.u32(static_cast<std::uint32_t>(c.layout.entries().size()));
  for (const auto& e : c.layout.entries()) {
    w.u32(static_cast<std::uint32_t>(e.layer_id));
    w.u8(static_cast<std::uint8_t>(e.kind));
    w.u8(e.rectified ? 1 : 0);
    w.u16(0);
    w.u32(static_cast<std::uint32_t>(e.fan_in));
    w.u32(static_cast<std::uint32_t>(e.width));
    w.u64(e.offset);
    w.u64(e.length);
  }
  w.u64(m);
  w.u32(static_cast<std::uint32_t>(c.aux.size()));
  for (double a : c.aux) w.f64(a);
  if (is_mask) {
    for (std::size_t i = 0; i < m; i += 8) {
      std::uint8_t byte = 0;
      for (std::size_t b = 0; b < 8 && i + b < m; ++b) {
        if (c.bits[i + b] != 0) byte |= static_cast<std::uint8_t>(1u << b);
      }
      w.u8(byte);
    }
  } else {
    for (float v : c.values) w.f32(v);
  }
  return w.take();
}

inline Container decode(std::span<const std::uint8_t> bytes) {
  detail::Reader r(bytes);
  r.expect(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
  for (int i = 0; i < 4; ++i) r.u8();
  if (const auto version = r.u16(); version != kFormatVersion) {
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version));
  }
  Container c;
  const auto kind = r.u16();
  if (kind > static_cast<std::uint16_t>(PayloadKind::mask_pair)) {
    throw FormatError("checkpoint: unknown payload kind");
  }
  c.kind = static_cast<PayloadKind>(kind);
  const std::uint32_t n_entries = r.u32();
  r.expect(static_cast<std::size_t>(n_entries) * 32);
  std::vector<nn::LayoutEntry> entries(n_entries);
  for (auto& e : entries) {
    e.layer_id = r.u32();
    const auto lk = r.u8();
    if (lk > static_cast<std::uint8_t>(nn::LayerKind::output)) {
      throw FormatError("checkpoint: unknown layer kind");
    }
    e.kind = static_cast<nn::LayerKind>(lk);
    e.rectified = r.u8() != 0;
    r.u16();
    e.fan_in = r.u32();
    e.width = r.u32();
    e.offset = r.u64();
    e.length = r.u64();
  }
  try {
    c.layout = nn::Layout(std::move(entries));
  } catch (const std::invalid_argument& err) {
    throw FormatError(std::string("checkpoint: inconsistent layout table: ") + err.what());
  }
  const std::uint64_t m = r.u64();
  if (m != c.layout.size()) throw FormatError("checkpoint: value count != layout size");
  const std::uint32_t n_aux = r.u32();
  r.expect(static_cast<std::size_t>(n_aux) * 8);
  c.aux.resize(n_aux);
  for (double& a : c.aux) a = r.f64();
  if (c.kind == PayloadKind::mask_pair) {
    const std::size_t n_bytes = (m + 7) / 8;
    r.expect(n_bytes);
    c.bits.assign(m, 0);
    for (std::size_t i = 0; i < n_bytes; ++i) {
      const std::uint8_t byte = r.u8();
      for (std::size_t b = 0; b < 8 && 8 * i + b < m; ++b) c.bits[8 * i + b] = (byte >> b) & 1u;
    }
  } else {
    r.expect(m * 4);
    c.values.resize(m);
    for (float& v : c.values) v = r.f32();
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return c;
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Container parameters_container(const nn::ParameterVector& p) {
  Container c;
  c.kind = PayloadKind::parameters;
  c.layout = p.layout;
  c.values.assign(p.values.begin(), p.values.end());
  return c;
}

inline nn::ParameterVector parameters_from(const Container& c) {
  if (c.kind != PayloadKind::parameters) throw FormatError("checkpoint: not a parameter file");
  return {c.layout, std::vector<double>(c.values.begin(), c.values.end())};
}

inline void save_parameters(const std::filesystem::path& path, const nn::ParameterVector& p) {
  write_file(path, encode(parameters_container(p)));
}

inline nn::ParameterVector load_parameters(const std::filesystem::path& path) {
  return parameters_from(decode(read_file(path)));
}

// Values narrowed to the on-disk precision, i.e. what a save/load cycle yields.
inline nn::ParameterVector as_stored(nn::ParameterVector p) {
  for (double& v : p.values) v = static_cast<float>(v);
  return p;
}

}  // namespace cwrf::io

#endif  // CWRF_CHECKPOINT_HPP_
