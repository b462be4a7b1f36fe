// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

// Binary checkpoint segment for one LHC layer, little-endian:
//
//   "LHC1"                         4 bytes magic
//   mode                           u8   (0 = rigid, 1 = free)
//   k, c_i, c_o, c_gi, c_go        u32 x 5
//   kernel                         f32 x k*k*c_i*c_o, (k,k,c_i,c_o) row-major
//   effect factors                 f32 x block_count * entries_per_block
//
// Masks are never stored; they are re-derived from the effect factors.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "lhc/errors.hpp"
#include "lhc/lhc_layer.hpp"

namespace lhc::io {

inline void write_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

inline void write_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

inline void write_f32(std::ostream& os, double v) {
  write_u32(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

inline void read_exact(std::istream& is, char* dst, std::size_t n, const char* what) {
  const auto pos = is.tellg();
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) {
    throw DataError(std::string("truncated ") + what + " at byte " +
                    std::to_string(static_cast<long long>(pos)));
  }
}

inline std::uint8_t read_u8(std::istream& is, const char* what) {
  char c = 0;
  read_exact(is, &c, 1, what);
  return static_cast<std::uint8_t>(c);
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  read_exact(is, reinterpret_cast<char*>(b), 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline double read_f32(std::istream& is, const char* what) {
  return static_cast<double>(std::bit_cast<float>(read_u32(is, what)));
}

inline void expect_magic(std::istream& is, const char (&magic)[5], const char* what) {
  char got[4];
  read_exact(is, got, 4, what);
  if (std::memcmp(got, magic, 4) != 0) {
    throw DataError(std::string("bad magic in ") + what + ": expected '" + magic + "'");
  }
}

/// Rounds every value to the nearest 32-bit float, i.e. to what a checkpoint
/// can hold.
inline void round_to_storage(std::span<double> values) {
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

inline void round_to_storage(LhcLayer& layer) {
  round_to_storage(layer.mutable_kernel().data());
  round_to_storage(layer.mutable_effect().values());
}

inline void write_layer_segment(std::ostream& os, const LhcLayer& layer) {
  const auto& g = layer.geometry();
  const auto& c = layer.constraints();
  os.write("LHC1", 4);
  write_u8(os, static_cast<std::uint8_t>(layer.mode()));
  for (std::size_t v : {g.k, g.c_i, g.c_o, c.c_gi, c.c_go}) write_u32(os, static_cast<std::uint32_t>(v));
  for (double w : layer.kernel().data()) write_f32(os, w);
  for (double e : layer.effect().values()) write_f32(os, e);
}

/// Reads one segment. Spatial input size, stride and padding are not part of
/// the segment and come from the caller's geometry template.
inline LhcLayer read_layer_segment(std::istream& is, ConvGeometry geom_template) {
  expect_magic(is, "LHC1", "layer segment");
  const std::uint8_t mode_byte = read_u8(is, "layer mode");
  if (mode_byte > 1) throw DataError("layer segment: bad mode byte " + std::to_string(mode_byte));
  std::array<std::uint32_t, 5> d{};
  for (auto& v : d) v = read_u32(is, "layer dims");
  ConvGeometry g = geom_template;
  g.k = d[0];
  g.c_i = d[1];
  g.c_o = d[2];
  LhcLayer layer;
  try {
    layer = LhcLayer(g, TopologyConstraints{d[3], d[4]}, static_cast<LhcMode>(mode_byte));
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("layer segment: ") + e.what());
  }
  for (double& w : layer.mutable_kernel().data()) w = read_f32(is, "kernel");
  for (double& e : layer.mutable_effect().values()) e = read_f32(is, "effect factors");
  return layer;
}

}  // namespace lhc::io
