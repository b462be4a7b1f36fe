// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

// Per-epoch mask snapshots as packed bitsets, little-endian:
//
//   "LHCS" u32 epoch, u32 layer_count
//   per layer: u32 dims x 4, then ceil(n / 8) bytes, element i in bit i % 8
//              of byte i / 8

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lhc/checkpoint.hpp"
#include "lhc/errors.hpp"
#include "lhc/lhc_layer.hpp"

namespace lhc::io {

struct MaskSnapshot {
  std::uint32_t epoch = 0;
  std::vector<MaskTensor> layers;
};

inline void write_snapshot(std::ostream& os, const MaskSnapshot& s) {
  os.write("LHCS", 4);
  write_u32(os, s.epoch);
  write_u32(os, static_cast<std::uint32_t>(s.layers.size()));
  for (const auto& m : s.layers) {
    for (std::size_t d : m.bits.dims()) write_u32(os, static_cast<std::uint32_t>(d));
    std::vector<char> packed((m.size() + 7) / 8, 0);
    const auto v = m.bits.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] != 0.0) packed[i / 8] = static_cast<char>(packed[i / 8] | (1 << (i % 8)));
    }
    os.write(packed.data(), static_cast<std::streamsize>(packed.size()));
  }
}

inline MaskSnapshot read_snapshot(std::istream& is) {
  expect_magic(is, "LHCS", "mask snapshot");
  MaskSnapshot s;
  s.epoch = read_u32(is, "snapshot epoch");
  const std::uint32_t count = read_u32(is, "snapshot layer count");
  if (count > 4096) throw DataError("mask snapshot: implausible layer count");
  for (std::uint32_t l = 0; l < count; ++l) {
    Dims4 d{};
    for (auto& v : d) v = read_u32(is, "snapshot dims");
    const std::uint64_t n = static_cast<std::uint64_t>(d[0]) * d[1] * d[2] * d[3];
    if (n > (std::uint64_t{1} << 32)) throw DataError("mask snapshot: implausible layer size");
    std::vector<char> packed((n + 7) / 8);
    read_exact(is, packed.data(), packed.size(), "snapshot bits");
    MaskTensor m{Tensor4(d)};
    auto v = m.bits.data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (static_cast<unsigned char>(packed[i / 8]) >> (i % 8)) & 1u;
    s.layers.push_back(std::move(m));
  }
  return s;
}

inline std::filesystem::path snapshot_path(const std::filesystem::path& dir, std::size_t epoch) {
  char name[64];
  std::snprintf(name, sizeof name, "masks_epoch_%04zu.lhcs", epoch);
  return dir / name;
}

inline void save_snapshot(const std::filesystem::path& dir, const MaskSnapshot& s) {
  std::filesystem::create_directories(dir);
  std::ofstream os(snapshot_path(dir, s.epoch), std::ios::binary);
  if (!os) throw DataError("cannot write mask snapshot in " + dir.string());
  write_snapshot(os, s);
}

/// Every snapshot in `dir`, ordered by epoch.
inline std::vector<MaskSnapshot> load_snapshots(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw DataError("snapshot directory " + dir.string() + " not found");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".lhcs") files.push_back(e.path());
  }
  if (files.empty()) throw DataError("no mask snapshots in " + dir.string());
  std::vector<MaskSnapshot> out;
  for (const auto& f : files) {
    std::ifstream is(f, std::ios::binary);
    if (!is) throw DataError("cannot open " + f.string());
    out.push_back(read_snapshot(is));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.epoch < b.epoch; });
  return out;
}

}  // namespace lhc::io
