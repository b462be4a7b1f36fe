// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

// Kernel-slice shape catalogs for 3x3 kernels: 15 hand-designed rigid shapes
// in six groups, and all 512 free binary patterns.
//
// Free-shape index convention: cell (r, c) of the 3x3 slice is bit r*3 + c of
// the index, so the top-left cell is the least-significant bit. Index 0 is the
// empty slice, 511 the full one, 16 the center dot.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lhc/errors.hpp"

namespace lhc {

inline constexpr std::size_t kCatalogK = 3;
inline constexpr std::size_t kFreeShapeCount = 512;
inline constexpr std::size_t kRigidShapeCount = 15;

struct ShapeSlice {
  std::size_t k = kCatalogK;
  std::vector<std::uint8_t> bits;  // row-major k*k, entries 0/1

  ShapeSlice() : bits(kCatalogK * kCatalogK, 0) {}
  ShapeSlice(std::size_t k_, std::vector<std::uint8_t> b) : k(k_), bits(std::move(b)) {
    if (bits.size() != k * k) throw ShapeError("shape slice needs k*k entries");
  }

  std::uint8_t at(std::size_t r, std::size_t c) const { return bits.at(r * k + c); }

  std::size_t l0() const noexcept {
    std::size_t n = 0;
    for (auto b : bits) n += (b != 0);
    return n;
  }

  /// Row-major '0'/'1' string, top-left first.
  std::string bit_string() const {
    std::string s;
    s.reserve(bits.size());
    for (auto b : bits) s.push_back(b ? '1' : '0');
    return s;
  }

  friend bool operator==(const ShapeSlice&, const ShapeSlice&) = default;
};

inline ShapeSlice free_decode(std::size_t index) {
  if (index >= kFreeShapeCount) {
    throw std::out_of_range("free shape index " + std::to_string(index) + " outside [0, 511]");
  }
  ShapeSlice s;
  for (std::size_t i = 0; i < 9; ++i) s.bits[i] = static_cast<std::uint8_t>((index >> i) & 1u);
  return s;
}

inline std::size_t free_encode(const ShapeSlice& s) {
  if (s.k != kCatalogK || s.bits.size() != 9) throw ShapeError("free_encode needs a 3x3 slice");
  std::size_t index = 0;
  for (std::size_t i = 0; i < 9; ++i) {
    if (s.bits[i] > 1) throw std::invalid_argument("free_encode: non-binary entry at cell " + std::to_string(i));
    index |= static_cast<std::size_t>(s.bits[i]) << i;
  }
  return index;
}

struct RigidShape {
  int group = 0;   // 1..6
  int member = 0;  // 1-based within the group
  ShapeSlice slice;

  std::string label() const { return "<" + std::to_string(group) + ">" + std::to_string(member); }
};

struct RigidCatalog {
  std::array<RigidShape, kRigidShapeCount> shapes;

  const RigidShape& operator[](std::size_t i) const { return shapes.at(i); }
  std::size_t size() const noexcept { return shapes.size(); }

  /// Catalog position of a slice pattern, or -1 if it is not rigid.
  int find(const ShapeSlice& s) const {
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      if (shapes[i].slice == s) return static_cast<int>(i);
    }
    return -1;
  }

  /// Member indices of group g (1..6).
  std::vector<std::size_t> group_members(int g) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      if (shapes[i].group == g) out.push_back(i);
    }
    return out;
  }
};

namespace detail {

inline ShapeSlice slice_from_rows(const char* r0, const char* r1, const char* r2) {
  ShapeSlice s;
  const char* rows[3] = {r0, r1, r2};
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) s.bits[r * 3 + c] = rows[r][c] == '1';
  }
  return s;
}

inline RigidCatalog make_rigid_catalog() {
  using detail::slice_from_rows;
  RigidCatalog cat;
  std::size_t i = 0;
  auto add = [&](int g, int m, ShapeSlice s) { cat.shapes[i++] = RigidShape{g, m, std::move(s)}; };
  // {1} empty
  add(1, 1, slice_from_rows("000", "000", "000"));
  // {2} dot
  add(2, 1, slice_from_rows("000", "010", "000"));
  // {3} lines: row, diagonal, column, anti-diagonal
  add(3, 1, slice_from_rows("000", "111", "000"));
  add(3, 2, slice_from_rows("100", "010", "001"));
  add(3, 3, slice_from_rows("010", "010", "010"));
  add(3, 4, slice_from_rows("001", "010", "100"));
  // {4} side half-windows: left, right, top, bottom
  add(4, 1, slice_from_rows("110", "110", "110"));
  add(4, 2, slice_from_rows("011", "011", "011"));
  add(4, 3, slice_from_rows("111", "111", "000"));
  add(4, 4, slice_from_rows("000", "111", "111"));
  // {5} corner quarter-windows: top-left, top-right, bottom-left, bottom-right
  add(5, 1, slice_from_rows("110", "110", "000"));
  add(5, 2, slice_from_rows("011", "011", "000"));
  add(5, 3, slice_from_rows("000", "110", "110"));
  add(5, 4, slice_from_rows("000", "011", "011"));
  // {6} full
  add(6, 1, slice_from_rows("111", "111", "111"));
  return cat;
}

}  // namespace detail

inline const RigidCatalog& rigid_catalog() {
  static const RigidCatalog cat = detail::make_rigid_catalog();
  return cat;
}

inline constexpr std::size_t kRigidEmpty = 0;   // <1>1
inline constexpr std::size_t kRigidDot = 1;     // <2>1
inline constexpr std::size_t kRigidFull = 14;   // <6>1

inline ShapeSlice full_slice(std::size_t k) { return ShapeSlice(k, std::vector<std::uint8_t>(k * k, 1)); }
inline ShapeSlice empty_slice(std::size_t k) { return ShapeSlice(k, std::vector<std::uint8_t>(k * k, 0)); }

/// Center-only slice for odd k (the 1x1 pattern embedded in a kxk window).
inline ShapeSlice dot_slice(std::size_t k) {
  if (k % 2 == 0) throw ShapeError("dot slice needs an odd kernel size");
  ShapeSlice s = empty_slice(k);
  s.bits[(k / 2) * k + k / 2] = 1;
  return s;
}

}  // namespace lhc
