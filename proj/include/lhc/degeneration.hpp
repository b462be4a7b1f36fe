// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

// Fixed LHC configurations that reproduce classical operators exactly:
// grouped convolution, depthwise convolution and HetConv (mixed 3x3 / 1x1
// slices). Effect factors are forced with unit margins so that re-deriving
// the masks reproduces the intended patterns.

#pragma once

#include <cstddef>
#include <string>
#include <type_traits>
#include <variant>

#include "lhc/errors.hpp"
#include "lhc/lhc_layer.hpp"
#include "lhc/shape_catalog.hpp"

namespace lhc {

struct GroupwiseSpec {
  std::size_t n_group = 1;
};
struct DepthwiseSpec {
  std::size_t multiplier = 1;
};
struct HetConvSpec {
  std::size_t p = 1;
};

using DegenerationSpec = std::variant<GroupwiseSpec, DepthwiseSpec, HetConvSpec>;

/// Forces one block's effect factors so the step selects `target`.
/// Rigid: +1 on the matching catalog shape, 0 elsewhere. Free: +1 / -1 per cell.
inline void force_block(LhcLayer& layer, std::size_t x, std::size_t y, const ShapeSlice& target) {
  auto e = layer.mutable_effect().block(x, y);
  if (layer.mode() == LhcMode::Rigid) {
    const int idx = rigid_catalog().find(target);
    if (idx < 0) throw ConfigError("pattern " + target.bit_string() + " is not a rigid shape");
    for (double& v : e) v = 0.0;
    e[static_cast<std::size_t>(idx)] = 1.0;
  } else {
    for (std::size_t j = 0; j < e.size(); ++j) e[j] = target.bits[j] ? 1.0 : -1.0;
  }
}

namespace detail {

inline LhcLayer block_diagonal(const LhcLayer& src, TopologyConstraints c) {
  LhcLayer out(src.geometry(), c, src.mode());
  out.mutable_kernel() = src.kernel();
  const std::size_t k = src.geometry().k;
  for (std::size_t x = 0; x < out.blocks_in(); ++x) {
    for (std::size_t y = 0; y < out.blocks_out(); ++y) {
      force_block(out, x, y, x == y ? full_slice(k) : empty_slice(k));
    }
  }
  return out;
}

}  // namespace detail

/// Block (x, y) is full on the block diagonal and empty elsewhere, with
/// c_gi = c_i / n_group and c_go = c_o / n_group.
inline LhcLayer degenerate_gwc(const LhcLayer& layer, std::size_t n_group) {
  const auto& g = layer.geometry();
  if (n_group == 0 || g.c_i % n_group != 0 || g.c_o % n_group != 0) {
    throw ConfigError("grouped conv: n_group=" + std::to_string(n_group) + " must divide c_i=" +
                      std::to_string(g.c_i) + " and c_o=" + std::to_string(g.c_o));
  }
  return detail::block_diagonal(layer, {g.c_i / n_group, g.c_o / n_group});
}

/// c_gi = 1, c_go = c_o / c_i: output channels [m*x, m*(x+1)) see input x only.
inline LhcLayer degenerate_dwc(const LhcLayer& layer, std::size_t multiplier) {
  const auto& g = layer.geometry();
  if (multiplier == 0 || g.c_o != multiplier * g.c_i) {
    throw ConfigError("depthwise conv: c_o=" + std::to_string(g.c_o) + " != multiplier " +
                      std::to_string(multiplier) + " * c_i=" + std::to_string(g.c_i));
  }
  return detail::block_diagonal(layer, {1, multiplier});
}

/// Constraints (1, 1); slice (x, y), 1-based, is full when (x + y - 1) % p == 0
/// and the center dot otherwise.
inline LhcLayer degenerate_hetconv(const LhcLayer& layer, std::size_t p) {
  const auto& g = layer.geometry();
  if (p == 0 || p > g.c_i) {
    throw ConfigError("HetConv: p=" + std::to_string(p) + " outside [1, c_i=" + std::to_string(g.c_i) + "]");
  }
  LhcLayer out(g, {1, 1}, layer.mode());
  out.mutable_kernel() = layer.kernel();
  const ShapeSlice full = full_slice(g.k);
  const ShapeSlice dot = dot_slice(g.k);
  for (std::size_t x = 1; x <= g.c_i; ++x) {
    for (std::size_t y = 1; y <= g.c_o; ++y) {
      force_block(out, x - 1, y - 1, (x + y - 1) % p == 0 ? full : dot);
    }
  }
  return out;
}

inline LhcLayer degenerate(const LhcLayer& layer, const DegenerationSpec& spec) {
  return std::visit(
      [&](const auto& s) -> LhcLayer {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, GroupwiseSpec>) return degenerate_gwc(layer, s.n_group);
        else if constexpr (std::is_same_v<T, DepthwiseSpec>) return degenerate_dwc(layer, s.multiplier);
        else return degenerate_hetconv(layer, s.p);
      },
      spec);
}

}  // namespace lhc
