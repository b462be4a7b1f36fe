// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

// Density-targeted mask regularization, the two warm-up schedules and
// multiply-accumulate accounting for standard vs. LHC convolutions.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lhc/errors.hpp"
#include "lhc/lhc_layer.hpp"
#include "lhc/tensor.hpp"

namespace lhc {

/// Density target; std::nullopt means "invalid", i.e. no target is set.
using DensityTarget = std::optional<double>;

inline DensityTarget parse_density_target(const std::string& s) {
  if (s == "invalid" || s == "none" || s.empty()) return std::nullopt;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ConfigError("density target '" + s + "' is neither a number nor 'invalid'");
  }
  if (used != s.size() || !(v >= 0.0 && v <= 1.0)) {
    throw ConfigError("density target must lie in [0, 1] or be 'invalid', got '" + s + "'");
  }
  return v;
}

inline std::string format_density_target(const DensityTarget& t) {
  return t ? std::to_string(*t) : std::string("invalid");
}

/// Sum of ones over the sum of sizes, across all layers.
inline double global_density(std::span<const MaskTensor> masks) {
  std::size_t ones = 0, total = 0;
  for (const auto& m : masks) {
    ones += m.ones();
    total += m.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(ones) / static_cast<double>(total);
}

inline void require_target(double d_t) {
  if (!(d_t >= 0.0 && d_t <= 1.0)) throw ConfigError("density target outside [0, 1]");
}

/// | d_t - sum ||M_l||_1 / sum size(M_l) |
inline double mask_loss(std::span<const MaskTensor> masks, double d_t) {
  require_target(d_t);
  return std::abs(d_t - global_density(masks));
}

/// d l_mask / d M for every mask element (identical for all of them):
/// sign(density - d_t) / sum size(M_l). Zero at the target.
inline double mask_loss_slope(std::span<const MaskTensor> masks, double d_t) {
  require_target(d_t);
  std::size_t total = 0;
  for (const auto& m : masks) total += m.size();
  if (total == 0) return 0.0;
  const double diff = global_density(masks) - d_t;
  const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  return sign / static_cast<double>(total);
}

inline double total_loss(double l_task, double l_mask, double alpha) {
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be non-negative");
  return alpha * l_mask + l_task;
}

/// Mask-enabling warm-up probability for epoch i (1-based): (i-1)/n_warm,
/// clamped to 1 once warm-up is over.
inline double enable_probability(std::size_t epoch, std::size_t n_warm) {
  if (epoch == 0 || n_warm == 0) throw ConfigError("epoch and n_warm are 1-based and positive");
  const double p = static_cast<double>(epoch - 1) / static_cast<double>(n_warm);
  return p >= 1.0 ? 1.0 : p;
}

/// One independent Bernoulli(p_i) draw per layer.
template <typename Rng>
std::vector<bool> mask_enable_schedule(std::size_t epoch, std::size_t n_warm, std::size_t layers, Rng& rng) {
  const double p = enable_probability(epoch, n_warm);
  std::vector<bool> on(layers, p >= 1.0);
  if (p > 0.0 && p < 1.0) {
    std::bernoulli_distribution draw(p);
    for (std::size_t l = 0; l < layers; ++l) on[l] = draw(rng);
  }
  return on;
}

struct DensityObjective {
  DensityTarget d_t;
  double alpha_t = 1.0;
  std::size_t n_warm = 10;
  double alpha = 0.0;
  double f = 0.0;  // task-loss scale factor, frozen after warm-up

  bool active() const noexcept { return d_t.has_value(); }
};

/// Mask-regularizing warm-up. For epoch i (1-based) with the previous epoch's
/// task loss l_task:
///   f = l_task / |1 - d_t|,  alpha = f * (alpha_t / n_warm) * (i - 1)
/// Past warm-up alpha stays at f * alpha_t, with f frozen at the value used
/// for the first post-warm-up epoch (computed from the last warm-up epoch).
inline double alpha_schedule(std::size_t epoch, double l_task, DensityObjective& obj) {
  if (epoch == 0 || obj.n_warm == 0) throw ConfigError("epoch and n_warm are 1-based and positive");
  if (!obj.active()) {
    obj.alpha = 0.0;
    return 0.0;
  }
  if (epoch == 1) {
    obj.alpha = 0.0;
    return 0.0;
  }
  if (epoch <= obj.n_warm + 1) {
    const double l_max = std::abs(1.0 - *obj.d_t);
    // d_t = 1 leaves nothing to regularize toward.
    obj.f = l_max > 0.0 ? l_task / l_max : 0.0;
  }
  const double delta = obj.alpha_t / static_cast<double>(obj.n_warm);
  const double steps = static_cast<double>(std::min(epoch - 1, obj.n_warm));
  obj.alpha = obj.f * delta * steps;
  return obj.alpha;
}

// --- multiply-accumulate accounting --------------------------------------

inline std::uint64_t flops_std(const ConvGeometry& g) {
  return static_cast<std::uint64_t>(g.h_o()) * g.w_o() * g.c_i * g.c_o * g.k * g.k;
}

/// Throws ShapeError when a block of the mask tensor is not constant.
inline void require_block_constant(const MaskTensor& masks, const TopologyConstraints& c) {
  const auto& d = masks.bits.dims();
  c.validate(d[2], d[3]);
  for (std::size_t u = 0; u < d[0]; ++u) {
    for (std::size_t v = 0; v < d[1]; ++v) {
      for (std::size_t ci = 0; ci < d[2]; ++ci) {
        for (std::size_t co = 0; co < d[3]; ++co) {
          const double ref = masks.bits(u, v, (ci / c.c_gi) * c.c_gi, (co / c.c_go) * c.c_go);
          const double val = masks.bits(u, v, ci, co);
          if (val != ref) {
            throw ShapeError("masks are not block-constant at (" + std::to_string(u) + "," +
                             std::to_string(v) + "," + std::to_string(ci) + "," + std::to_string(co) + ")");
          }
          if (val != 0.0 && val != 1.0) throw ShapeError("masks are not binary");
        }
      }
    }
  }
}

/// h_o * w_o * c_gi * c_go * sum over blocks of the block slice's L0 norm.
inline std::uint64_t flops_lhc(const ConvGeometry& g, const MaskTensor& masks, const TopologyConstraints& c) {
  if (masks.bits.dims() != g.kernel_dims()) {
    throw ShapeError("flops_lhc: mask dims " + format_dims(masks.bits.dims()) + " vs kernel " +
                     format_dims(g.kernel_dims()));
  }
  require_block_constant(masks, c);
  std::uint64_t sum_ns = 0;
  for (std::size_t x = 0; x < g.c_i / c.c_gi; ++x) {
    for (std::size_t y = 0; y < g.c_o / c.c_go; ++y) {
      for (std::size_t u = 0; u < g.k; ++u) {
        for (std::size_t v = 0; v < g.k; ++v) sum_ns += masks.bits(u, v, x * c.c_gi, y * c.c_go) != 0.0;
      }
    }
  }
  return static_cast<std::uint64_t>(g.h_o()) * g.w_o() * c.c_gi * c.c_go * sum_ns;
}

inline std::uint64_t flops_delta(const ConvGeometry& g, const MaskTensor& masks, const TopologyConstraints& c) {
  return flops_std(g) - flops_lhc(g, masks, c);
}

struct TrainingOverhead {
  double storage_ratio = 0.0;  // effect factors per kernel weight
  double compute_ratio = 0.0;  // mask construction per convolution MAC
};

inline TrainingOverhead training_overhead(const ConvGeometry& g, const TopologyConstraints& c) {
  return {1.0 / static_cast<double>(c.c_gi * c.c_go), 1.0 / static_cast<double>(g.h_o() * g.w_o())};
}

struct FlopsRow {
  std::string layer;
  std::uint64_t c_std = 0;
  std::uint64_t c_lhc = 0;
  std::uint64_t delta = 0;
  double density = 1.0;
};

struct FlopsReport {
  std::vector<FlopsRow> layers;
  std::uint64_t total_std = 0;
  std::uint64_t total_lhc = 0;
  std::uint64_t total_delta = 0;
  double global_density = 1.0;  // ones / size over all LHC layers

  void add(FlopsRow row) {
    total_std += row.c_std;
    total_lhc += row.c_lhc;
    total_delta += row.delta;
    layers.push_back(std::move(row));
  }
};

}  // namespace lhc
