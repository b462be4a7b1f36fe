// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

// Learnable heterogeneous convolution layer.
//
// The (c_i, c_o) channel plane of a kernel is tiled into blocks of
// c_gi x c_go slices. Every block owns one set of effect factors; a hard step
// turns them into a single k x k mask slice that is repeated over the whole
// block. The masked kernel is then convolved as usual. In backward the step is
// replaced by a surrogate gradient (1 near the decision point, 0.1 elsewhere).
//
// Two modes:
//   Rigid  15 scores per block, the argmax picks one of the rigid shapes.
//   Free   one k x k score matrix per block, thresholded at zero cell-wise.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lhc/errors.hpp"
#include "lhc/shape_catalog.hpp"
#include "lhc/tensor.hpp"

namespace lhc {

enum class LhcMode : std::uint8_t { Rigid = 0, Free = 1 };

inline const char* to_string(LhcMode m) { return m == LhcMode::Rigid ? "R" : "F"; }

inline LhcMode parse_mode(const std::string& s) {
  if (s == "R" || s == "r" || s == "rigid") return LhcMode::Rigid;
  if (s == "F" || s == "f" || s == "free") return LhcMode::Free;
  throw ConfigError("unknown LHC mode '" + s + "' (expected R or F)");
}

struct TopologyConstraints {
  std::size_t c_gi = 1;
  std::size_t c_go = 1;

  std::size_t parallelism() const noexcept { return c_gi * c_go; }

  void validate(std::size_t c_i, std::size_t c_o) const {
    if (c_gi == 0 || c_go == 0 || c_i % c_gi != 0 || c_o % c_go != 0) {
      throw ConfigError("topology constraints (" + std::to_string(c_gi) + "," + std::to_string(c_go) +
                        ") do not divide channels (" + std::to_string(c_i) + "," +
                        std::to_string(c_o) + ")");
    }
  }

  /// Fit requested constraints to a layer: c_gi is clamped to c_i when the
  /// layer is narrower than the block, c_go falls back to gcd(c_o, c_go).
  static TopologyConstraints fit(std::size_t c_i, std::size_t c_o, TopologyConstraints want) {
    TopologyConstraints got = want;
    if (c_i < want.c_gi) got.c_gi = c_i;
    if (c_i % got.c_gi != 0) got.c_gi = std::gcd(c_i, got.c_gi);
    got.c_go = std::gcd(c_o, want.c_go);
    return got;
  }

  friend bool operator==(const TopologyConstraints&, const TopologyConstraints&) = default;
};

/// Surrogate slope outside the |.| < 1 band.
inline constexpr double kSurrogateSlope = 0.1;

struct StepOutcome {
  ShapeSlice mask;
  std::vector<double> grad_surrogate;  // one entry per effect factor of the block
  std::size_t selected = 0;            // rigid mode: winning catalog index
};

namespace detail {

inline void require_finite(std::span<const double> e, const char* what) {
  for (double v : e) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite effect factor");
  }
}

}  // namespace detail

/// Rigid step: one-hot argmax over the 15 rigid shapes (lowest index wins a
/// tie); surrogate is 1 where |e_i - mean(e)| < 1, else 0.1.
inline StepOutcome step_r(std::span<const double> e) {
  if (e.size() != kRigidShapeCount) throw ShapeError("step_r expects 15 effect factors");
  detail::require_finite(e, "step_r");
  std::size_t best = 0;
  for (std::size_t i = 1; i < e.size(); ++i) {
    if (e[i] > e[best]) best = i;
  }
  double mean = 0.0;
  for (double v : e) mean += v;
  mean /= static_cast<double>(e.size());

  StepOutcome out;
  out.selected = best;
  out.mask = rigid_catalog()[best].slice;
  out.grad_surrogate.resize(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    out.grad_surrogate[i] = std::abs(e[i] - mean) < 1.0 ? 1.0 : kSurrogateSlope;
  }
  return out;
}

/// Free step: bit = e > 0 per cell; surrogate 1 where |e| < 1, else 0.1.
inline StepOutcome step_f(std::span<const double> e, std::size_t k = kCatalogK) {
  if (e.size() != k * k) throw ShapeError("step_f expects k*k effect factors");
  detail::require_finite(e, "step_f");
  StepOutcome out;
  out.mask = empty_slice(k);
  out.grad_surrogate.resize(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    out.mask.bits[i] = e[i] > 0.0 ? 1 : 0;
    out.grad_surrogate[i] = std::abs(e[i]) < 1.0 ? 1.0 : kSurrogateSlope;
  }
  return out;
}

/// Effect factors of all blocks, stored block-major: block (x, y) with x the
/// input-channel block and y the output-channel block.
class EffectFactors {
 public:
  EffectFactors() = default;
  EffectFactors(LhcMode mode, std::size_t k, std::size_t blocks_in, std::size_t blocks_out)
      : mode_(mode), k_(k), blocks_in_(blocks_in), blocks_out_(blocks_out),
        values_(blocks_in * blocks_out * entries_per_block(), 0.0) {}

  LhcMode mode() const noexcept { return mode_; }
  std::size_t k() const noexcept { return k_; }
  std::size_t blocks_in() const noexcept { return blocks_in_; }
  std::size_t blocks_out() const noexcept { return blocks_out_; }
  std::size_t block_count() const noexcept { return blocks_in_ * blocks_out_; }
  std::size_t entries_per_block() const noexcept {
    return mode_ == LhcMode::Rigid ? kRigidShapeCount : k_ * k_;
  }
  std::size_t block_index(std::size_t x, std::size_t y) const noexcept { return x * blocks_out_ + y; }

  std::span<double> block(std::size_t index) {
    return std::span<double>(values_).subspan(index * entries_per_block(), entries_per_block());
  }
  std::span<const double> block(std::size_t index) const {
    return std::span<const double>(values_).subspan(index * entries_per_block(), entries_per_block());
  }
  std::span<double> block(std::size_t x, std::size_t y) { return block(block_index(x, y)); }
  std::span<const double> block(std::size_t x, std::size_t y) const { return block(block_index(x, y)); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }

  friend bool operator==(const EffectFactors&, const EffectFactors&) = default;

 private:
  LhcMode mode_ = LhcMode::Free;
  std::size_t k_ = kCatalogK;
  std::size_t blocks_in_ = 0;
  std::size_t blocks_out_ = 0;
  std::vector<double> values_;
};

/// Binary masks shaped like the kernel (k, k, c_i, c_o).
struct MaskTensor {
  Tensor4 bits;

  std::size_t ones() const {
    std::size_t n = 0;
    for (double v : bits.data()) n += (v != 0.0);
    return n;
  }
  std::size_t size() const noexcept { return bits.size(); }
  double density() const { return bits.empty() ? 0.0 : static_cast<double>(ones()) / static_cast<double>(size()); }
};

class LhcLayer {
 public:
  LhcLayer() = default;
  LhcLayer(ConvGeometry geom, TopologyConstraints constraints, LhcMode mode)
      : geom_(geom), constraints_(constraints), mode_(mode), kernel_(geom.kernel_dims()) {
    geom_.validate();
    constraints_.validate(geom_.c_i, geom_.c_o);
    if (mode_ == LhcMode::Rigid && geom_.k != kCatalogK) {
      throw ConfigError("rigid LHC mode needs 3x3 kernels, got k=" + std::to_string(geom_.k));
    }
    effect_ = EffectFactors(mode_, geom_.k, geom_.c_i / constraints_.c_gi, geom_.c_o / constraints_.c_go);
  }

  const ConvGeometry& geometry() const noexcept { return geom_; }
  const TopologyConstraints& constraints() const noexcept { return constraints_; }
  LhcMode mode() const noexcept { return mode_; }

  const Tensor4& kernel() const noexcept { return kernel_; }
  Tensor4& mutable_kernel() noexcept {
    ++version_;
    return kernel_;
  }
  const EffectFactors& effect() const noexcept { return effect_; }
  EffectFactors& mutable_effect() noexcept {
    ++version_;
    return effect_;
  }

  bool mask_enabled() const noexcept { return mask_enabled_; }
  void set_mask_enabled(bool on) noexcept {
    if (on != mask_enabled_) ++version_;
    mask_enabled_ = on;
  }

  /// Bumped by every mutable access; caches remember it to detect staleness.
  std::uint64_t version() const noexcept { return version_; }

  std::size_t blocks_in() const noexcept { return effect_.blocks_in(); }
  std::size_t blocks_out() const noexcept { return effect_.blocks_out(); }

  /// He-uniform kernel weights; effect factors uniform in (-a, a) with the
  /// Xavier bound a = sqrt(6 / (fan_in + fan_out)), never exactly zero.
  template <typename Rng>
  void initialize(Rng& rng) {
    ++version_;
    const double fan_in = static_cast<double>(geom_.k * geom_.k * geom_.c_i);
    const double fan_out = static_cast<double>(geom_.k * geom_.k * geom_.c_o);
    std::uniform_real_distribution<double> wdist(-std::sqrt(6.0 / fan_in), std::sqrt(6.0 / fan_in));
    for (double& w : kernel_.data()) w = wdist(rng);
    const double bound = std::min(1.0, std::sqrt(6.0 / (fan_in + fan_out)));
    std::uniform_real_distribution<double> edist(-bound, bound);
    for (double& e : effect_.values()) {
      do {
        e = edist(rng);
      } while (e == 0.0);
    }
  }

 private:
  ConvGeometry geom_{};
  TopologyConstraints constraints_{};
  LhcMode mode_ = LhcMode::Free;
  Tensor4 kernel_;
  EffectFactors effect_;
  bool mask_enabled_ = true;
  std::uint64_t version_ = 0;
};

/// Step outcome of every block, indexed like EffectFactors::block_index.
inline std::vector<StepOutcome> evaluate_steps(const LhcLayer& layer) {
  const auto& ef = layer.effect();
  std::vector<StepOutcome> steps;
  steps.reserve(ef.block_count());
  for (std::size_t b = 0; b < ef.block_count(); ++b) {
    steps.push_back(layer.mode() == LhcMode::Rigid ? step_r(ef.block(b)) : step_f(ef.block(b), ef.k()));
  }
  return steps;
}

/// Tiles one slice per block over its c_gi x c_go channel positions.
inline MaskTensor tile_masks(const LhcLayer& layer, std::span<const StepOutcome> steps) {
  const auto& g = layer.geometry();
  const auto& c = layer.constraints();
  MaskTensor m{Tensor4(g.kernel_dims())};
  const std::size_t bo = layer.blocks_out();
  for (std::size_t u = 0; u < g.k; ++u) {
    for (std::size_t v = 0; v < g.k; ++v) {
      for (std::size_t ci = 0; ci < g.c_i; ++ci) {
        const std::size_t x = ci / c.c_gi;
        for (std::size_t co = 0; co < g.c_o; ++co) {
          const std::size_t y = co / c.c_go;
          m.bits(u, v, ci, co) = steps[x * bo + y].mask.bits[u * g.k + v];
        }
      }
    }
  }
  return m;
}

/// Masks derived from the effect factors, regardless of the enable flag.
inline MaskTensor topology_masks(const LhcLayer& layer) {
  const auto steps = evaluate_steps(layer);
  return tile_masks(layer, steps);
}

/// Masks applied in the forward pass: the topology masks, or all ones while
/// the layer's masks are disabled.
inline MaskTensor build_masks(const LhcLayer& layer) {
  if (!layer.mask_enabled()) return MaskTensor{Tensor4(layer.geometry().kernel_dims(), 1.0)};
  return topology_masks(layer);
}

/// Per-block slice gradients: for block (x, y), entry (u, v) is the sum of
/// mask_grad[u, v, ci, co] over the block's channel positions.
inline std::vector<double> block_slice_gradients(const LhcLayer& layer, const Tensor4& mask_grad) {
  const auto& g = layer.geometry();
  const auto& c = layer.constraints();
  require_same_dims(mask_grad, layer.kernel(), "block_slice_gradients");
  const std::size_t kk = g.k * g.k;
  const std::size_t bo = layer.blocks_out();
  std::vector<double> out(layer.effect().block_count() * kk, 0.0);
  for (std::size_t u = 0; u < g.k; ++u) {
    for (std::size_t v = 0; v < g.k; ++v) {
      for (std::size_t ci = 0; ci < g.c_i; ++ci) {
        const std::size_t x = ci / c.c_gi;
        for (std::size_t co = 0; co < g.c_o; ++co) {
          const std::size_t y = co / c.c_go;
          out[(x * bo + y) * kk + u * g.k + v] += mask_grad(u, v, ci, co);
        }
      }
    }
  }
  return out;
}

/// Chains per-block slice gradients through the step surrogate.
///   Free:  grad_e[u,v] = surrogate[u,v] * g_m[u,v]
///   Rigid: grad_e[i]   = surrogate[i] * sum_{u,v} g_m[u,v] * s_i[u,v]
inline std::vector<double> effect_gradient(const LhcLayer& layer, std::span<const StepOutcome> steps,
                                           std::span<const double> slice_grads) {
  const auto& ef = layer.effect();
  const std::size_t kk = ef.k() * ef.k();
  const std::size_t per = ef.entries_per_block();
  if (steps.size() != ef.block_count() || slice_grads.size() != ef.block_count() * kk) {
    throw ShapeError("effect_gradient: block count mismatch");
  }
  std::vector<double> grad(ef.size(), 0.0);
  for (std::size_t b = 0; b < ef.block_count(); ++b) {
    const double* gm = slice_grads.data() + b * kk;
    double* ge = grad.data() + b * per;
    const auto& sur = steps[b].grad_surrogate;
    if (layer.mode() == LhcMode::Free) {
      for (std::size_t j = 0; j < kk; ++j) ge[j] = sur[j] * gm[j];
    } else {
      const auto& cat = rigid_catalog();
      for (std::size_t i = 0; i < kRigidShapeCount; ++i) {
        double s = 0.0;
        const auto& bits = cat[i].slice.bits;
        for (std::size_t j = 0; j < kk; ++j) s += gm[j] * bits[j];
        ge[i] = sur[i] * s;
      }
    }
  }
  return grad;
}

struct LhcCache {
  Tensor4 input;
  MaskTensor masks;
  Tensor4 masked_kernel;
  std::vector<StepOutcome> steps;  // empty when the masks were disabled
  std::uint64_t version = 0;
  const LhcLayer* layer = nullptr;
};

struct LhcForward {
  Tensor4 output;
  LhcCache cache;
};

inline LhcForward lhc_forward(const LhcLayer& layer, const Tensor4& input) {
  LhcForward fw;
  auto& cache = fw.cache;
  if (layer.mask_enabled()) {
    cache.steps = evaluate_steps(layer);
    cache.masks = tile_masks(layer, cache.steps);
  } else {
    cache.masks = MaskTensor{Tensor4(layer.geometry().kernel_dims(), 1.0)};
  }
  cache.masked_kernel = hadamard(layer.kernel(), cache.masks.bits);
  fw.output = conv2d_forward(input, cache.masked_kernel, layer.geometry());
  cache.input = input;
  cache.version = layer.version();
  cache.layer = &layer;
  return fw;
}

struct LhcGrads {
  Tensor4 grad_input;
  Tensor4 grad_kernel;
  std::vector<double> grad_effect;
};

inline LhcGrads lhc_backward(const LhcLayer& layer, const LhcCache& cache, const Tensor4& upstream,
                             bool want_input = true) {
  if (cache.layer != &layer || cache.version != layer.version()) {
    throw std::logic_error("lhc_backward: stale cache (layer changed since forward)");
  }
  ConvGrads cg = conv2d_backward(upstream, cache.input, cache.masked_kernel, layer.geometry(), want_input);
  LhcGrads out;
  out.grad_input = std::move(cg.grad_input);
  out.grad_kernel = hadamard(cg.grad_kernel, cache.masks.bits);
  if (cache.steps.empty()) {
    out.grad_effect.assign(layer.effect().size(), 0.0);
  } else {
    const Tensor4 mask_grad = hadamard(layer.kernel(), cg.grad_kernel);
    const auto slice_grads = block_slice_gradients(layer, mask_grad);
    out.grad_effect = effect_gradient(layer, cache.steps, slice_grads);
  }
  return out;
}

}  // namespace lhc
