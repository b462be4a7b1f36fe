// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

// Cycle-level model of a structured-sparse convolution datapath.
//
//   input buffer   features stored c_gi-aligned (one row = c_gi channels)
//   window buffer  the current k x k x c_i sliding window, same layout;
//                  row address = (u*k + v) * (c_i/c_gi) + x
//   weight buffer  rows of c_gi*c_go weights; all-zero rows are dropped at
//                  pack time and never fetched
//   AGU            incrementing weight-row counter
//   ALUT           window-row address of every retained weight row, built at
//                  pack time
//   MAC array      c_gi*c_go multipliers; each clock it consumes one weight
//                  row and one window row and adds c_go partial sums into the
//                  output registers
//
// Timing: one clock per dispatched weight row. Window-buffer fill is counted
// separately (one row per clock) and kept out of the MAC clock ratios, as is
// pipeline fill/drain, which is not modeled. A batch of b images shares each
// dispatch, so b images cost the clocks of one.

#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lhc/errors.hpp"
#include "lhc/lhc_layer.hpp"
#include "lhc/tensor.hpp"

namespace lhc::sim {

struct MacArrayConfig {
  std::size_t c_gi = 64;
  std::size_t c_go = 8;
  std::size_t batch = 1;

  std::size_t parallelism() const noexcept { return c_gi * c_go; }
  std::size_t effective_parallelism() const noexcept { return batch * c_gi * c_go; }
};

struct PackedWeights {
  std::size_t k = 0, c_i = 0, c_o = 0, c_gi = 1, c_go = 1;
  std::vector<double> rows;                // retained rows; entry [ci_local * c_go + co_local]
  std::vector<std::uint32_t> alut;         // window-buffer row address per retained row
  std::vector<std::size_t> group_begin;    // first retained row of each output group, plus end
  std::size_t skipped_rows = 0;

  std::size_t row_length() const noexcept { return c_gi * c_go; }
  std::size_t retained_rows() const noexcept { return alut.size(); }
  std::size_t dense_rows() const noexcept { return k * k * (c_i / c_gi) * (c_o / c_go); }
  std::size_t window_rows() const noexcept { return k * k * (c_i / c_gi); }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(rows).subspan(r * row_length(), row_length());
  }
};

/// Packs a masked kernel (k, k, c_i, c_o) into c_gi*c_go rows. Rows are
/// enumerated per output group, then per input block, then kernel offset
/// (u, v) row-major. A row holding a single nonzero is retained whole.
inline PackedWeights pack_weights(const Tensor4& masked_kernel, const TopologyConstraints& c) {
  const auto& d = masked_kernel.dims();
  if (d[0] != d[1]) throw ShapeError("pack_weights: kernel must be square, got " + format_dims(d));
  if (c.c_gi == 0 || c.c_go == 0 || d[2] % c.c_gi != 0 || d[3] % c.c_go != 0) {
    throw ShapeError("pack_weights: kernel " + format_dims(d) + " is not structured in (" +
                     std::to_string(c.c_gi) + "," + std::to_string(c.c_go) + ") blocks");
  }
  PackedWeights p;
  p.k = d[0];
  p.c_i = d[2];
  p.c_o = d[3];
  p.c_gi = c.c_gi;
  p.c_go = c.c_go;
  const std::size_t bi = p.c_i / p.c_gi, bo = p.c_o / p.c_go;
  std::vector<double> row(p.row_length());
  for (std::size_t y = 0; y < bo; ++y) {
    p.group_begin.push_back(p.alut.size());
    for (std::size_t x = 0; x < bi; ++x) {
      for (std::size_t u = 0; u < p.k; ++u) {
        for (std::size_t v = 0; v < p.k; ++v) {
          bool any = false;
          for (std::size_t a = 0; a < p.c_gi; ++a) {
            for (std::size_t b = 0; b < p.c_go; ++b) {
              const double w = masked_kernel(u, v, x * p.c_gi + a, y * p.c_go + b);
              row[a * p.c_go + b] = w;
              any = any || w != 0.0;
            }
          }
          if (!any) {
            ++p.skipped_rows;
            continue;
          }
          p.rows.insert(p.rows.end(), row.begin(), row.end());
          p.alut.push_back(static_cast<std::uint32_t>((u * p.k + v) * bi + x));
        }
      }
    }
  }
  p.group_begin.push_back(p.alut.size());
  return p;
}

enum class Precision { Float32, Float64 };

struct LayerReport {
  std::string name;
  std::uint64_t clocks = 0;        // MAC dispatch clocks
  std::uint64_t fill_clocks = 0;   // window-buffer fill, reported separately
  std::uint64_t dense_clocks = 0;  // same layer without any skipped rows
  std::uint64_t memory_rows = 0;
  std::uint64_t skipped_rows = 0;
  std::uint64_t dense_rows = 0;
  std::uint64_t windows = 0;       // sliding-window positions per image
  std::uint64_t passes = 0;        // ceil(images / batch)

  double clock_ratio() const { return dense_clocks ? static_cast<double>(clocks) / static_cast<double>(dense_clocks) : 0.0; }
  double memory_ratio() const { return dense_rows ? static_cast<double>(memory_rows) / static_cast<double>(dense_rows) : 0.0; }

  void accumulate(const LayerReport& o) {
    clocks += o.clocks;
    fill_clocks += o.fill_clocks;
    dense_clocks += o.dense_clocks;
    memory_rows += o.memory_rows;
    skipped_rows += o.skipped_rows;
    dense_rows += o.dense_rows;
    windows += o.windows;
  }
};

struct SimOptions {
  Precision precision = Precision::Float32;
  std::ostream* trace = nullptr;  // one line per clock: layer window row alut
  std::size_t layer_index = 0;
};

struct LayerSimResult {
  Tensor4 output;
  LayerReport report;
};

inline void validate_packing(const PackedWeights& p, const ConvGeometry& g, const MacArrayConfig& cfg) {
  if (p.k != g.k || p.c_i != g.c_i || p.c_o != g.c_o) {
    throw ShapeError("simulate_layer: packed weights do not match the layer geometry");
  }
  if (p.c_gi != cfg.c_gi || p.c_go != cfg.c_go) {
    throw ShapeError("simulate_layer: packing blocks (" + std::to_string(p.c_gi) + "," + std::to_string(p.c_go) +
                     ") differ from MAC array (" + std::to_string(cfg.c_gi) + "," + std::to_string(cfg.c_go) + ")");
  }
  const std::size_t groups = p.c_o / p.c_go;
  bool ok = p.rows.size() == p.alut.size() * p.row_length() && p.group_begin.size() == groups + 1 &&
            p.group_begin.front() == 0 && p.group_begin.back() == p.alut.size() &&
            p.alut.size() + p.skipped_rows == p.dense_rows();
  for (std::size_t i = 0; ok && i + 1 < p.group_begin.size(); ++i) ok = p.group_begin[i] <= p.group_begin[i + 1];
  for (std::size_t r = 0; ok && r < p.alut.size(); ++r) ok = p.alut[r] < p.window_rows();
  if (!ok) {
    throw DataError("corrupt packing: " + std::to_string(p.alut.size()) + " ALUT entries, " +
                    std::to_string(p.rows.size()) + " weight values, " + std::to_string(p.skipped_rows) +
                    " skipped of " + std::to_string(p.dense_rows()) + " rows");
  }
}

namespace detail {

template <typename Acc>
LayerSimResult run_layer(const Tensor4& input, const PackedWeights& p, const ConvGeometry& g,
                         const MacArrayConfig& cfg, const SimOptions& opt) {
  const std::size_t images = input.dim(0);
  const std::size_t ho = g.h_o(), wo = g.w_o();
  const std::size_t bi = g.c_i / p.c_gi, groups = g.c_o / p.c_go;
  const std::size_t rl = p.row_length();

  std::vector<Acc> weights(p.rows.begin(), p.rows.end());
  std::vector<Acc> window(g.k * g.k * g.c_i);
  std::vector<Acc> regs(p.c_go);

  LayerSimResult res;
  res.output = Tensor4(g.output_dims(images));
  auto& rep = res.report;
  rep.windows = ho * wo;
  rep.passes = (images + cfg.batch - 1) / cfg.batch;
  rep.memory_rows = p.retained_rows();
  rep.skipped_rows = p.skipped_rows;
  rep.dense_rows = p.dense_rows();

  std::uint64_t dispatched = 0;  // clocks for one image
  std::uint64_t filled = 0;
  for (std::size_t b = 0; b < images; ++b) {
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        // window copy, c_gi-aligned rows, zero rows for padding
        for (std::size_t u = 0; u < g.k; ++u) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + u) - static_cast<std::ptrdiff_t>(g.padding);
          for (std::size_t v = 0; v < g.k; ++v) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + v) - static_cast<std::ptrdiff_t>(g.padding);
            const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(g.h_i) &&
                                iw < static_cast<std::ptrdiff_t>(g.w_i);
            for (std::size_t x = 0; x < bi; ++x) {
              Acc* dst = window.data() + ((u * g.k + v) * bi + x) * p.c_gi;
              for (std::size_t a = 0; a < p.c_gi; ++a) {
                dst[a] = inside ? static_cast<Acc>(input(b, static_cast<std::size_t>(ih), static_cast<std::size_t>(iw),
                                                         x * p.c_gi + a))
                                : Acc(0);
              }
              if (b == 0) ++filled;
            }
          }
        }
        const std::size_t pos = (b * ho + oh) * wo + ow;
        for (std::size_t y = 0; y < groups; ++y) {
          std::fill(regs.begin(), regs.end(), Acc(0));
          for (std::size_t agu = p.group_begin[y]; agu < p.group_begin[y + 1]; ++agu) {
            const std::uint32_t addr = p.alut[agu];
            const Acc* xrow = window.data() + static_cast<std::size_t>(addr) * p.c_gi;
            const Acc* wrow = weights.data() + agu * rl;
            for (std::size_t o = 0; o < p.c_go; ++o) {
              Acc partial = 0;
              for (std::size_t a = 0; a < p.c_gi; ++a) partial += xrow[a] * wrow[a * p.c_go + o];
              regs[o] += partial;
            }
            if (b == 0) ++dispatched;
            if (opt.trace != nullptr) *opt.trace << opt.layer_index << ' ' << pos << ' ' << agu << ' ' << addr << '\n';
          }
          for (std::size_t o = 0; o < p.c_go; ++o) res.output(b, oh, ow, y * p.c_go + o) = static_cast<double>(regs[o]);
        }
      }
    }
  }
  // Images beyond the first are dispatched alongside it, batch at a time.
  if (images == 0) dispatched = 0;
  rep.clocks = dispatched * rep.passes;
  rep.fill_clocks = filled * rep.passes;
  rep.dense_clocks = static_cast<std::uint64_t>(ho * wo) * groups * g.k * g.k * bi * rep.passes;
  return res;
}

}  // namespace detail

inline LayerSimResult simulate_layer(const Tensor4& input, const PackedWeights& packed, const ConvGeometry& geom,
                                     const MacArrayConfig& cfg, const SimOptions& opt = {}) {
  geom.validate();
  if (input.dims() != geom.input_dims(input.dim(0))) {
    throw ShapeError("simulate_layer: input " + format_dims(input.dims()) + " expected " +
                     format_dims(geom.input_dims(input.dim(0))));
  }
  if (cfg.batch == 0) throw ConfigError("MAC array batch must be positive");
  validate_packing(packed, geom, cfg);
  return opt.precision == Precision::Float32 ? detail::run_layer<float>(input, packed, geom, cfg, opt)
                                             : detail::run_layer<double>(input, packed, geom, cfg, opt);
}

struct SimLayer {
  std::string name;
  ConvGeometry geom;
  PackedWeights packed;
  MacArrayConfig config;
  std::vector<double> bias;  // optional epilogue, not clocked
  bool relu = false;
};

struct SimReport {
  std::vector<LayerReport> layers;
  LayerReport total;
  Precision precision = Precision::Float32;

  double clock_ratio() const { return total.clock_ratio(); }
  double memory_ratio() const { return total.memory_ratio(); }
};

struct ModelSimResult {
  Tensor4 output;
  SimReport report;
};

/// Runs a chain of layers; each output (after its optional bias/ReLU
/// epilogue) feeds the next layer.
inline ModelSimResult simulate_model(std::span<const SimLayer> layers, const Tensor4& input, SimOptions opt = {}) {
  ModelSimResult res;
  res.report.precision = opt.precision;
  res.report.total.name = "total";
  Tensor4 x = input;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    if (x.dims() != L.geom.input_dims(x.dim(0))) {
      throw ShapeError("simulate_model: layer " + std::to_string(l) + " expects input " +
                       format_dims(L.geom.input_dims(x.dim(0))) + " but the chain delivers " + format_dims(x.dims()));
    }
    opt.layer_index = l;
    auto r = simulate_layer(x, L.packed, L.geom, L.config, opt);
    r.report.name = L.name.empty() ? "layer" + std::to_string(l) : L.name;
    if (!L.bias.empty() || L.relu) {
      if (!L.bias.empty() && L.bias.size() != L.geom.c_o) throw ShapeError("simulate_model: bias length mismatch");
      auto data = r.output.data();
      for (std::size_t i = 0; i < data.size(); ++i) {
        double v = data[i] + (L.bias.empty() ? 0.0 : L.bias[i % L.geom.c_o]);
        data[i] = (L.relu && v < 0.0) ? 0.0 : v;
      }
    }
    res.report.total.accumulate(r.report);
    res.report.total.passes = std::max(res.report.total.passes, r.report.passes);
    res.report.layers.push_back(r.report);
    x = std::move(r.output);
  }
  res.output = std::move(x);
  return res;
}

}  // namespace lhc::sim
