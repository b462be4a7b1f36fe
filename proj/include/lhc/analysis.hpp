// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

// Diagnostics over trained layers: shape histograms, epoch-to-epoch mask
// correlation and singular values of the convolution operator.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "lhc/errors.hpp"
#include "lhc/lhc_layer.hpp"
#include "lhc/shape_catalog.hpp"
#include "lhc/tensor.hpp"

namespace lhc::analysis {

struct ShapeHistogram {
  std::string layer;
  LhcMode mode = LhcMode::Free;
  std::vector<std::uint64_t> counts;  // 512 bins (free index) or 15 (rigid index)
  std::vector<double> ratios;
  std::uint64_t blocks = 0;
};

/// Histogram of the per-block mask slices derived from the effect factors.
inline ShapeHistogram shape_distribution(const LhcLayer& layer, std::string name = {}) {
  ShapeHistogram h;
  h.layer = std::move(name);
  h.mode = layer.mode();
  h.counts.assign(layer.mode() == LhcMode::Rigid ? kRigidShapeCount : kFreeShapeCount, 0);
  for (const auto& s : evaluate_steps(layer)) {
    const std::size_t bin = layer.mode() == LhcMode::Rigid ? s.selected : free_encode(s.mask);
    ++h.counts[bin];
    ++h.blocks;
  }
  h.ratios.resize(h.counts.size(), 0.0);
  if (h.blocks > 0) {
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      h.ratios[i] = static_cast<double>(h.counts[i]) / static_cast<double>(h.blocks);
    }
  }
  return h;
}

/// Mean over all elements of (a AND b). Not a Pearson correlation.
inline double mask_correlation(const MaskTensor& a, const MaskTensor& b) {
  require_same_dims(a.bits, b.bits, "mask_correlation");
  if (a.bits.empty()) return 0.0;
  std::size_t both = 0;
  const auto da = a.bits.data(), db = b.bits.data();
  for (std::size_t i = 0; i < da.size(); ++i) both += (da[i] != 0.0 && db[i] != 0.0);
  return static_cast<double>(both) / static_cast<double>(da.size());
}

enum class Pairing { Adjacent, Reference };

struct MaskCorrelationSeries {
  std::string layer;
  Pairing pairing = Pairing::Adjacent;
  std::vector<std::size_t> epochs;  // epoch of the later snapshot in each pair
  std::vector<double> values;
};

/// snapshots[i] holds the layer's masks at the end of epochs[i].
/// Adjacent: value j pairs snapshots j and j+1. Reference: snapshot `ref`
/// against every other snapshot.
inline MaskCorrelationSeries correlation_series(std::span<const MaskTensor> snapshots,
                                                std::span<const std::size_t> epochs, Pairing pairing,
                                                std::size_t ref = 0, std::string name = {}) {
  if (snapshots.size() != epochs.size()) throw ShapeError("correlation_series: snapshot/epoch count mismatch");
  MaskCorrelationSeries s;
  s.layer = std::move(name);
  s.pairing = pairing;
  if (pairing == Pairing::Adjacent) {
    for (std::size_t i = 1; i < snapshots.size(); ++i) {
      s.epochs.push_back(epochs[i]);
      s.values.push_back(mask_correlation(snapshots[i - 1], snapshots[i]));
    }
  } else {
    if (ref >= snapshots.size()) throw ConfigError("correlation_series: reference snapshot out of range");
    for (std::size_t i = 0; i < snapshots.size(); ++i) {
      if (i == ref) continue;
      s.epochs.push_back(epochs[i]);
      s.values.push_back(mask_correlation(snapshots[ref], snapshots[i]));
    }
  }
  return s;
}

struct SpectrumReport {
  std::string layer;
  std::size_t h = 0, w = 0;           // input size the operator was built for
  std::size_t rows = 0, cols = 0;     // operator shape
  std::vector<double> singular_values;  // descending
  double uniformity = 0.0;              // entropy of normalized sigma^2 / log(count)
};

inline constexpr std::uint64_t kSpectrumGuard = std::uint64_t{1} << 22;

/// Uniformity of a spectrum: entropy of sigma_i^2 / sum sigma^2, divided by
/// log(count). 1 for a flat spectrum, 0 for a single spike or all zeros.
inline double spectrum_uniformity(std::span<const double> sv) {
  double total = 0.0;
  for (double s : sv) total += s * s;
  if (sv.size() < 2 || total <= 0.0) return 0.0;
  double ent = 0.0;
  for (double s : sv) {
    const double p = s * s / total;
    if (p > 0.0) ent -= p * std::log(p);
  }
  return ent / std::log(static_cast<double>(sv.size()));
}

/// Dense operator mapping the flattened (h, w, c_i) input to the flattened
/// output, stride 1, zero padding `padding`.
inline Eigen::MatrixXd dbt_matrix(const Tensor4& kernel, std::size_t h, std::size_t w, std::size_t padding) {
  const auto& d = kernel.dims();
  const std::size_t k = d[0], ci_n = d[2], co_n = d[3];
  if (d[0] != d[1]) throw ShapeError("dbt_matrix: kernel must be square");
  ConvGeometry g{k, 1, padding, ci_n, co_n, h, w};
  g.validate();
  const std::size_t ho = g.h_o(), wo = g.w_o();
  const std::uint64_t rows = static_cast<std::uint64_t>(ho) * wo * co_n;
  const std::uint64_t cols = static_cast<std::uint64_t>(h) * w * ci_n;
  if (rows * cols > kSpectrumGuard) {
    throw ConfigError("dbt_spectrum: operator " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " exceeds the dense size guard of 2^22 entries");
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t oh = 0; oh < ho; ++oh) {
    for (std::size_t ow = 0; ow < wo; ++ow) {
      for (std::size_t u = 0; u < k; ++u) {
        const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh + u) - static_cast<std::ptrdiff_t>(padding);
        if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t v = 0; v < k; ++v) {
          const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow + v) - static_cast<std::ptrdiff_t>(padding);
          if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
          for (std::size_t ci = 0; ci < ci_n; ++ci) {
            const auto col = static_cast<Eigen::Index>((static_cast<std::size_t>(ih) * w + static_cast<std::size_t>(iw)) * ci_n + ci);
            for (std::size_t co = 0; co < co_n; ++co) {
              const auto row = static_cast<Eigen::Index>((oh * wo + ow) * co_n + co);
              m(row, col) += kernel(u, v, ci, co);
            }
          }
        }
      }
    }
  }
  return m;
}

inline SpectrumReport dbt_spectrum(const Tensor4& masked_kernel, std::size_t h, std::size_t w,
                                   std::size_t padding, std::string name = {}) {
  const Eigen::MatrixXd m = dbt_matrix(masked_kernel, h, w, padding);
  SpectrumReport r;
  r.layer = std::move(name);
  r.h = h;
  r.w = w;
  r.rows = static_cast<std::size_t>(m.rows());
  r.cols = static_cast<std::size_t>(m.cols());
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  const Eigen::VectorXd sv = svd.singularValues();
  r.singular_values.assign(sv.data(), sv.data() + sv.size());
  std::sort(r.singular_values.begin(), r.singular_values.end(), std::greater<>());
  for (double& s : r.singular_values) s = std::max(s, 0.0);
  r.uniformity = spectrum_uniformity(r.singular_values);
  return r;
}

}  // namespace lhc::analysis
