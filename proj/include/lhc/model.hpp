// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

// Small convolutional classifier built from LHC layers:
//   [conv (LHC or standard) + bias + ReLU] x L -> global average pool -> linear
// trained with softmax cross-entropy.
//
// Model file, little-endian:
//   "LHCM" u32 version, u32 in_h, in_w, in_c, classes, layer_count
//   per layer: u32 stride, u32 padding, u8 is_lhc, "LHC1" segment, f32 bias x c_o
//   head: u32 features, f32 weights (features x classes), f32 bias x classes

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lhc/checkpoint.hpp"
#include "lhc/errors.hpp"
#include "lhc/lhc_layer.hpp"
#include "lhc/sparsity.hpp"
#include "lhc/tensor.hpp"

namespace lhc {

struct ModelSpec {
  std::size_t in_h = 13, in_w = 13, in_c = 3;
  std::size_t classes = 10;
  std::vector<std::size_t> widths{16, 32, 32, 64};
  std::vector<std::size_t> strides{1, 2, 1, 2};
  std::size_t k = 3;
  std::size_t padding = 1;
  LhcMode mode = LhcMode::Free;
  TopologyConstraints constraints{8, 4};
  bool lhc = true;               // false builds the dense baseline
  bool lhc_first_layer = false;  // the first layer sees few input channels

  void validate() const {
    if (widths.empty()) throw ConfigError("model needs at least one layer");
    if (widths.size() != strides.size()) {
      throw ConfigError("model: " + std::to_string(widths.size()) + " widths but " +
                        std::to_string(strides.size()) + " strides");
    }
    if (classes < 2) throw ConfigError("model: need at least two classes");
  }
};

struct ConvUnit {
  LhcLayer conv;
  std::vector<double> bias;
  bool is_lhc = true;
};

struct Head {
  std::size_t features = 0, classes = 0;
  std::vector<double> weight;  // (features, classes) row-major
  std::vector<double> bias;
};

class NetworkLoader;

class Network {
 public:
  Network() = default;

  /// Builds and initializes a model. Standard layers get the same constraint
  /// fit and the same initializer draws as LHC layers, so an LHC model and its
  /// dense baseline start from identical kernels for a given seed.
  template <typename Rng>
  static Network build(const ModelSpec& spec, Rng& rng) {
    spec.validate();
    Network net;
    net.in_h_ = spec.in_h;
    net.in_w_ = spec.in_w;
    net.in_c_ = spec.in_c;
    std::size_t h = spec.in_h, w = spec.in_w, c = spec.in_c;
    for (std::size_t l = 0; l < spec.widths.size(); ++l) {
      ConvGeometry g{spec.k, spec.strides[l], spec.padding, c, spec.widths[l], h, w};
      g.validate();
      ConvUnit u;
      u.conv = LhcLayer(g, TopologyConstraints::fit(c, spec.widths[l], spec.constraints), spec.mode);
      u.conv.initialize(rng);
      u.is_lhc = spec.lhc && (l > 0 || spec.lhc_first_layer);
      u.conv.set_mask_enabled(u.is_lhc);
      u.bias.assign(spec.widths[l], 0.0);
      net.units_.push_back(std::move(u));
      h = g.h_o();
      w = g.w_o();
      c = spec.widths[l];
    }
    net.head_.features = c;
    net.head_.classes = spec.classes;
    net.head_.weight.resize(c * spec.classes);
    net.head_.bias.assign(spec.classes, 0.0);
    const double a = std::sqrt(6.0 / static_cast<double>(c + spec.classes));
    std::uniform_real_distribution<double> dist(-a, a);
    for (double& v : net.head_.weight) v = dist(rng);
    return net;
  }

  std::vector<ConvUnit>& units() noexcept { return units_; }
  const std::vector<ConvUnit>& units() const noexcept { return units_; }
  Head& head() noexcept { return head_; }
  const Head& head() const noexcept { return head_; }
  Dims4 input_dims(std::size_t batch) const noexcept { return {batch, in_h_, in_w_, in_c_}; }
  std::size_t classes() const noexcept { return head_.classes; }

  /// Topology masks of the LHC layers, in layer order.
  std::vector<MaskTensor> lhc_masks() const {
    std::vector<MaskTensor> out;
    for (const auto& u : units_) {
      if (u.is_lhc) out.push_back(topology_masks(u.conv));
    }
    return out;
  }

  double density() const {
    const auto m = lhc_masks();
    return m.empty() ? 1.0 : global_density(m);
  }

  /// Inference configuration: every LHC layer masked, standard layers dense.
  void enable_inference_masks() {
    for (auto& u : units_) u.conv.set_mask_enabled(u.is_lhc);
  }

  void round_to_storage() {
    for (auto& u : units_) {
      io::round_to_storage(u.conv);
      io::round_to_storage(u.bias);
    }
    io::round_to_storage(head_.weight);
    io::round_to_storage(head_.bias);
  }

  friend bool operator==(const Network& a, const Network& b) {
    if (a.units_.size() != b.units_.size() || a.in_h_ != b.in_h_ || a.in_w_ != b.in_w_ || a.in_c_ != b.in_c_) {
      return false;
    }
    for (std::size_t i = 0; i < a.units_.size(); ++i) {
      const auto &x = a.units_[i], &y = b.units_[i];
      if (x.is_lhc != y.is_lhc || x.bias != y.bias || !(x.conv.geometry() == y.conv.geometry()) ||
          !(x.conv.constraints() == y.conv.constraints()) || x.conv.mode() != y.conv.mode() ||
          !(x.conv.kernel() == y.conv.kernel()) || !(x.conv.effect() == y.conv.effect())) {
        return false;
      }
    }
    return a.head_.weight == b.head_.weight && a.head_.bias == b.head_.bias && a.head_.features == b.head_.features &&
           a.head_.classes == b.head_.classes;
  }

 private:
  friend class NetworkLoader;
  std::vector<ConvUnit> units_;
  Head head_;
  std::size_t in_h_ = 0, in_w_ = 0, in_c_ = 0;
};

struct ForwardState {
  std::vector<LhcCache> caches;
  std::vector<Tensor4> activations;  // post-ReLU output of each unit
  std::vector<double> pooled;        // (batch, features)
  std::vector<double> logits;        // (batch, classes)
  std::size_t batch = 0;
};

inline ForwardState network_forward(const Network& net, const Tensor4& images) {
  if (images.dims() != net.input_dims(images.dim(0))) {
    throw ShapeError("network input " + format_dims(images.dims()) + " expected " +
                     format_dims(net.input_dims(images.dim(0))));
  }
  ForwardState st;
  st.batch = images.dim(0);
  st.activations.reserve(net.units().size());
  const Tensor4* x = &images;
  for (const auto& u : net.units()) {
    auto fw = lhc_forward(u.conv, *x);
    auto y = fw.output.data();
    const std::size_t co = u.conv.geometry().c_o;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max(0.0, y[i] + u.bias[i % co]);
    st.caches.push_back(std::move(fw.cache));
    st.activations.push_back(std::move(fw.output));
    x = &st.activations.back();
  }
  const auto& h = net.head();
  const auto& d = x->dims();
  const std::size_t hw = d[1] * d[2];
  st.pooled.assign(st.batch * h.features, 0.0);
  for (std::size_t b = 0; b < st.batch; ++b) {
    for (std::size_t p = 0; p < hw; ++p) {
      for (std::size_t f = 0; f < h.features; ++f) st.pooled[b * h.features + f] += (*x)[(b * hw + p) * h.features + f];
    }
    for (std::size_t f = 0; f < h.features; ++f) st.pooled[b * h.features + f] /= static_cast<double>(hw);
  }
  st.logits.assign(st.batch * h.classes, 0.0);
  for (std::size_t b = 0; b < st.batch; ++b) {
    for (std::size_t c = 0; c < h.classes; ++c) {
      double s = h.bias[c];
      for (std::size_t f = 0; f < h.features; ++f) s += st.pooled[b * h.features + f] * h.weight[f * h.classes + c];
      st.logits[b * h.classes + c] = s;
    }
  }
  return st;
}

struct LossResult {
  double loss = 0.0;                // mean cross-entropy
  std::size_t correct = 0;
  std::vector<double> grad_logits;  // d loss / d logits
};

inline LossResult softmax_cross_entropy(std::span<const double> logits, std::span<const std::uint32_t> labels,
                                        std::size_t classes) {
  const std::size_t batch = labels.size();
  if (logits.size() != batch * classes) throw ShapeError("cross-entropy: logits/labels mismatch");
  LossResult r;
  r.grad_logits.assign(logits.size(), 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* z = logits.data() + b * classes;
    const double m = *std::max_element(z, z + classes);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(z[c] - m);
    const double lse = m + std::log(sum);
    r.loss += lse - z[labels[b]];
    std::size_t arg = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (z[c] > z[arg]) arg = c;
    }
    r.correct += (arg == labels[b]);
    for (std::size_t c = 0; c < classes; ++c) {
      r.grad_logits[b * classes + c] = (std::exp(z[c] - lse) - (c == labels[b] ? 1.0 : 0.0)) / static_cast<double>(batch);
    }
  }
  if (batch > 0) r.loss /= static_cast<double>(batch);
  return r;
}

struct UnitGrads {
  Tensor4 kernel;
  std::vector<double> bias;
  std::vector<double> effect;
};

struct NetworkGrads {
  std::vector<UnitGrads> units;
  std::vector<double> head_weight;
  std::vector<double> head_bias;
};

inline NetworkGrads network_backward(const Network& net, const Tensor4& images, const ForwardState& st,
                                     std::span<const double> grad_logits) {
  const auto& h = net.head();
  NetworkGrads g;
  g.head_weight.assign(h.weight.size(), 0.0);
  g.head_bias.assign(h.classes, 0.0);
  std::vector<double> gpool(st.batch * h.features, 0.0);
  for (std::size_t b = 0; b < st.batch; ++b) {
    for (std::size_t c = 0; c < h.classes; ++c) {
      const double gz = grad_logits[b * h.classes + c];
      g.head_bias[c] += gz;
      for (std::size_t f = 0; f < h.features; ++f) {
        g.head_weight[f * h.classes + c] += st.pooled[b * h.features + f] * gz;
        gpool[b * h.features + f] += h.weight[f * h.classes + c] * gz;
      }
    }
  }
  const auto& units = net.units();
  const std::size_t L = units.size();
  g.units.resize(L);
  Tensor4 up(st.activations.back().dims());
  {
    const auto& d = up.dims();
    const std::size_t hw = d[1] * d[2];
    for (std::size_t b = 0; b < st.batch; ++b) {
      for (std::size_t p = 0; p < hw; ++p) {
        for (std::size_t f = 0; f < h.features; ++f) {
          up[(b * hw + p) * h.features + f] = gpool[b * h.features + f] / static_cast<double>(hw);
        }
      }
    }
  }
  for (std::size_t l = L; l-- > 0;) {
    const auto& act = st.activations[l];
    const std::size_t co = units[l].conv.geometry().c_o;
    auto gu = up.data();
    auto a = act.data();
    g.units[l].bias.assign(co, 0.0);
    for (std::size_t i = 0; i < gu.size(); ++i) {
      if (a[i] <= 0.0) gu[i] = 0.0;
      g.units[l].bias[i % co] += gu[i];
    }
    auto lg = lhc_backward(units[l].conv, st.caches[l], up, l > 0);
    g.units[l].kernel = std::move(lg.grad_kernel);
    g.units[l].effect = std::move(lg.grad_effect);
    if (l > 0) up = std::move(lg.grad_input);
  }
  (void)images;
  return g;
}

// --- model file -----------------------------------------------------------

inline constexpr std::uint32_t kModelVersion = 1;

inline void save_model(std::ostream& os, const Network& net) {
  const auto& units = net.units();
  const auto d = net.input_dims(0);
  os.write("LHCM", 4);
  for (std::size_t v : {std::size_t{kModelVersion}, d[1], d[2], d[3], net.classes(), units.size()}) {
    io::write_u32(os, static_cast<std::uint32_t>(v));
  }
  for (const auto& u : units) {
    io::write_u32(os, static_cast<std::uint32_t>(u.conv.geometry().stride));
    io::write_u32(os, static_cast<std::uint32_t>(u.conv.geometry().padding));
    io::write_u8(os, u.is_lhc ? 1 : 0);
    io::write_layer_segment(os, u.conv);
    for (double b : u.bias) io::write_f32(os, b);
  }
  const auto& h = net.head();
  io::write_u32(os, static_cast<std::uint32_t>(h.features));
  for (double v : h.weight) io::write_f32(os, v);
  for (double v : h.bias) io::write_f32(os, v);
}

inline void save_model(const std::filesystem::path& path, const Network& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint " + path.string());
  save_model(os, net);
  if (!os) throw DataError("failed writing checkpoint " + path.string());
}

/// Grants the loader access to Network internals.
class NetworkLoader {
 public:
  static Network load(std::istream& is) {
    io::expect_magic(is, "LHCM", "model file");
    const std::uint32_t version = io::read_u32(is, "model version");
    if (version != kModelVersion) throw DataError("model file version " + std::to_string(version) + " unsupported");
    const std::uint32_t in_h = io::read_u32(is, "model header"), in_w = io::read_u32(is, "model header");
    const std::uint32_t in_c = io::read_u32(is, "model header"), classes = io::read_u32(is, "model header");
    const std::uint32_t count = io::read_u32(is, "model header");
    if (count == 0 || count > 4096 || classes < 2 || in_h == 0 || in_w == 0 || in_c == 0) {
      throw DataError("model header is implausible");
    }
    Network net;
    net.in_h_ = in_h;
    net.in_w_ = in_w;
    net.in_c_ = in_c;
    std::size_t h = in_h, w = in_w, c = in_c;
    for (std::uint32_t l = 0; l < count; ++l) {
      ConvGeometry g;
      g.stride = io::read_u32(is, "layer stride");
      g.padding = io::read_u32(is, "layer padding");
      g.h_i = h;
      g.w_i = w;
      const std::uint8_t is_lhc = io::read_u8(is, "layer kind");
      if (is_lhc > 1) throw DataError("bad layer kind byte");
      ConvUnit u;
      u.conv = io::read_layer_segment(is, g);
      if (u.conv.geometry().c_i != c) {
        throw DataError("layer " + std::to_string(l) + " has c_i=" + std::to_string(u.conv.geometry().c_i) +
                        " but the previous layer produces " + std::to_string(c));
      }
      u.is_lhc = is_lhc == 1;
      u.conv.set_mask_enabled(u.is_lhc);
      u.bias.resize(u.conv.geometry().c_o);
      for (double& b : u.bias) b = io::read_f32(is, "layer bias");
      h = u.conv.geometry().h_o();
      w = u.conv.geometry().w_o();
      c = u.conv.geometry().c_o;
      net.units_.push_back(std::move(u));
    }
    const std::uint32_t features = io::read_u32(is, "head size");
    if (features != c) throw DataError("head expects " + std::to_string(features) + " features, model produces " + std::to_string(c));
    net.head_.features = features;
    net.head_.classes = classes;
    net.head_.weight.resize(static_cast<std::size_t>(features) * classes);
    net.head_.bias.resize(classes);
    for (double& v : net.head_.weight) v = io::read_f32(is, "head weights");
    for (double& v : net.head_.bias) v = io::read_f32(is, "head bias");
    return net;
  }
};

inline Network load_model(std::istream& is) { return NetworkLoader::load(is); }

inline Network load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + path.string());
  return load_model(is);
}

/// Top-1 accuracy with inference masks, evaluated in chunks.
template <typename DatasetT>
double evaluate_accuracy(const Network& net, const DatasetT& ds, std::size_t chunk = 64) {
  if (ds.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < ds.size(); b += chunk) {
    const auto part = ds.slice(b, b + chunk);
    const auto st = network_forward(net, part.images);
    correct += softmax_cross_entropy(st.logits, part.labels, net.classes()).correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

}  // namespace lhc
