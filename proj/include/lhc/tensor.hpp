// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

// Dense rank-4 tensors, bias-free 2D convolution (forward and backward) and
// plain SGD. Features are laid out (b, h, w, c) and kernels (k, k, c_i, c_o),
// both row-major. Every convolution output element is accumulated in 64-bit
// reals in window order (kh, kw, ci), so results are reproducible bit for bit.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lhc/errors.hpp"

namespace lhc {

using Dims4 = std::array<std::size_t, 4>;

inline std::string format_dims(const Dims4& d) {
  std::ostringstream os;
  os << '(' << d[0] << ',' << d[1] << ',' << d[2] << ',' << d[3] << ')';
  return os.str();
}

class Tensor4 {
 public:
  Tensor4() = default;

  explicit Tensor4(Dims4 dims, double fill = 0.0)
      : dims_(dims), data_(dims[0] * dims[1] * dims[2] * dims[3], fill) {}

  Tensor4(Dims4 dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
    if (data_.size() != dims_[0] * dims_[1] * dims_[2] * dims_[3]) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match dims " + format_dims(dims_));
    }
  }

  const Dims4& dims() const noexcept { return dims_; }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t offset(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const noexcept {
    return ((i * dims_[1] + j) * dims_[2] + k) * dims_[3] + l;
  }

  double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) noexcept {
    return data_[offset(i, j, k, l)];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const noexcept {
    return data_[offset(i, j, k, l)];
  }

  double& operator[](std::size_t flat) noexcept { return data_[flat]; }
  double operator[](std::size_t flat) const noexcept { return data_[flat]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const noexcept {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor4& a, const Tensor4& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  Dims4 dims_{0, 0, 0, 0};
  std::vector<double> data_;
};

inline void require_same_dims(const Tensor4& a, const Tensor4& b, const char* what) {
  if (a.dims() != b.dims()) {
    throw ShapeError(std::string(what) + ": dims " + format_dims(a.dims()) + " vs " +
                     format_dims(b.dims()));
  }
}

/// Elementwise product of two equally shaped tensors.
inline Tensor4 hadamard(const Tensor4& a, const Tensor4& b) {
  require_same_dims(a, b, "hadamard");
  Tensor4 out(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

/// Inner product over all elements.
inline double dot(const Tensor4& a, const Tensor4& b) {
  require_same_dims(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct ConvGeometry {
  std::size_t k = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  std::size_t c_i = 1;
  std::size_t c_o = 1;
  std::size_t h_i = 1;
  std::size_t w_i = 1;

  std::size_t h_o() const noexcept { return (h_i + 2 * padding - k) / stride + 1; }
  std::size_t w_o() const noexcept { return (w_i + 2 * padding - k) / stride + 1; }

  Dims4 input_dims(std::size_t batch) const noexcept { return {batch, h_i, w_i, c_i}; }
  Dims4 kernel_dims() const noexcept { return {k, k, c_i, c_o}; }
  Dims4 output_dims(std::size_t batch) const noexcept { return {batch, h_o(), w_o(), c_o}; }

  /// Throws ShapeError unless every extent is positive and the output size is
  /// an exact integer on both spatial axes.
  void validate() const {
    if (k == 0 || stride == 0 || c_i == 0 || c_o == 0 || h_i == 0 || w_i == 0) {
      throw ShapeError("conv geometry: zero extent");
    }
    if (h_i + 2 * padding < k || w_i + 2 * padding < k) {
      throw ShapeError("conv geometry: kernel larger than padded input");
    }
    if ((h_i + 2 * padding - k) % stride != 0 || (w_i + 2 * padding - k) % stride != 0) {
      throw ShapeError("conv geometry: (h_i + 2*padding - k) not divisible by stride for h_i=" +
                       std::to_string(h_i) + " w_i=" + std::to_string(w_i) +
                       " k=" + std::to_string(k) + " stride=" + std::to_string(stride) +
                       " padding=" + std::to_string(padding));
    }
  }

  friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

namespace detail {

inline void check_conv_operands(const Tensor4& input, const Tensor4& kernel, const ConvGeometry& g) {
  g.validate();
  const Dims4 want_in = g.input_dims(input.dim(0));
  if (input.dims() != want_in) {
    throw ShapeError("conv input dims " + format_dims(input.dims()) + " expected " +
                     format_dims(want_in));
  }
  if (kernel.dims() != g.kernel_dims()) {
    throw ShapeError("conv kernel dims " + format_dims(kernel.dims()) + " expected " +
                     format_dims(g.kernel_dims()));
  }
}

}  // namespace detail

inline Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& kernel, const ConvGeometry& g) {
  detail::check_conv_operands(input, kernel, g);
  const std::size_t batch = input.dim(0);
  const std::size_t ho = g.h_o(), wo = g.w_o();
  const std::size_t ci_n = g.c_i, co_n = g.c_o;
  Tensor4 out(g.output_dims(batch));

  const double* in = input.data().data();
  const double* w = kernel.data().data();
  double* y = out.data().data();

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        double* acc = y + out.offset(b, oh, ow, 0);
        for (std::size_t kh = 0; kh < g.k; ++kh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h_i)) continue;
          for (std::size_t kw = 0; kw < g.k; ++kw) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w_i)) continue;
            const double* x = in + input.offset(b, static_cast<std::size_t>(ih),
                                                static_cast<std::size_t>(iw), 0);
            const double* wk = w + kernel.offset(kh, kw, 0, 0);
            for (std::size_t ci = 0; ci < ci_n; ++ci) {
              const double xv = x[ci];
              const double* wrow = wk + ci * co_n;
              for (std::size_t co = 0; co < co_n; ++co) acc[co] += xv * wrow[co];
            }
          }
        }
      }
    }
  }
  return out;
}

struct ConvGrads {
  Tensor4 grad_input;
  Tensor4 grad_kernel;
};

/// Gradients of <upstream, conv2d_forward(input, kernel)> with respect to both
/// operands. With `want_input == false` grad_input is left empty.
inline ConvGrads conv2d_backward(const Tensor4& upstream, const Tensor4& input, const Tensor4& kernel,
                                 const ConvGeometry& g, bool want_input = true) {
  detail::check_conv_operands(input, kernel, g);
  const std::size_t batch = input.dim(0);
  if (upstream.dims() != g.output_dims(batch)) {
    throw ShapeError("conv upstream dims " + format_dims(upstream.dims()) + " expected " +
                     format_dims(g.output_dims(batch)));
  }
  const std::size_t ho = g.h_o(), wo = g.w_o();
  const std::size_t ci_n = g.c_i, co_n = g.c_o;

  ConvGrads grads;
  grads.grad_kernel = Tensor4(kernel.dims());
  if (want_input) grads.grad_input = Tensor4(input.dims());

  const double* in = input.data().data();
  const double* w = kernel.data().data();
  const double* up = upstream.data().data();
  double* gk = grads.grad_kernel.data().data();
  double* gx = want_input ? grads.grad_input.data().data() : nullptr;

  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        const double* gy = up + upstream.offset(b, oh, ow, 0);
        for (std::size_t kh = 0; kh < g.k; ++kh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.stride + kh) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h_i)) continue;
          for (std::size_t kw = 0; kw < g.k; ++kw) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.stride + kw) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w_i)) continue;
            const std::size_t in_off = input.offset(b, static_cast<std::size_t>(ih),
                                                    static_cast<std::size_t>(iw), 0);
            const double* x = in + in_off;
            const std::size_t k_off = kernel.offset(kh, kw, 0, 0);
            for (std::size_t ci = 0; ci < ci_n; ++ci) {
              const double xv = x[ci];
              double* gkrow = gk + k_off + ci * co_n;
              for (std::size_t co = 0; co < co_n; ++co) gkrow[co] += xv * gy[co];
              if (gx != nullptr) {
                const double* wrow = w + k_off + ci * co_n;
                double s = 0.0;
                for (std::size_t co = 0; co < co_n; ++co) s += gy[co] * wrow[co];
                gx[in_off + ci] += s;
              }
            }
          }
        }
      }
    }
  }
  return grads;
}

/// p <- p - lr * g. Throws NumericError when the update leaves a non-finite value.
inline void sgd_step(Tensor4& param, const Tensor4& grad, double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("sgd_step: learning rate must be positive");
  require_same_dims(param, grad, "sgd_step");
  auto p = param.data();
  auto gr = grad.data();
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * gr[i];
  if (!param.all_finite()) throw NumericError("sgd_step produced a non-finite parameter");
}

inline void sgd_step(std::span<const std::reference_wrapper<Tensor4>> params,
                     std::span<const std::reference_wrapper<const Tensor4>> grads, double lr) {
  if (params.size() != grads.size()) {
    throw ShapeError("sgd_step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " grads");
  }
  for (std::size_t i = 0; i < params.size(); ++i) sgd_step(params[i].get(), grads[i].get(), lr);
}

}  // namespace lhc
