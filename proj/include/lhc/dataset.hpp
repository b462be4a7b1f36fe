// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

// Image datasets: the CIFAR-10 binary format and a procedural stand-in.
// Images are (n, h, w, c) in [0, 1], labels are class ids.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "lhc/errors.hpp"
#include "lhc/tensor.hpp"

namespace lhc::data {

struct Dataset {
  Tensor4 images;  // (n, h, w, c)
  std::vector<std::uint32_t> labels;
  std::size_t classes = 10;

  std::size_t size() const noexcept { return labels.size(); }

  /// Gathers the listed samples into one batch.
  Dataset gather(std::span<const std::size_t> idx) const {
    const auto& d = images.dims();
    Dataset out;
    out.classes = classes;
    out.images = Tensor4({idx.size(), d[1], d[2], d[3]});
    const std::size_t per = d[1] * d[2] * d[3];
    auto src = images.data();
    auto dst = out.images.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= size()) throw ShapeError("gather: sample index out of range");
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(idx[i] * per), per,
                  dst.begin() + static_cast<std::ptrdiff_t>(i * per));
      out.labels.push_back(labels[idx[i]]);
    }
    return out;
  }

  Dataset slice(std::size_t begin, std::size_t end) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = begin; i < std::min(end, size()); ++i) idx.push_back(i);
    return gather(idx);
  }

  void validate() const {
    if (images.dim(0) != labels.size()) throw DataError("dataset: image/label count mismatch");
    for (auto l : labels) {
      if (l >= classes) throw DataError("dataset: label " + std::to_string(l) + " >= class count");
    }
  }
};

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;

/// Appends records from one CIFAR-10 binary file: 1 label byte followed by
/// 1024 R, 1024 G and 1024 B bytes, each plane row-major 32x32.
inline void append_cifar10_file(const std::filesystem::path& file, std::vector<std::uint8_t>& pixels,
                                std::vector<std::uint32_t>& labels, std::size_t cap) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open CIFAR-10 file " + file.string());
  std::vector<unsigned char> rec(kCifarRecord);
  std::size_t index = 0;
  while (labels.size() < cap) {
    in.read(reinterpret_cast<char*>(rec.data()), static_cast<std::streamsize>(kCifarRecord));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0) break;
    if (got != kCifarRecord) {
      throw DataError(file.string() + ": truncated record " + std::to_string(index) + " at byte " +
                      std::to_string(index * kCifarRecord) + " (" + std::to_string(got) + " of " +
                      std::to_string(kCifarRecord) + " bytes)");
    }
    if (rec[0] > 9) {
      throw DataError(file.string() + ": record " + std::to_string(index) + " has label byte " +
                      std::to_string(rec[0]));
    }
    labels.push_back(rec[0]);
    const std::size_t plane = kCifarSide * kCifarSide;
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t ch = 0; ch < 3; ++ch) pixels.push_back(rec[1 + ch * plane + p]);
    }
    ++index;
  }
}

/// Loads one file, or every data_batch_*.bin / test_batch.bin in a directory
/// (sorted by name), keeping at most `cap` samples.
inline Dataset load_cifar10(const std::filesystem::path& path, std::size_t cap = SIZE_MAX) {
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  if (std::filesystem::is_directory(path, ec)) {
    for (const auto& e : std::filesystem::directory_iterator(path)) {
      if (e.path().extension() == ".bin") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no .bin files in " + path.string());
  } else {
    files.push_back(path);
  }
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint32_t> labels;
  for (const auto& f : files) {
    if (labels.size() >= cap) break;
    append_cifar10_file(f, pixels, labels, cap);
  }
  Dataset ds;
  ds.classes = 10;
  ds.images = Tensor4({labels.size(), kCifarSide, kCifarSide, 3});
  auto dst = ds.images.data();
  for (std::size_t i = 0; i < pixels.size(); ++i) dst[i] = static_cast<double>(pixels[i]) / 255.0;
  ds.labels = std::move(labels);
  return ds;
}

struct SynthOptions {
  std::size_t side = 13;
  std::size_t channels = 3;
  double noise = 0.08;
  double jitter = 0.12;  // orientation jitter in radians
};

/// Oriented gratings: class c has orientation c*pi/classes and a class
/// specific spatial frequency and color mix; phase, contrast and noise vary
/// per sample. Pixels are quantized to bytes, so a seed fixes the bytes.
inline Dataset synth_dataset(std::uint64_t seed, std::size_t n, std::size_t classes = 10, SynthOptions opt = {}) {
  if (classes == 0) throw ConfigError("synth_dataset: classes must be positive");
  Dataset ds;
  ds.classes = classes;
  ds.images = Tensor4({n, opt.side, opt.side, opt.channels});
  ds.labels.resize(n);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(classes - 1));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double pi = std::numbers::pi;
  const double center = (static_cast<double>(opt.side) - 1.0) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t c = pick(rng);
    ds.labels[i] = c;
    const double theta = pi * static_cast<double>(c) / static_cast<double>(classes) + opt.jitter * (unit(rng) - 0.5);
    const double freq = 0.55 + 0.25 * static_cast<double>(c % 3) + 0.05 * (unit(rng) - 0.5);
    const double phase = 2.0 * pi * unit(rng);
    const double contrast = 0.25 + 0.15 * unit(rng);
    const double ct = std::cos(theta), st = std::sin(theta);
    for (std::size_t y = 0; y < opt.side; ++y) {
      for (std::size_t x = 0; x < opt.side; ++x) {
        const double dx = static_cast<double>(x) - center, dy = static_cast<double>(y) - center;
        const double wave = std::cos(freq * (dx * ct + dy * st) + phase);
        for (std::size_t ch = 0; ch < opt.channels; ++ch) {
          // Small class-dependent tint so color alone is a weak cue.
          const double tint = 0.85 + 0.3 * static_cast<double>((c + ch) % opt.channels) / static_cast<double>(opt.channels);
          double v = 0.5 + contrast * tint * wave + opt.noise * gauss(rng);
          v = std::clamp(v, 0.0, 1.0);
          ds.images(i, y, x, ch) = std::round(v * 255.0) / 255.0;
        }
      }
    }
  }
  return ds;
}

}  // namespace lhc::data
