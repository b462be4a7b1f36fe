// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

// Training loop with both warm-ups:
//   masks   layer l is masked during epoch i with probability (i-1)/n_warm
//   alpha   the mask-loss weight ramps to f * alpha_t, with f scaled from the
//           task loss so both terms start comparable
// Mask loss, logged density and snapshots always use the topology masks
// derived from the effect factors, whether or not a layer is currently masked.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "lhc/dataset.hpp"
#include "lhc/errors.hpp"
#include "lhc/lhc_layer.hpp"
#include "lhc/model.hpp"
#include "lhc/snapshot.hpp"
#include "lhc/sparsity.hpp"

namespace lhc {

struct TrainConfig {
  std::uint64_t seed = 1;
  std::size_t epochs = 40;
  std::size_t batch = 8;
  double lr = 0.02;
  double lr_decay = 0.1;
  std::vector<std::size_t> lr_decay_epochs{30};  // lr *= lr_decay after each listed epoch
  double momentum = 0.9;
  double weight_decay = 0.0;  // kernels and head weights only
  double effect_lr_scale = 5.0;
  std::size_t patience = 0;   // early stopping on test accuracy; 0 disables
  DensityTarget d_t;
  double alpha_t = 1.0;
  std::size_t n_warm = 10;
  bool augment_flip = false;
  bool augment_translate = false;
  std::optional<std::filesystem::path> snapshot_dir;

  void validate() const {
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (batch == 0) throw ConfigError("batch must be positive");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
    if (!(effect_lr_scale >= 0.0)) throw ConfigError("effect_lr_scale must be non-negative");
    if (!(alpha_t >= 0.0)) throw ConfigError("alpha_t must be non-negative");
    if (n_warm == 0) throw ConfigError("n_warm must be positive");
    if (d_t && !(*d_t >= 0.0 && *d_t <= 1.0)) throw ConfigError("d_t must lie in [0, 1]");
  }
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double task_loss = 0.0;
  double mask_loss = 0.0;
  double alpha = 0.0;
  double density = 1.0;
  double accuracy = 0.0;
};

inline void write_metrics_header(std::ostream& os) { os << "epoch,task_loss,mask_loss,alpha,density,accuracy\n"; }

inline void write_metrics_row(std::ostream& os, const EpochMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n", m.epoch, m.task_loss, m.mask_loss, m.alpha,
                m.density, m.accuracy);
  os << buf;
}

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochMetrics&, const Network&)>;

inline double learning_rate(const TrainConfig& cfg, std::size_t epoch) {
  double lr = cfg.lr;
  for (std::size_t e : cfg.lr_decay_epochs) {
    if (epoch > e) lr *= cfg.lr_decay;
  }
  return lr;
}

namespace detail {

/// Random horizontal flip and +-1 pixel translation with zero fill.
template <typename Rng>
void augment(Tensor4& images, const TrainConfig& cfg, Rng& rng) {
  if (!cfg.augment_flip && !cfg.augment_translate) return;
  const auto d = images.dims();
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> shift(-1, 1);
  Tensor4 out(d);
  for (std::size_t b = 0; b < d[0]; ++b) {
    const bool flip = cfg.augment_flip && coin(rng);
    const int dy = cfg.augment_translate ? shift(rng) : 0;
    const int dx = cfg.augment_translate ? shift(rng) : 0;
    for (std::size_t y = 0; y < d[1]; ++y) {
      for (std::size_t x = 0; x < d[2]; ++x) {
        const int sy = static_cast<int>(y) - dy;
        int sx = static_cast<int>(x) - dx;
        if (flip) sx = static_cast<int>(d[2]) - 1 - sx;
        if (sy < 0 || sx < 0 || sy >= static_cast<int>(d[1]) || sx >= static_cast<int>(d[2])) continue;
        for (std::size_t c = 0; c < d[3]; ++c) {
          out(b, y, x, c) = images(b, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx), c);
        }
      }
    }
  }
  images = std::move(out);
}

inline void momentum_update(std::span<double> param, std::span<const double> grad, std::vector<double>& vel,
                            double lr, double momentum, double decay) {
  if (vel.size() != param.size()) vel.assign(param.size(), 0.0);
  for (std::size_t i = 0; i < param.size(); ++i) {
    vel[i] = momentum * vel[i] + grad[i] + decay * param[i];
    param[i] -= lr * vel[i];
  }
}

}  // namespace detail

/// Adds the mask-loss gradient alpha * d l_mask / d e to grad_effect for every
/// LHC layer. The per-element slope is identical for all mask entries, so a
/// block's slice gradient is slope * c_gi * c_go in every cell.
inline void add_mask_loss_gradient(const Network& net, double d_t, double alpha,
                                   std::vector<std::vector<double>>& grad_effect) {
  if (alpha == 0.0) return;
  std::vector<std::vector<StepOutcome>> steps;
  std::size_t ones = 0, total = 0;
  for (const auto& u : net.units()) {
    if (!u.is_lhc) {
      steps.emplace_back();
      continue;
    }
    steps.push_back(evaluate_steps(u.conv));
    const auto& c = u.conv.constraints();
    for (const auto& s : steps.back()) ones += s.mask.l0() * c.c_gi * c.c_go;
    total += u.conv.kernel().size();
  }
  if (total == 0) return;
  const double diff = static_cast<double>(ones) / static_cast<double>(total) - d_t;
  const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  const double slope = alpha * sign / static_cast<double>(total);
  if (slope == 0.0) return;
  for (std::size_t l = 0; l < net.units().size(); ++l) {
    const auto& u = net.units()[l];
    if (!u.is_lhc) continue;
    const auto& c = u.conv.constraints();
    const std::size_t kk = u.conv.geometry().k * u.conv.geometry().k;
    std::vector<double> slice(u.conv.effect().block_count() * kk, slope * static_cast<double>(c.c_gi * c.c_go));
    const auto ge = effect_gradient(u.conv, steps[l], slice);
    auto& dst = grad_effect[l];
    if (dst.size() != ge.size()) dst.assign(ge.size(), 0.0);
    for (std::size_t i = 0; i < ge.size(); ++i) dst[i] += ge[i];
  }
}

class Trainer {
 public:
  Trainer(TrainConfig cfg, Network& net) : cfg_(std::move(cfg)), net_(net), rng_(cfg_.seed ^ 0x9e3779b97f4a7c15ull) {
    cfg_.validate();
    obj_.d_t = cfg_.d_t;
    obj_.alpha_t = cfg_.alpha_t;
    obj_.n_warm = cfg_.n_warm;
  }

  TrainResult run(const data::Dataset& train, const data::Dataset& test, std::ostream* metrics_csv = nullptr,
                  const EpochCallback& on_epoch = {}) {
    if (train.size() == 0) throw DataError("training set is empty");
    TrainResult res;
    if (metrics_csv != nullptr) write_metrics_header(*metrics_csv);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double last_task = 0.0;
    double best_acc = -1.0;
    std::size_t since_best = 0;
    const std::size_t lhc_count = static_cast<std::size_t>(
        std::count_if(net_.units().begin(), net_.units().end(), [](const ConvUnit& u) { return u.is_lhc; }));

    for (std::size_t epoch = 1; epoch <= cfg_.epochs; ++epoch) {
      EpochMetrics m;
      m.epoch = epoch;
      m.alpha = alpha_schedule(epoch, last_task, obj_);
      const auto enabled = mask_enable_schedule(epoch, cfg_.n_warm, lhc_count, rng_);
      for (std::size_t l = 0, j = 0; l < net_.units().size(); ++l) {
        auto& u = net_.units()[l];
        u.conv.set_mask_enabled(u.is_lhc && enabled[j]);
        if (u.is_lhc) ++j;
      }
      const double lr = learning_rate(cfg_, epoch);
      std::shuffle(order.begin(), order.end(), rng_);
      double loss_sum = 0.0;
      for (std::size_t b = 0; b < order.size(); b += cfg_.batch) {
        const std::size_t e = std::min(order.size(), b + cfg_.batch);
        auto batch = train.gather(std::span<const std::size_t>(order).subspan(b, e - b));
        detail::augment(batch.images, cfg_, rng_);
        try {
          loss_sum += step(batch, m.alpha, lr) * static_cast<double>(e - b);
        } catch (const NumericError& err) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + err.what());
        }
        if (!std::isfinite(loss_sum)) throw NumericError("training diverged (non-finite loss) at epoch " + std::to_string(epoch));
      }
      net_.round_to_storage();
      m.task_loss = loss_sum / static_cast<double>(order.size());
      last_task = m.task_loss;
      m.density = net_.density();
      m.mask_loss = obj_.active() ? std::abs(*obj_.d_t - m.density) : 0.0;

      net_.enable_inference_masks();
      m.accuracy = data_accuracy(test);
      res.metrics.push_back(m);
      if (metrics_csv != nullptr) {
        write_metrics_row(*metrics_csv, m);
        metrics_csv->flush();
      }
      if (cfg_.snapshot_dir) io::save_snapshot(*cfg_.snapshot_dir, {static_cast<std::uint32_t>(epoch), net_.lhc_masks()});
      if (on_epoch) on_epoch(m, net_);

      if (cfg_.patience > 0) {
        if (m.accuracy > best_acc) {
          best_acc = m.accuracy;
          since_best = 0;
        } else if (++since_best >= cfg_.patience) {
          res.stopped_early = true;
          break;
        }
      }
    }
    net_.enable_inference_masks();
    return res;
  }

 private:
  double data_accuracy(const data::Dataset& test) { return evaluate_accuracy(net_, test); }

  /// One SGD step on a batch; returns the batch task loss.
  double step(const data::Dataset& batch, double alpha, double lr) {
    const auto st = network_forward(net_, batch.images);
    const auto loss = softmax_cross_entropy(st.logits, batch.labels, net_.classes());
    if (!std::isfinite(loss.loss)) return loss.loss;
    auto grads = network_backward(net_, batch.images, st, loss.grad_logits);

    std::vector<std::vector<double>> ge(grads.units.size());
    for (std::size_t l = 0; l < grads.units.size(); ++l) ge[l] = std::move(grads.units[l].effect);
    if (obj_.active()) add_mask_loss_gradient(net_, *obj_.d_t, alpha, ge);

    auto& units = net_.units();
    vel_.resize(units.size() * 3 + 2);
    for (std::size_t l = 0; l < units.size(); ++l) {
      auto& u = units[l];
      detail::momentum_update(u.conv.mutable_kernel().data(), grads.units[l].kernel.data(), vel_[3 * l], lr,
                              cfg_.momentum, cfg_.weight_decay);
      detail::momentum_update(u.bias, grads.units[l].bias, vel_[3 * l + 1], lr, cfg_.momentum, 0.0);
      if (u.is_lhc && cfg_.effect_lr_scale > 0.0) {
        detail::momentum_update(u.conv.mutable_effect().values(), ge[l], vel_[3 * l + 2], lr * cfg_.effect_lr_scale,
                                cfg_.momentum, 0.0);
      }
    }
    auto& h = net_.head();
    detail::momentum_update(h.weight, grads.head_weight, vel_[3 * units.size()], lr, cfg_.momentum, cfg_.weight_decay);
    detail::momentum_update(h.bias, grads.head_bias, vel_[3 * units.size() + 1], lr, cfg_.momentum, 0.0);
    return loss.loss;
  }

  TrainConfig cfg_;
  Network& net_;
  std::mt19937_64 rng_;
  DensityObjective obj_;
  std::vector<std::vector<double>> vel_;
};

}  // namespace lhc
