// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Pass criterion numbers to run a subset.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <Eigen/SVD>

#include "lhc/analysis.hpp"
#include "lhc/commands.hpp"
#include "lhc/degeneration.hpp"
#include "lhc/hw_simulator.hpp"
#include "lhc/train.hpp"
#include "oracles.hpp"

namespace {

using lhc::ConvGeometry;
using lhc::LhcLayer;
using lhc::LhcMode;
using lhc::MaskTensor;
using lhc::Tensor4;
using lhc::TopologyConstraints;
namespace sim = lhc::sim;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

LhcLayer random_layer(ConvGeometry g, TopologyConstraints c, LhcMode mode, std::mt19937_64& rng, double lo,
                      double hi) {
  LhcLayer l(g, c, mode);
  l.initialize(rng);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& e : l.mutable_effect().values()) e = u(rng);
  return l;
}

Tensor4 masked_kernel(const LhcLayer& l) { return lhc::hadamard(l.kernel(), lhc::build_masks(l).bits); }

// ---------------------------------------------------------------------------

Outcome conv_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> d6(1, 6), d3(1, 3), d2(0, 2);
  double worst = 0.0;
  int done = 0;
  while (done < 200) {
    ConvGeometry g{d3(rng), d3(rng), d2(rng), d6(rng), d6(rng), d6(rng), d6(rng)};
    try {
      g.validate();
    } catch (const lhc::ShapeError&) {
      continue;
    }
    const Tensor4 x = oracle::random_tensor(g.input_dims(d3(rng)), rng);
    const Tensor4 w = oracle::random_tensor(g.kernel_dims(), rng);
    const Tensor4 y = lhc::conv2d_forward(x, w, g);
    const Tensor4 ref = oracle::naive_conv(x, w, g.stride, g.padding);
    if (y.dims() != ref.dims()) return {false, "shape mismatch"};
    worst = std::max(worst, oracle::max_abs_diff(y, ref));
    ++done;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst == 0.0 && secs < 10.0, fmt("200 instances, max abs error %g, %.2f s", worst, secs)};
}

Outcome gradient_checks() {
  std::mt19937_64 rng(102);
  double worst_fd = 0.0, worst_chain = 0.0;
  for (std::size_t t = 0; t < 50; ++t) {
    const auto mode = t % 2 ? LhcMode::Rigid : LhcMode::Free;
    ConvGeometry g{3, 1 + t % 2, 1, 2 + 2 * (t % 2), 4, 3 + t % 3, 5 - t % 2};
    try {
      g.validate();
    } catch (const lhc::ShapeError&) {
      g.stride = 1;
    }
    auto layer = random_layer(g, {2, 2}, mode, rng, -1.5, 1.5);
    Tensor4 x = oracle::random_tensor(g.input_dims(1 + t % 2), rng);
    const Tensor4 up = oracle::random_tensor(g.output_dims(x.dim(0)), rng);
    const auto fw = lhc::lhc_forward(layer, x);
    const auto gr = lhc::lhc_backward(layer, fw.cache, up);

    auto obj_x = [&] { return lhc::dot(up, lhc::lhc_forward(layer, x).output); };
    worst_fd = std::max(worst_fd, oracle::relative_error(gr.grad_input, oracle::finite_difference(x, obj_x)));
    Tensor4 w = layer.kernel();
    auto obj_w = [&] {
      layer.mutable_kernel() = w;
      return lhc::dot(up, lhc::lhc_forward(layer, x).output);
    };
    worst_fd = std::max(worst_fd, oracle::relative_error(gr.grad_kernel, oracle::finite_difference(w, obj_w)));
    layer.mutable_kernel() = w;

    const auto masked = lhc::hadamard(layer.kernel(), lhc::topology_masks(layer).bits);
    const auto want =
        oracle::surrogate_chain(layer, oracle::naive_conv_kernel_grad(x, up, masked, g.stride, g.padding));
    if (want.size() != gr.grad_effect.size()) return {false, "effect gradient length mismatch"};
    for (std::size_t i = 0; i < want.size(); ++i) worst_chain = std::max(worst_chain, std::abs(want[i] - gr.grad_effect[i]));
  }
  return {worst_fd < 1e-4 && worst_chain < 1e-12,
          fmt("finite-difference rel err %.3g, surrogate chain abs err %.3g", worst_fd, worst_chain)};
}

Outcome step_semantics() {
  const std::array<double, 5> levels{-2.0, -0.5, 0.0, 0.5, 2.0};
  std::array<double, 9> e{};
  std::size_t combos = 1, bad = 0;
  for (int i = 0; i < 9; ++i) combos *= 5;
  for (std::size_t n = 0; n < combos; ++n) {
    std::size_t r = n;
    for (auto& v : e) {
      v = levels[r % 5];
      r /= 5;
    }
    const auto out = lhc::step_f(e);
    for (std::size_t j = 0; j < 9; ++j) {
      bad += out.mask.bits[j] != (e[j] > 0.0 ? 1 : 0);
      bad += out.grad_surrogate[j] != (std::abs(e[j]) < 1.0 ? 1.0 : 0.1);
    }
  }
  std::mt19937_64 rng(103);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::size_t bad_r = 0;
  for (std::size_t t = 0; t < 1000; ++t) {
    std::vector<double> v(15);
    for (double& x : v) x = nd(rng) * (t % 3 + 0.5);
    if (t % 50 == 0) v[(t / 50) % 15] = v[14] = 5.0;  // planted ties
    const auto out = lhc::step_r(v);
    std::size_t best = 0;
    for (std::size_t i = 1; i < 15; ++i) best = v[i] > v[best] ? i : best;
    double mean = 0.0;
    for (double x : v) mean += x / 15.0;
    bad_r += out.selected != best;
    bad_r += !(out.mask == lhc::rigid_catalog()[best].slice);
    for (std::size_t i = 0; i < 15; ++i) bad_r += out.grad_surrogate[i] != (std::abs(v[i] - mean) < 1.0 ? 1.0 : 0.1);
  }
  return {bad == 0 && bad_r == 0 && lhc::kSurrogateSlope == 0.1,
          fmt("step_f %zu grid points, step_r 1000 vectors, mismatches %zu/%zu", combos, bad, bad_r)};
}

Outcome structure() {
  std::mt19937_64 rng(104);
  const std::array<TopologyConstraints, 4> cs{{{1, 1}, {2, 2}, {8, 4}, {64, 8}}};
  std::size_t checked = 0;
  for (auto mode : {LhcMode::Free, LhcMode::Rigid}) {
    for (const auto& c : cs) {
      const ConvGeometry g{3, 1, 1, c.c_gi * 2, c.c_go * 3, 3, 3};
      const auto layer = random_layer(g, c, mode, rng, -1.0, 1.0);
      const auto m = lhc::build_masks(layer);
      for (double b : m.bits.data()) {
        if (b != 0.0 && b != 1.0) return {false, "non-binary mask entry"};
      }
      try {
        lhc::require_block_constant(m, c);
      } catch (const std::exception& ex) {
        return {false, ex.what()};
      }
      ++checked;
    }
  }
  return {true, fmt("%zu layers binary and block-constant", checked)};
}

Outcome flop_accounting() {
  std::mt19937_64 rng(105);
  std::uniform_int_distribution<std::size_t> pick(0, 3), side(1, 6);
  std::bernoulli_distribution bit(0.4);
  const std::array<TopologyConstraints, 4> cs{{{1, 1}, {2, 2}, {4, 2}, {2, 4}}};
  std::size_t mismatches = 0;
  for (std::size_t t = 0; t < 100; ++t) {
    const auto c = cs[pick(rng)];
    const ConvGeometry g{3, 1, 1, c.c_gi * (1 + pick(rng)), c.c_go * (1 + pick(rng)), side(rng),
                         side(rng)};
    MaskTensor m{Tensor4(g.kernel_dims())};
    for (std::size_t x = 0; x < g.c_i / c.c_gi; ++x)
      for (std::size_t y = 0; y < g.c_o / c.c_go; ++y)
        for (std::size_t u = 0; u < 3; ++u)
          for (std::size_t v = 0; v < 3; ++v) {
            const double b = bit(rng);
            for (std::size_t a = 0; a < c.c_gi; ++a)
              for (std::size_t o = 0; o < c.c_go; ++o) m.bits(u, v, x * c.c_gi + a, y * c.c_go + o) = b;
          }
    mismatches += lhc::flops_lhc(g, m, c) != oracle::brute_force_macs(m.bits, g.h_o(), g.w_o());
  }
  const ConvGeometry g{3, 1, 1, 8, 8, 4, 4};
  const MaskTensor ones{Tensor4(g.kernel_dims(), 1.0)}, zeros{Tensor4(g.kernel_dims())};
  const bool ends = lhc::flops_delta(g, ones, {4, 2}) == 0 && lhc::flops_delta(g, zeros, {4, 2}) == lhc::flops_std(g) &&
                    lhc::flops_lhc(g, zeros, {4, 2}) == 0;
  return {mismatches == 0 && ends, fmt("100 random masks, %zu mismatches; endpoints %s", mismatches, ends ? "ok" : "wrong")};
}

Outcome degeneration() {
  std::mt19937_64 rng(106);
  double worst = 0.0;
  bool flops_ok = true;
  for (std::size_t t = 0; t < 20; ++t) {
    const auto mode = t % 2 ? LhcMode::Rigid : LhcMode::Free;
    const std::size_t n = 1 + t % 4;
    const ConvGeometry g{3, 1 + t % 2, 1, n * (1 + t % 3), n * (2 - t % 2), 5, 5};
    LhcLayer base(g, {1, 1}, mode);
    base.initialize(rng);
    const auto l = lhc::degenerate_gwc(base, n);
    const Tensor4 x = oracle::random_tensor(g.input_dims(2), rng);
    worst = std::max(worst, oracle::max_abs_diff(lhc::lhc_forward(l, x).output,
                                                 oracle::grouped_conv(x, l.kernel(), n, g.stride, g.padding)));
    flops_ok = flops_ok && lhc::flops_lhc(g, lhc::build_masks(l), l.constraints()) * n == lhc::flops_std(g);
  }
  for (std::size_t t = 0; t < 20; ++t) {
    const auto mode = t % 2 ? LhcMode::Rigid : LhcMode::Free;
    const std::size_t ci = 1 + t % 4, mult = 1 + t % 3;
    const ConvGeometry g{3, 1, 1, ci, ci * mult, 4 + t % 2, 4};
    LhcLayer base(g, {1, 1}, mode);
    base.initialize(rng);
    const auto l = lhc::degenerate_dwc(base, mult);
    const Tensor4 x = oracle::random_tensor(g.input_dims(2), rng);
    worst = std::max(worst, oracle::max_abs_diff(lhc::lhc_forward(l, x).output,
                                                 oracle::depthwise_conv(x, l.kernel(), mult, 1, 1)));
  }
  for (std::size_t t = 0; t < 20; ++t) {
    const auto mode = t % 2 ? LhcMode::Rigid : LhcMode::Free;
    const std::size_t ci = 2 + t % 4, p = 1 + t % ci;
    const ConvGeometry g{3, 1, 1, ci, 3, 4, 5};
    LhcLayer base(g, {1, 1}, mode);
    base.initialize(rng);
    const auto l = lhc::degenerate_hetconv(base, p);
    const Tensor4 x = oracle::random_tensor(g.input_dims(2), rng);
    worst = std::max(worst, oracle::max_abs_diff(lhc::lhc_forward(l, x).output, oracle::hetconv(x, l.kernel(), p, 1, 1)));
  }
  return {worst <= 1e-12 && flops_ok,
          fmt("60 cases, max abs error %.3g; GWC flops x n == std: %s", worst, flops_ok ? "yes" : "no")};
}

Outcome simulator_correctness() {
  std::mt19937_64 rng(107);
  const std::array<TopologyConstraints, 3> cs{{{1, 1}, {2, 2}, {4, 2}}};
  double worst = 0.0;
  std::size_t clock_mismatch = 0;
  for (std::size_t t = 0; t < 30; ++t) {
    const auto c = cs[t % 3];
    const auto mode = t % 2 ? LhcMode::Rigid : LhcMode::Free;
    const ConvGeometry g{3, 1 + t % 2, 1, c.c_gi * (1 + t % 2), c.c_go * 2, 5, 5};
    const auto l = random_layer(g, c, mode, rng, -1.0, 0.6);
    const Tensor4 x = oracle::random_tensor(g.input_dims(1 + t % 3), rng);
    const Tensor4 w = masked_kernel(l);
    const auto r = sim::simulate_layer(x, sim::pack_weights(w, c), g, {c.c_gi, c.c_go, 1}, {sim::Precision::Float64});
    worst = std::max(worst, oracle::max_abs_diff(r.output, lhc::lhc_forward(l, x).output));
    clock_mismatch += r.report.clocks != oracle::retained_rows(w, c.c_gi, c.c_go) * g.h_o() * g.w_o() * x.dim(0);
  }
  const ConvGeometry g{3, 1, 1, 64, 8, 4, 4};
  const Tensor4 w = oracle::random_tensor(g.kernel_dims(), rng);
  const Tensor4 x = oracle::random_tensor(g.input_dims(1), rng);
  Tensor4 dot = w;
  const auto centre = lhc::dot_slice(3);
  for (std::size_t u = 0; u < 3; ++u)
    for (std::size_t v = 0; v < 3; ++v)
      for (std::size_t ci = 0; ci < 64; ++ci)
        for (std::size_t co = 0; co < 8; ++co) dot(u, v, ci, co) *= centre.bits[u * 3 + v];
  const auto dense = sim::simulate_layer(x, sim::pack_weights(w, {64, 8}), g, {64, 8, 1});
  const auto sparse = sim::simulate_layer(x, sim::pack_weights(dot, {64, 8}), g, {64, 8, 1});
  const bool base = dense.report.clocks == 144 && sparse.report.clocks == 16;
  return {worst <= 1e-12 && clock_mismatch == 0 && base,
          fmt("30 layers, max abs error %.3g, clock mismatches %zu; baseline %llu clocks, dot %llu clocks", worst,
              clock_mismatch, static_cast<unsigned long long>(dense.report.clocks),
              static_cast<unsigned long long>(sparse.report.clocks))};
}

Outcome overhead_constants() {
  const ConvGeometry g{3, 1, 1, 64, 64, 8, 8};
  const auto o = lhc::training_overhead(g, {64, 8});
  const std::string pct = fmt("%.4f%%", o.storage_ratio * 100.0);
  bool compute_ok = true;
  for (std::size_t side : {2u, 4u, 7u, 16u}) {
    const ConvGeometry h{3, 1, 1, 16, 16, side, side};
    compute_ok = compute_ok && lhc::training_overhead(h, {8, 4}).compute_ratio ==
                                   1.0 / static_cast<double>(h.h_o() * h.w_o());
  }
  return {pct == "0.1953%" && compute_ok, "storage overhead " + pct + ", compute overhead 1/(h_o*w_o) " +
                                              (compute_ok ? "reproduced" : "wrong")};
}

Outcome spectrum_oracle() {
  std::mt19937_64 rng(111);
  std::uniform_int_distribution<std::size_t> c(1, 3), s(3, 5), p(0, 1);
  std::bernoulli_distribution keep(0.5);
  double worst = 0.0;
  for (std::size_t t = 0; t < 10; ++t) {
    const std::size_t ci = c(rng), co = c(rng), h = s(rng), w = s(rng), pad = p(rng);
    Tensor4 k = oracle::random_tensor({3, 3, ci, co}, rng);
    for (double& v : k.data()) v *= keep(rng);
    const auto got = lhc::analysis::dbt_spectrum(k, h, w, pad).singular_values;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(oracle::impulse_probe_matrix(k, h, w, pad));
    const Eigen::VectorXd want = svd.singularValues();
    if (got.size() != static_cast<std::size_t>(want.size())) return {false, "singular value count mismatch"};
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[static_cast<Eigen::Index>(i)]));
  }
  return {worst <= 1e-8, fmt("10 layers, max singular value error %.3g", worst)};
}

// ---------------------------------------------------------------------------
// Desk-scale reference training; mirrors configs/reference.cfg.

lhc::cmd::RunOptions reference_options(bool lhc_model) {
  lhc::cmd::RunOptions o;
  o.model.lhc = lhc_model;
  o.model.mode = LhcMode::Free;
  o.model.constraints = {8, 4};
  o.model.lhc_first_layer = true;
  o.train.seed = 7;
  o.train.epochs = 40;
  o.train.lr = 0.02;
  o.train.effect_lr_scale = 5.0;
  o.train.lr_decay_epochs = {30};
  o.train.alpha_t = 1.0;
  o.train.n_warm = 10;
  if (lhc_model) o.train.d_t = 0.25;
  return o;
}

struct TrainedRun {
  lhc::Network net;
  std::vector<lhc::EpochMetrics> metrics;
  std::vector<std::vector<MaskTensor>> masks;  // per epoch, per LHC layer
  lhc::data::Dataset test;
};

TrainedRun train_reference(bool lhc_model) {
  auto o = reference_options(lhc_model);
  auto [train, test] = lhc::cmd::make_datasets(o.data, o.model.classes);
  lhc::cmd::fit_model_to_data(o.model, train);
  std::mt19937_64 rng(o.train.seed);
  TrainedRun run;
  run.net = lhc::Network::build(o.model, rng);
  lhc::Trainer trainer(o.train, run.net);
  run.metrics = trainer
                    .run(train, test, nullptr,
                         [&](const lhc::EpochMetrics&, const lhc::Network& n) { run.masks.push_back(n.lhc_masks()); })
                    .metrics;
  run.test = std::move(test);
  return run;
}

Outcome training_trend(const TrainedRun& lhc_run, const TrainedRun& dense_run) {
  const double density = lhc_run.metrics.back().density;
  const double acc = lhc_run.metrics.back().accuracy, dense_acc = dense_run.metrics.back().accuracy;
  const bool density_ok = std::abs(density - 0.25) <= 0.05;
  const bool acc_ok = dense_acc - acc <= 0.02;
  if (lhc_run.masks.size() < 35) return {false, "fewer than 35 epochs recorded"};
  const auto& m = lhc_run.masks;
  bool rising = true, below_one = true;
  std::string corr;
  for (std::size_t l = 0; l < m[0].size(); ++l) {
    const double c5 = lhc::analysis::mask_correlation(m[3][l], m[4][l]);
    const double c35 = lhc::analysis::mask_correlation(m[33][l], m[34][l]);
    rising = rising && c35 > c5;
    for (std::size_t e = 1; e < m.size(); ++e) below_one = below_one && lhc::analysis::mask_correlation(m[e - 1][l], m[e][l]) < 1.0;
    corr += fmt(" L%zu %.3f->%.3f", l + 1, c5, c35);
  }
  return {density_ok && acc_ok && rising && below_one,
          fmt("density %.4f, accuracy %.3f vs dense %.3f;", density, acc, dense_acc) + " corr ep5->ep35" + corr +
              (below_one ? "" : " (reached 1.0)")};
}

Outcome simulator_ratio(const TrainedRun& run) {
  const auto layers = lhc::cmd::sim_layers(run.net, 1);
  const Tensor4 x = run.test.slice(0, 2).images;
  const auto res = sim::simulate_model(layers, x, {sim::Precision::Float64});
  bool ok = true;
  std::string detail;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& u = run.net.units()[l];
    const double density = lhc::build_masks(u.conv).density();
    const auto& c = u.conv.constraints();
    const Tensor4 w = masked_kernel(u.conv);
    // Rows with any nonzero weight, recounted on the array's own row size.
    const double nonempty = static_cast<double>(oracle::retained_rows(w, layers[l].config.c_gi, layers[l].config.c_go)) /
                            static_cast<double>(res.report.layers[l].dense_rows);
    const double slack = std::max(0.0, nonempty - density);
    const double ratio = res.report.layers[l].clock_ratio();
    ok = ok && ratio >= density && ratio <= density + slack && c.c_gi == layers[l].config.c_gi;
    detail += fmt(" L%zu %.4f in [%.4f, %.4f]", l + 1, ratio, density, density + slack);
  }
  return {ok, fmt("total clock ratio %.4f, memory ratio %.4f;", res.report.clock_ratio(), res.report.memory_ratio()) + detail};
}

Outcome round_trip(const TrainedRun& run) {
  lhc::Network net = run.net;
  net.round_to_storage();
  std::stringstream ss;
  lhc::save_model(ss, net);
  const lhc::Network back = lhc::load_model(ss);
  const Tensor4 x = run.test.slice(0, 32).images;
  const auto a = lhc::network_forward(net, x), b = lhc::network_forward(back, x);
  const bool logits = a.logits == b.logits;
  bool hist = true;
  for (std::size_t l = 0; l < net.units().size(); ++l) {
    hist = hist && lhc::analysis::shape_distribution(net.units()[l].conv).counts ==
                       lhc::analysis::shape_distribution(back.units()[l].conv).counts;
  }
  return {logits && hist && net == back, fmt("logits bit-exact: %s, shape histograms equal: %s", logits ? "yes" : "no",
                                           hist ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));
  auto wanted = [&](int n) { return only.empty() || only.count(n) != 0; };

  int failures = 0;
  auto report = [&](int n, const char* name, const std::function<Outcome()>& fn) {
    if (!wanted(n)) return;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    failures += !o.pass;
    std::cout << "criterion " << n << " " << (o.pass ? "PASS" : "FAIL") << " [" << name << "] " << o.detail << std::endl;
  };

  report(1, "conv oracle", conv_oracle);
  report(2, "gradient checks", gradient_checks);
  report(3, "step semantics", step_semantics);
  report(4, "mask structure", structure);
  report(5, "flop accounting", flop_accounting);
  report(6, "degeneration", degeneration);
  report(7, "simulator correctness", simulator_correctness);
  report(8, "overhead constants", overhead_constants);

  std::optional<TrainedRun> lhc_run, dense_run;
  auto trained = [&]() -> const TrainedRun& {
    if (!lhc_run) lhc_run = train_reference(true);
    return *lhc_run;
  };
  report(9, "training trend", [&] {
    const auto t0 = std::chrono::steady_clock::now();
    dense_run = train_reference(false);
    auto o = training_trend(trained(), *dense_run);
    o.detail += fmt("; %.0f s", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return o;
  });
  report(10, "simulator ratio", [&] { return simulator_ratio(trained()); });
  report(11, "spectrum oracle", spectrum_oracle);
  report(12, "checkpoint round trip", [&] { return round_trip(trained()); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
