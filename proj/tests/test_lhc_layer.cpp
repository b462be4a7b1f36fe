// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <array>
#include <random>

#include "lhc/lhc_layer.hpp"
#include "lhc/sparsity.hpp"
#include "oracles.hpp"

namespace {

using lhc::ConvGeometry;
using lhc::LhcLayer;
using lhc::LhcMode;
using lhc::Tensor4;
using lhc::TopologyConstraints;

LhcLayer random_layer(ConvGeometry g, TopologyConstraints c, LhcMode mode, std::mt19937_64& rng, double spread = 1.5) {
  LhcLayer layer(g, c, mode);
  layer.initialize(rng);
  std::uniform_real_distribution<double> u(-spread, spread);
  for (double& e : layer.mutable_effect().values()) e = u(rng);
  return layer;
}

// Mask bit of element (u, v, ci, co) straight from the effect factors.
double oracle_mask_bit(const LhcLayer& layer, std::size_t u, std::size_t v, std::size_t ci, std::size_t co) {
  const auto& c = layer.constraints();
  const auto e = layer.effect().block(ci / c.c_gi, co / c.c_go);
  const std::size_t k = layer.geometry().k;
  if (layer.mode() == LhcMode::Free) return e[u * k + v] > 0.0 ? 1.0 : 0.0;
  std::size_t best = 0;
  for (std::size_t i = 1; i < e.size(); ++i) {
    if (e[i] > e[best]) best = i;
  }
  return lhc::rigid_catalog()[best].slice.bits[u * k + v];
}

TEST(StepF, ExhaustiveFiveLevelGrid) {
  const std::array<double, 5> levels{-2.0, -0.5, 0.0, 0.5, 2.0};
  std::array<double, 9> e{};
  std::size_t combos = 1;
  for (int i = 0; i < 9; ++i) combos *= levels.size();
  for (std::size_t n = 0; n < combos; ++n) {
    std::size_t r = n;
    for (auto& v : e) {
      v = levels[r % 5];
      r /= 5;
    }
    const auto out = lhc::step_f(e);
    for (std::size_t j = 0; j < 9; ++j) {
      ASSERT_EQ(out.mask.bits[j], e[j] > 0.0 ? 1 : 0);
      ASSERT_EQ(out.grad_surrogate[j], std::abs(e[j]) < 1.0 ? 1.0 : 0.1);
    }
  }
}

TEST(StepF, NamedCases) {
  const std::vector<double> half(9, 0.5), neg(9, -2.0);
  const auto a = lhc::step_f(half);
  EXPECT_EQ(a.mask.l0(), 9u);
  for (double g : a.grad_surrogate) EXPECT_EQ(g, 1.0);
  const auto b = lhc::step_f(neg);
  EXPECT_EQ(b.mask.l0(), 0u);
  for (double g : b.grad_surrogate) EXPECT_EQ(g, lhc::kSurrogateSlope);
  EXPECT_EQ(lhc::kSurrogateSlope, 0.1);
  const std::vector<double> zero(9, 0.0);
  EXPECT_EQ(lhc::step_f(zero).mask.l0(), 0u);  // strict inequality
}

TEST(StepF, Errors) {
  EXPECT_THROW(lhc::step_f(std::vector<double>(8, 0.0)), lhc::ShapeError);
  std::vector<double> e(9, 0.0);
  e[3] = std::nan("");
  EXPECT_THROW(lhc::step_f(e), lhc::NumericError);
}

TEST(StepR, RandomVectorsAgainstDirectEvaluation) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  for (std::size_t t = 0; t < 1000; ++t) {
    std::vector<double> e(15);
    for (double& v : e) v = n(rng) * (t % 3 + 0.5);
    const auto out = lhc::step_r(e);
    std::size_t best = 0;
    for (std::size_t i = 1; i < 15; ++i) best = e[i] > e[best] ? i : best;
    double mean = 0.0;
    for (double v : e) mean += v / 15.0;
    ASSERT_EQ(out.selected, best);
    ASSERT_EQ(out.mask, lhc::rigid_catalog()[best].slice);
    for (std::size_t i = 0; i < 15; ++i) ASSERT_EQ(out.grad_surrogate[i], std::abs(e[i] - mean) < 1.0 ? 1.0 : 0.1);
  }
}

TEST(StepR, FullShapeDominates) {
  std::vector<double> e(15, 0.0);
  e[14] = 10.0;
  const auto out = lhc::step_r(e);
  EXPECT_EQ(out.selected, lhc::kRigidFull);
  EXPECT_EQ(out.mask.l0(), 9u);
  for (std::size_t i = 0; i < 14; ++i) EXPECT_EQ(out.grad_surrogate[i], 1.0);
  EXPECT_EQ(out.grad_surrogate[14], 0.1);
}

TEST(StepR, TiesGoToTheLowestIndex) {
  std::vector<double> e(15, -1.0);
  e[4] = 2.0;
  e[9] = 2.0;
  e[13] = 2.0;
  EXPECT_EQ(lhc::step_r(e).selected, 4u);
  EXPECT_EQ(lhc::step_r(std::vector<double>(15, 0.0)).selected, 0u);
}

TEST(StepR, Errors) { EXPECT_THROW(lhc::step_r(std::vector<double>(9, 0.0)), lhc::ShapeError); }

TEST(Constraints, ValidateAndFit) {
  EXPECT_THROW(TopologyConstraints({3, 1}).validate(4, 4), lhc::ConfigError);
  EXPECT_THROW(TopologyConstraints({0, 1}).validate(4, 4), lhc::ConfigError);
  EXPECT_NO_THROW(TopologyConstraints({2, 4}).validate(4, 8));
  EXPECT_EQ(TopologyConstraints({8, 8}).parallelism(), 64u);
  EXPECT_EQ(TopologyConstraints::fit(3, 16, {8, 4}), (TopologyConstraints{3, 4}));
  EXPECT_EQ(TopologyConstraints::fit(16, 6, {8, 4}), (TopologyConstraints{8, 2}));
}

TEST(Layer, RigidNeedsThreeByThree) {
  EXPECT_THROW(LhcLayer(ConvGeometry{5, 1, 2, 2, 2, 6, 6}, {1, 1}, LhcMode::Rigid), lhc::ConfigError);
  EXPECT_NO_THROW(LhcLayer(ConvGeometry{5, 1, 2, 2, 2, 6, 6}, {1, 1}, LhcMode::Free));
}

TEST(Layer, InitializationBounds) {
  std::mt19937_64 rng(5);
  LhcLayer layer(ConvGeometry{3, 1, 1, 16, 32, 4, 4}, {8, 4}, LhcMode::Free);
  layer.initialize(rng);
  const double a = std::sqrt(6.0 / (9.0 * 16 + 9.0 * 32));
  for (double e : layer.effect().values()) {
    EXPECT_NE(e, 0.0);
    EXPECT_LT(std::abs(e), a);
  }
  EXPECT_EQ(layer.effect().size(), 2u * 8u * 9u);
}

TEST(Masks, BinaryAndBlockConstantForEveryConstraint) {
  std::mt19937_64 rng(22);
  const std::array<TopologyConstraints, 4> cs{{{1, 1}, {2, 2}, {8, 4}, {64, 8}}};
  for (auto mode : {LhcMode::Free, LhcMode::Rigid}) {
    for (const auto& c : cs) {
      ConvGeometry g{3, 1, 1, c.c_gi * 2, c.c_go * 2, 3, 3};
      const auto layer = random_layer(g, c, mode, rng);
      const auto m = lhc::build_masks(layer);
      EXPECT_NO_THROW(lhc::require_block_constant(m, c));
      for (std::size_t u = 0; u < 3; ++u)
        for (std::size_t v = 0; v < 3; ++v)
          for (std::size_t ci = 0; ci < g.c_i; ++ci)
            for (std::size_t co = 0; co < g.c_o; ++co)
              ASSERT_EQ(m.bits(u, v, ci, co), oracle_mask_bit(layer, u, v, ci, co));
    }
  }
}

TEST(Masks, DensityEndpoints) {
  ConvGeometry g{3, 1, 1, 4, 4, 3, 3};
  LhcLayer f(g, {2, 2}, LhcMode::Free);
  for (double& e : f.mutable_effect().values()) e = 1.0;
  EXPECT_EQ(lhc::build_masks(f).density(), 1.0);

  LhcLayer r(g, {2, 2}, LhcMode::Rigid);
  for (std::size_t b = 0; b < r.effect().block_count(); ++b) r.mutable_effect().block(b)[lhc::kRigidEmpty] = 1.0;
  EXPECT_EQ(lhc::build_masks(r).density(), 0.0);

  LhcLayer one(ConvGeometry{3, 1, 1, 1, 1, 3, 3}, {1, 1}, LhcMode::Rigid);
  one.mutable_effect().block(0)[lhc::kRigidDot] = 1.0;
  EXPECT_DOUBLE_EQ(lhc::build_masks(one).density(), 1.0 / 9.0);
}

TEST(Masks, DisabledLayerUsesAllOnes) {
  std::mt19937_64 rng(6);
  auto layer = random_layer(ConvGeometry{3, 1, 1, 4, 4, 3, 3}, {2, 2}, LhcMode::Free, rng);
  layer.set_mask_enabled(false);
  EXPECT_EQ(lhc::build_masks(layer).density(), 1.0);
  EXPECT_LT(lhc::topology_masks(layer).density(), 1.0);
}

TEST(Forward, EqualsConvOfIndependentlyMaskedKernel) {
  std::mt19937_64 rng(23);
  for (std::size_t t = 0; t < 20; ++t) {
    const auto mode = t % 2 ? LhcMode::Rigid : LhcMode::Free;
    ConvGeometry g{3, 1 + t % 2, 1, 4, 6, 5, 5};
    const auto layer = random_layer(g, {2, 3}, mode, rng);
    const Tensor4 x = oracle::random_tensor(g.input_dims(2), rng);
    Tensor4 masked = layer.kernel();
    for (std::size_t u = 0; u < 3; ++u)
      for (std::size_t v = 0; v < 3; ++v)
        for (std::size_t ci = 0; ci < g.c_i; ++ci)
          for (std::size_t co = 0; co < g.c_o; ++co) masked(u, v, ci, co) *= oracle_mask_bit(layer, u, v, ci, co);
    const auto fw = lhc::lhc_forward(layer, x);
    EXPECT_LE(oracle::max_abs_diff(fw.output, oracle::naive_conv(x, masked, g.stride, g.padding)), 1e-12);
  }
}

TEST(Backward, InputAndKernelGradsMatchFiniteDifferences) {
  std::mt19937_64 rng(24);
  for (std::size_t t = 0; t < 50; ++t) {
    const auto mode = t % 2 ? LhcMode::Rigid : LhcMode::Free;
    ConvGeometry g{3, 1 + t % 2, 1, 2 + 2 * (t % 2), 4, 3 + t % 3, 5 - t % 2};
    try {
      g.validate();
    } catch (const lhc::ShapeError&) {
      g.stride = 1;
    }
    auto layer = random_layer(g, {2, 2}, mode, rng);
    Tensor4 x = oracle::random_tensor(g.input_dims(1 + t % 2), rng);
    const Tensor4 up = oracle::random_tensor(g.output_dims(x.dim(0)), rng);
    const auto fw = lhc::lhc_forward(layer, x);
    const auto gr = lhc::lhc_backward(layer, fw.cache, up);
    auto objective_x = [&] { return lhc::dot(up, lhc::lhc_forward(layer, x).output); };
    EXPECT_LT(oracle::relative_error(gr.grad_input, oracle::finite_difference(x, objective_x)), 1e-4);
    // Kernel perturbations leave the effect factors, hence the masks, unchanged.
    Tensor4 w = layer.kernel();
    auto objective_w = [&] {
      layer.mutable_kernel() = w;
      return lhc::dot(up, lhc::lhc_forward(layer, x).output);
    };
    EXPECT_LT(oracle::relative_error(gr.grad_kernel, oracle::finite_difference(w, objective_w)), 1e-4);
  }
}

TEST(Backward, EffectGradMatchesIndependentSurrogateChain) {
  std::mt19937_64 rng(25);
  for (std::size_t t = 0; t < 40; ++t) {
    const auto mode = t % 2 ? LhcMode::Rigid : LhcMode::Free;
    ConvGeometry g{3, 1, 1, 4, 6, 4, 4};
    const auto layer = random_layer(g, {2, 3}, mode, rng);
    const Tensor4 x = oracle::random_tensor(g.input_dims(2), rng);
    const Tensor4 up = oracle::random_tensor(g.output_dims(2), rng);
    const auto fw = lhc::lhc_forward(layer, x);
    const auto gr = lhc::lhc_backward(layer, fw.cache, up);
    const auto masked = lhc::hadamard(layer.kernel(), lhc::topology_masks(layer).bits);
    const auto dl_dmasked = oracle::naive_conv_kernel_grad(x, up, masked, 1, 1);
    const auto want = oracle::surrogate_chain(layer, dl_dmasked);
    ASSERT_EQ(gr.grad_effect.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(gr.grad_effect[i], want[i], 1e-12) << i;
  }
}

TEST(Backward, DisabledMasksGiveZeroEffectGrad) {
  std::mt19937_64 rng(7);
  auto layer = random_layer(ConvGeometry{3, 1, 1, 2, 2, 3, 3}, {1, 1}, LhcMode::Free, rng);
  layer.set_mask_enabled(false);
  const Tensor4 x = oracle::random_tensor({1, 3, 3, 2}, rng);
  const auto fw = lhc::lhc_forward(layer, x);
  const auto gr = lhc::lhc_backward(layer, fw.cache, Tensor4({1, 3, 3, 2}, 1.0));
  for (double v : gr.grad_effect) EXPECT_EQ(v, 0.0);
}

TEST(Backward, StaleCacheRejected) {
  std::mt19937_64 rng(8);
  auto layer = random_layer(ConvGeometry{3, 1, 1, 2, 2, 3, 3}, {1, 1}, LhcMode::Free, rng);
  const auto fw = lhc::lhc_forward(layer, oracle::random_tensor({1, 3, 3, 2}, rng));
  layer.mutable_effect().values()[0] = 5.0;
  EXPECT_THROW(lhc::lhc_backward(layer, fw.cache, Tensor4({1, 3, 3, 2})), std::logic_error);
}

}  // namespace
