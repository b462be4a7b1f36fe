// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

// Subcommand implementations behind the lhc command-line tool.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lhc/analysis.hpp"
#include "lhc/dataset.hpp"
#include "lhc/errors.hpp"
#include "lhc/hw_simulator.hpp"
#include "lhc/model.hpp"
#include "lhc/report.hpp"
#include "lhc/shape_catalog.hpp"
#include "lhc/snapshot.hpp"
#include "lhc/sparsity.hpp"
#include "lhc/train.hpp"

namespace lhc::cmd {

namespace fs = std::filesystem;
using nlohmann::json;

struct DataOptions {
  std::string kind = "synth";  // synth | cifar10
  std::string train_path;      // cifar10: file or directory
  std::string test_path;
  std::size_t train_size = 1500;
  std::size_t test_size = 500;
  std::uint64_t data_seed = 1;
  double synth_noise = 0.35;
  double synth_jitter = 0.5;
};

struct RunOptions {
  ModelSpec model;
  TrainConfig train;
  DataOptions data;
};

inline std::pair<data::Dataset, data::Dataset> make_datasets(const DataOptions& d, std::size_t classes = 10) {
  if (d.kind == "synth") {
    data::SynthOptions so;
    so.noise = d.synth_noise;
    so.jitter = d.synth_jitter;
    return {data::synth_dataset(d.data_seed, d.train_size, classes, so),
            data::synth_dataset(d.data_seed + 1000003, d.test_size, classes, so)};
  }
  if (d.kind == "cifar10") {
    if (d.train_path.empty() || d.test_path.empty()) throw ConfigError("cifar10 needs train_path and test_path");
    return {data::load_cifar10(d.train_path, d.train_size), data::load_cifar10(d.test_path, d.test_size)};
  }
  throw ConfigError("unknown dataset kind '" + d.kind + "' (expected synth or cifar10)");
}

/// Test split only; used by eval and simulate.
inline data::Dataset make_test_set(const DataOptions& d, std::size_t classes = 10) {
  if (d.kind == "synth") {
    data::SynthOptions so;
    so.noise = d.synth_noise;
    so.jitter = d.synth_jitter;
    return data::synth_dataset(d.data_seed + 1000003, d.test_size, classes, so);
  }
  if (d.kind == "cifar10") {
    if (d.test_path.empty()) throw ConfigError("cifar10 needs test_path");
    return data::load_cifar10(d.test_path, d.test_size);
  }
  throw ConfigError("unknown dataset kind '" + d.kind + "' (expected synth or cifar10)");
}

inline void fit_model_to_data(ModelSpec& spec, const data::Dataset& ds) {
  const auto& d = ds.images.dims();
  spec.in_h = d[1];
  spec.in_w = d[2];
  spec.in_c = d[3];
  spec.classes = ds.classes;
}

struct TrainOutput {
  TrainResult result;
  fs::path checkpoint;
  fs::path metrics;
};

/// Trains and writes out_dir/model.lhcm and out_dir/metrics.csv (plus
/// out_dir/snapshots when snapshots are enabled).
inline TrainOutput cmd_train(RunOptions opt, const fs::path& out_dir, std::ostream& log) {
  auto [train, test] = make_datasets(opt.data, opt.model.classes);
  train.validate();
  test.validate();
  fit_model_to_data(opt.model, train);
  fs::create_directories(out_dir);
  std::mt19937_64 rng(opt.train.seed);
  Network net = Network::build(opt.model, rng);
  TrainOutput out;
  out.checkpoint = out_dir / "model.lhcm";
  out.metrics = out_dir / "metrics.csv";
  std::ofstream csv(out.metrics);
  if (!csv) throw DataError("cannot write " + out.metrics.string());
  Trainer trainer(opt.train, net);
  out.result = trainer.run(train, test, &csv, [&](const EpochMetrics& m, const Network&) {
    log << "epoch " << m.epoch << " task_loss " << m.task_loss << " density " << m.density << " accuracy "
        << m.accuracy << '\n';
  });
  save_model(out.checkpoint, net);
  return out;
}

inline json cmd_eval(const fs::path& checkpoint, const DataOptions& d) {
  Network net = load_model(checkpoint);
  const auto test = make_test_set(d, net.classes());
  test.validate();
  if (test.images.dims() != net.input_dims(test.size())) {
    throw DataError("checkpoint expects inputs " + format_dims(net.input_dims(test.size())) + " but the dataset has " +
                    format_dims(test.images.dims()));
  }
  return {{"checkpoint", checkpoint.string()},
          {"samples", test.size()},
          {"accuracy", evaluate_accuracy(net, test)},
          {"density", net.density()}};
}

inline std::string layer_name(std::size_t l) { return "conv" + std::to_string(l + 1); }

inline FlopsReport flops_report(const Network& net) {
  FlopsReport r;
  std::vector<MaskTensor> masks;
  for (std::size_t l = 0; l < net.units().size(); ++l) {
    const auto& u = net.units()[l];
    const auto& g = u.conv.geometry();
    FlopsRow row;
    row.layer = layer_name(l);
    row.c_std = flops_std(g);
    if (u.is_lhc) {
      masks.push_back(topology_masks(u.conv));
      row.c_lhc = flops_lhc(g, masks.back(), u.conv.constraints());
      row.density = masks.back().density();
    } else {
      row.c_lhc = row.c_std;
      row.density = 1.0;
    }
    row.delta = row.c_std - row.c_lhc;
    r.add(row);
  }
  r.global_density = masks.empty() ? 1.0 : global_density(masks);
  return r;
}

inline FlopsReport cmd_flops(const fs::path& checkpoint) { return flops_report(load_model(checkpoint)); }

struct AnalyzeOptions {
  std::string which = "shapes";  // shapes | correlation | spectrum
  fs::path snapshots;
  std::string pairing = "adjacent";
  std::size_t reference = 0;  // snapshot position for reference pairing
  std::size_t spectrum_h = 0, spectrum_w = 0;  // 0 = the layer's own input size
};

inline json cmd_analyze(const fs::path& checkpoint, const AnalyzeOptions& a, const fs::path& out_dir) {
  Network net = load_model(checkpoint);
  fs::create_directories(out_dir);
  json j = json::array();
  if (a.which == "shapes") {
    std::vector<analysis::ShapeHistogram> hs;
    for (std::size_t l = 0; l < net.units().size(); ++l) {
      if (!net.units()[l].is_lhc) continue;
      hs.push_back(analysis::shape_distribution(net.units()[l].conv, layer_name(l)));
      j.push_back(report::to_json(hs.back()));
    }
    std::ofstream csv(out_dir / "shapes.csv");
    report::write_csv(csv, hs);
  } else if (a.which == "correlation") {
    if (a.snapshots.empty()) throw DataError("correlation analysis needs a snapshot directory");
    const auto snaps = io::load_snapshots(a.snapshots);
    std::vector<std::size_t> lhc_layers;
    for (std::size_t l = 0; l < net.units().size(); ++l) {
      if (net.units()[l].is_lhc) lhc_layers.push_back(l);
    }
    std::vector<std::size_t> epochs;
    for (const auto& s : snaps) {
      if (s.layers.size() != lhc_layers.size()) {
        throw DataError("snapshot of epoch " + std::to_string(s.epoch) + " has " + std::to_string(s.layers.size()) +
                        " layers, checkpoint has " + std::to_string(lhc_layers.size()));
      }
      epochs.push_back(s.epoch);
    }
    const auto pairing = a.pairing == "reference" ? analysis::Pairing::Reference : analysis::Pairing::Adjacent;
    if (a.pairing != "reference" && a.pairing != "adjacent") throw ConfigError("pairing must be adjacent or reference");
    for (std::size_t i = 0; i < lhc_layers.size(); ++i) {
      std::vector<MaskTensor> series;
      for (const auto& s : snaps) series.push_back(s.layers[i]);
      j.push_back(report::to_json(
          analysis::correlation_series(series, epochs, pairing, a.reference, layer_name(lhc_layers[i]))));
    }
  } else if (a.which == "spectrum") {
    std::vector<analysis::SpectrumReport> rs;
    for (std::size_t l = 0; l < net.units().size(); ++l) {
      const auto& u = net.units()[l];
      const auto& g = u.conv.geometry();
      const Tensor4 masked = hadamard(u.conv.kernel(), build_masks(u.conv).bits);
      rs.push_back(analysis::dbt_spectrum(masked, a.spectrum_h ? a.spectrum_h : g.h_i, a.spectrum_w ? a.spectrum_w : g.w_i,
                                          g.padding, layer_name(l)));
      j.push_back(report::to_json(rs.back()));
    }
    std::ofstream csv(out_dir / "spectrum.csv");
    report::write_csv(csv, rs);
  } else {
    throw ConfigError("unknown analysis '" + a.which + "' (expected shapes, correlation or spectrum)");
  }
  std::ofstream(out_dir / (a.which + ".json")) << j.dump(2) << '\n';
  return j;
}

/// Simulator layers for a checkpoint: every conv, masked as at inference,
/// on a MAC array shaped by the layer's own constraints.
inline std::vector<sim::SimLayer> sim_layers(const Network& net, std::size_t batch) {
  std::vector<sim::SimLayer> out;
  for (std::size_t l = 0; l < net.units().size(); ++l) {
    const auto& u = net.units()[l];
    const Tensor4 masked = hadamard(u.conv.kernel(), build_masks(u.conv).bits);
    sim::SimLayer s;
    s.name = layer_name(l);
    s.geom = u.conv.geometry();
    s.config = {u.conv.constraints().c_gi, u.conv.constraints().c_go, batch};
    if (u.is_lhc) require_block_constant(build_masks(u.conv), u.conv.constraints());
    s.packed = sim::pack_weights(masked, u.conv.constraints());
    s.bias = u.bias;
    s.relu = true;
    out.push_back(std::move(s));
  }
  return out;
}

struct SimulateOptions {
  std::size_t images = 1;
  std::size_t batch = 1;
  bool reference = false;  // 64-bit accumulation
  fs::path trace;
};

inline json cmd_simulate(const fs::path& checkpoint, const DataOptions& d, const SimulateOptions& so, const fs::path& out_dir) {
  Network net = load_model(checkpoint);
  DataOptions dd = d;
  dd.test_size = so.images;
  const auto test = make_test_set(dd, net.classes());
  if (test.images.dims() != net.input_dims(test.size())) {
    throw DataError("checkpoint expects inputs " + format_dims(net.input_dims(test.size())));
  }
  const auto layers = sim_layers(net, so.batch);
  sim::SimOptions opt;
  opt.precision = so.reference ? sim::Precision::Float64 : sim::Precision::Float32;
  std::ofstream trace;
  if (!so.trace.empty()) {
    trace.open(so.trace);
    if (!trace) throw DataError("cannot write trace " + so.trace.string());
    opt.trace = &trace;
  }
  const auto res = sim::simulate_model(layers, test.images, opt);
  const auto fw = network_forward(net, test.images);
  double max_err = 0.0;
  const auto a = res.output.data(), b = fw.activations.back().data();
  for (std::size_t i = 0; i < a.size(); ++i) max_err = std::max(max_err, std::abs(a[i] - b[i]));

  fs::create_directories(out_dir);
  json j = report::to_json(res.report);
  j["input"] = {test.size(), net.input_dims(0)[1], net.input_dims(0)[2], net.input_dims(0)[3]};
  j["max_abs_error_vs_forward"] = max_err;
  j["density"] = net.density();
  std::ofstream(out_dir / "sim.json") << j.dump(2) << '\n';
  std::ofstream csv(out_dir / "sim.csv");
  report::write_csv(csv, res.report);
  return j;
}

inline json catalog_json(bool include_free) {
  json rigid = json::array();
  const auto& cat = rigid_catalog();
  for (std::size_t i = 0; i < cat.size(); ++i) {
    rigid.push_back({{"index", i}, {"label", cat[i].label()}, {"bits", cat[i].slice.bit_string()},
                     {"free_index", free_encode(cat[i].slice)}, {"l0", cat[i].slice.l0()}});
  }
  json j = {{"rigid", rigid}};
  if (include_free) {
    json free = json::array();
    for (std::size_t i = 0; i < kFreeShapeCount; ++i) {
      const auto s = free_decode(i);
      free.push_back({{"index", i}, {"bits", s.bit_string()}, {"l0", s.l0()}});
    }
    j["free"] = free;
  }
  return j;
}

}  // namespace lhc::cmd
