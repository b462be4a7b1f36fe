// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

// lhc: train, evaluate, analyze and simulate LHC models.
//
// Exit codes: 0 ok, 1 usage or configuration error, 2 data error,
// 3 numeric divergence.

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lhc/commands.hpp"

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kDiverged = 3 };

void write_json(const nlohmann::json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream os(out);
  if (!os) throw lhc::DataError("cannot write " + out);
  os << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learnable heterogeneous convolution: training, analysis and datapath simulation"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key=value config file; command-line flags override it");

  lhc::cmd::RunOptions run;
  std::string mode = "F";
  std::string density_target = "invalid";
  bool dense = false;

  auto* g_model = "Model";
  app.add_option("--widths", run.model.widths, "Output channels per conv layer")->group(g_model)->delimiter(',');
  app.add_option("--strides", run.model.strides, "Stride per conv layer")->group(g_model)->delimiter(',');
  app.add_option("--kernel", run.model.k, "Kernel size k")->group(g_model)->check(CLI::PositiveNumber);
  app.add_option("--padding", run.model.padding, "Zero padding")->group(g_model);
  app.add_option("--mode", mode, "LHC mode: R (rigid, 15 shapes) or F (free, 512 shapes)")->group(g_model);
  app.add_option("--c-gi", run.model.constraints.c_gi, "Topology constraint c_gi (input block)")->group(g_model);
  app.add_option("--c-go", run.model.constraints.c_go, "Topology constraint c_go (output block)")->group(g_model);
  app.add_flag("--dense", dense, "Build the standard-convolution baseline")->group(g_model);
  app.add_option("--lhc-first-layer", run.model.lhc_first_layer, "Make the first conv layer an LHC layer too")
      ->group(g_model);

  auto* g_train = "Training";
  app.add_option("--seed", run.train.seed, "Seed for initialization, shuffling and warm-up draws")->group(g_train);
  app.add_option("--epochs", run.train.epochs, "Training epochs")->group(g_train);
  app.add_option("--batch-size", run.train.batch, "Minibatch size")->group(g_train);
  app.add_option("--lr", run.train.lr, "Initial learning rate")->group(g_train);
  app.add_option("--lr-decay", run.train.lr_decay, "Learning-rate factor applied after each decay epoch")->group(g_train);
  app.add_option("--lr-decay-epochs", run.train.lr_decay_epochs, "Epochs after which the lr decays")
      ->group(g_train)
      ->delimiter(',');
  app.add_option("--momentum", run.train.momentum, "SGD momentum")->group(g_train);
  app.add_option("--weight-decay", run.train.weight_decay, "L2 penalty on kernels and head weights")->group(g_train);
  app.add_option("--effect-lr-scale", run.train.effect_lr_scale, "Learning-rate multiplier for effect factors")
      ->group(g_train);
  app.add_option("--patience", run.train.patience, "Early-stopping patience in epochs (0 disables)")->group(g_train);
  app.add_option("--density-target", density_target, "Global density target d_t in [0,1], or 'invalid'")
      ->group(g_train);
  app.add_option("--alpha-t", run.train.alpha_t, "Final mask-loss weight multiplier alpha_t")->group(g_train);
  app.add_option("--n-warm", run.train.n_warm, "Warm-up epochs for mask enabling and alpha")->group(g_train);
  app.add_flag("--augment-flip", run.train.augment_flip, "Random horizontal flips")->group(g_train);
  app.add_flag("--augment-translate", run.train.augment_translate, "Random +-1 pixel translations")->group(g_train);

  auto* g_data = "Data";
  app.add_option("--dataset", run.data.kind, "synth or cifar10")->group(g_data);
  app.add_option("--train-path", run.data.train_path, "CIFAR-10 training file or directory")->group(g_data);
  app.add_option("--test-path", run.data.test_path, "CIFAR-10 test file or directory")->group(g_data);
  app.add_option("--train-size", run.data.train_size, "Training samples (cap for cifar10)")->group(g_data);
  app.add_option("--test-size", run.data.test_size, "Test samples (cap for cifar10)")->group(g_data);
  app.add_option("--data-seed", run.data.data_seed, "Seed of the synthetic set")->group(g_data);
  app.add_option("--synth-noise", run.data.synth_noise, "Pixel noise of the synthetic set")->group(g_data);
  app.add_option("--synth-jitter", run.data.synth_jitter, "Orientation jitter (radians) of the synthetic set")
      ->group(g_data);

  // train
  auto* train = app.add_subcommand("train", "Train a model; writes model.lhcm and metrics.csv");
  train->fallthrough();
  std::string train_out = "run";
  bool snapshots = false;
  train->add_option("--out", train_out, "Output directory");
  train->add_flag("--snapshot-masks", snapshots, "Write per-epoch mask snapshots to <out>/snapshots");

  // eval
  auto* eval = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint on the test split");
  eval->fallthrough();
  std::string checkpoint, json_out;
  eval->add_option("--checkpoint", checkpoint, "Model file")->required();
  eval->add_option("--json", json_out, "Write the report here instead of stdout");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Shape histograms, mask correlation or operator spectra");
  analyze->fallthrough();
  lhc::cmd::AnalyzeOptions aopt;
  std::string analyze_out = "analysis", snap_dir;
  std::vector<std::size_t> spectrum_size;
  analyze->add_option("--checkpoint", checkpoint, "Model file")->required();
  analyze->add_option("--which", aopt.which, "shapes, correlation or spectrum")
      ->check(CLI::IsMember({"shapes", "correlation", "spectrum"}));
  analyze->add_option("--snapshots", snap_dir, "Mask snapshot directory (correlation)");
  analyze->add_option("--pairing", aopt.pairing, "adjacent or reference (correlation)")
      ->check(CLI::IsMember({"adjacent", "reference"}));
  analyze->add_option("--reference", aopt.reference, "Reference snapshot position (reference pairing)");
  analyze->add_option("--spectrum-size", spectrum_size, "Input h,w for the spectrum (default: layer input)")
      ->delimiter(',')
      ->expected(2);
  analyze->add_option("--out", analyze_out, "Output directory");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Cycle-level datapath simulation of a checkpoint");
  simulate->fallthrough();
  lhc::cmd::SimulateOptions sopt;
  std::string sim_out = "sim", trace;
  simulate->add_option("--checkpoint", checkpoint, "Model file")->required();
  simulate->add_option("--images", sopt.images, "Test images to run")->check(CLI::PositiveNumber);
  simulate->add_option("--batch", sopt.batch, "Images sharing one dispatch (MAC array batch b)")
      ->check(CLI::PositiveNumber);
  simulate->add_flag("--reference", sopt.reference, "64-bit accumulation instead of 32-bit");
  simulate->add_option("--trace", trace, "Per-clock trace file (layer window row alut)");
  simulate->add_option("--out", sim_out, "Output directory");

  // flops
  auto* flops = app.add_subcommand("flops", "Multiply-accumulate counts, standard vs LHC");
  flops->fallthrough();
  std::string flops_csv;
  flops->add_option("--checkpoint", checkpoint, "Model file")->required();
  flops->add_option("--json", json_out, "Write the report here instead of stdout");
  flops->add_option("--csv", flops_csv, "Also write a CSV table");

  // catalog-dump
  auto* catalog = app.add_subcommand("catalog-dump", "Print the rigid (and optionally free) shape catalog");
  bool with_free = false;
  catalog->add_flag("--free", with_free, "Include all 512 free shapes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    run.model.mode = lhc::parse_mode(mode);
    run.model.lhc = !dense;
    run.train.d_t = lhc::parse_density_target(density_target);

    if (*train) {
      if (snapshots) run.train.snapshot_dir = std::filesystem::path(train_out) / "snapshots";
      const auto out = lhc::cmd::cmd_train(run, train_out, std::cerr);
      std::cout << "checkpoint " << out.checkpoint.string() << "\nmetrics " << out.metrics.string() << '\n';
    } else if (*eval) {
      write_json(lhc::cmd::cmd_eval(checkpoint, run.data), json_out);
    } else if (*analyze) {
      aopt.snapshots = snap_dir;
      if (spectrum_size.size() == 2) {
        aopt.spectrum_h = spectrum_size[0];
        aopt.spectrum_w = spectrum_size[1];
      }
      write_json(lhc::cmd::cmd_analyze(checkpoint, aopt, analyze_out), "");
    } else if (*simulate) {
      sopt.trace = trace;
      write_json(lhc::cmd::cmd_simulate(checkpoint, run.data, sopt, sim_out), "");
    } else if (*flops) {
      const auto r = lhc::cmd::cmd_flops(checkpoint);
      write_json(lhc::report::to_json(r), json_out);
      if (!flops_csv.empty()) {
        std::ofstream os(flops_csv);
        lhc::report::write_csv(os, r);
      }
    } else if (*catalog) {
      write_json(lhc::cmd::catalog_json(with_free), "");
    }
  } catch (const lhc::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const lhc::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kOk;
}
