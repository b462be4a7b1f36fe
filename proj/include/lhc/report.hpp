// Copyright 2026 The LHC Authors
// SPDX-License-Identifier: Apache-2.0

// JSON and CSV renderings of the reports.

#pragma once

#include <ostream>
#include <span>
#include <string>

#include <json.hpp>

#include "lhc/analysis.hpp"
#include "lhc/hw_simulator.hpp"
#include "lhc/shape_catalog.hpp"
#include "lhc/sparsity.hpp"

namespace lhc::report {

using nlohmann::json;

inline json to_json(const FlopsReport& r) {
  json layers = json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"layer", l.layer}, {"c_std", l.c_std}, {"c_lhc", l.c_lhc}, {"delta", l.delta}, {"density", l.density}});
  }
  const double ratio = r.total_lhc ? static_cast<double>(r.total_std) / static_cast<double>(r.total_lhc) : 0.0;
  return {{"layers", layers},
          {"total_std", r.total_std},
          {"total_lhc", r.total_lhc},
          {"total_delta", r.total_delta},
          {"reduction", ratio},
          {"global_density", r.global_density}};
}

inline void write_csv(std::ostream& os, const FlopsReport& r) {
  os << "layer,c_std,c_lhc,delta,density\n";
  for (const auto& l : r.layers) os << l.layer << ',' << l.c_std << ',' << l.c_lhc << ',' << l.delta << ',' << l.density << '\n';
  os << "total," << r.total_std << ',' << r.total_lhc << ',' << r.total_delta << ',' << r.global_density << '\n';
}

inline json to_json(const sim::LayerReport& l) {
  return {{"layer", l.name},
          {"clocks", l.clocks},
          {"fill_clocks", l.fill_clocks},
          {"dense_clocks", l.dense_clocks},
          {"memory_rows", l.memory_rows},
          {"skipped_rows", l.skipped_rows},
          {"dense_rows", l.dense_rows},
          {"clock_ratio", l.clock_ratio()},
          {"memory_ratio", l.memory_ratio()},
          {"energy_proxy", l.clocks}};
}

inline json to_json(const sim::SimReport& r) {
  json layers = json::array();
  for (const auto& l : r.layers) layers.push_back(to_json(l));
  return {{"layers", layers},
          {"total", to_json(r.total)},
          {"precision", r.precision == sim::Precision::Float32 ? "float32" : "float64"},
          {"notes",
           {"one clock per dispatched weight row", "window fill clocks reported separately, not in ratios",
            "pipeline fill/drain not modeled", "single-buffered window", "energy_proxy is proportional to clocks"}}};
}

inline void write_csv(std::ostream& os, const sim::SimReport& r) {
  os << "layer,clocks,fill_clocks,dense_clocks,memory_rows,skipped_rows,dense_rows,clock_ratio,memory_ratio\n";
  auto row = [&](const sim::LayerReport& l) {
    os << l.name << ',' << l.clocks << ',' << l.fill_clocks << ',' << l.dense_clocks << ',' << l.memory_rows << ','
       << l.skipped_rows << ',' << l.dense_rows << ',' << l.clock_ratio() << ',' << l.memory_ratio() << '\n';
  };
  for (const auto& l : r.layers) row(l);
  row(r.total);
}

inline std::string bin_label(LhcMode mode, std::size_t bin) {
  return mode == LhcMode::Rigid ? rigid_catalog()[bin].label() : free_decode(bin).bit_string();
}

inline json to_json(const analysis::ShapeHistogram& h) {
  json bins = json::array();
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    if (h.counts[i] == 0) continue;
    bins.push_back({{"index", i}, {"shape", bin_label(h.mode, i)}, {"count", h.counts[i]}, {"ratio", h.ratios[i]}});
  }
  return {{"layer", h.layer}, {"mode", to_string(h.mode)}, {"blocks", h.blocks}, {"bins", bins}};
}

inline void write_csv(std::ostream& os, std::span<const analysis::ShapeHistogram> hs) {
  os << "layer,index,shape,count,ratio\n";
  for (const auto& h : hs) {
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      os << h.layer << ',' << i << ',' << bin_label(h.mode, i) << ',' << h.counts[i] << ',' << h.ratios[i] << '\n';
    }
  }
}

inline json to_json(const analysis::MaskCorrelationSeries& s) {
  return {{"layer", s.layer},
          {"pairing", s.pairing == analysis::Pairing::Adjacent ? "adjacent" : "reference"},
          {"epochs", s.epochs},
          {"values", s.values}};
}

inline json to_json(const analysis::SpectrumReport& r) {
  return {{"layer", r.layer},
          {"input", {r.h, r.w}},
          {"operator", {r.rows, r.cols}},
          {"singular_values", r.singular_values},
          {"uniformity", r.uniformity},
          {"uniformity_definition", "entropy of normalized squared singular values / log(count)"}};
}

inline void write_csv(std::ostream& os, std::span<const analysis::SpectrumReport> rs) {
  os << "layer,rank,singular_value\n";
  for (const auto& r : rs) {
    for (std::size_t i = 0; i < r.singular_values.size(); ++i) os << r.layer << ',' << i << ',' << r.singular_values[i] << '\n';
  }
}

}  // namespace lhc::report
