/* Copyright 2026 The memfold Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Peak-memory aggregation: the static double sum of the four per-layer
// factors over every module and layer, plus data-parallel sweeps, MAPE
// scoring against measurements and report rendering.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "memfold/bytes.hpp"
#include "memfold/factor_engine.hpp"
#include "memfold/json_support.hpp"
#include "memfold/model_ir.hpp"
#include "memfold/training_policy.hpp"

namespace memfold {

struct FactorTotals {
  Bytes m_param = 0;
  Bytes m_opt = 0;
  Bytes m_grad = 0;
  Bytes m_act = 0;

  void add(const FactorBreakdown& f) {
    m_param = checked_add(m_param, f.m_param);
    m_opt = checked_add(m_opt, f.m_opt);
    m_grad = checked_add(m_grad, f.m_grad);
    m_act = checked_add(m_act, f.m_act);
  }

  void add(const FactorTotals& f) {
    m_param = checked_add(m_param, f.m_param);
    m_opt = checked_add(m_opt, f.m_opt);
    m_grad = checked_add(m_grad, f.m_grad);
    m_act = checked_add(m_act, f.m_act);
  }

  Bytes sum() const {
    return checked_add(checked_add(m_param, m_opt), checked_add(m_grad, m_act));
  }

  bool operator==(const FactorTotals&) const = default;
};

struct ModuleTotals {
  std::string module;
  FactorTotals factors;

  bool operator==(const ModuleTotals&) const = default;
};

struct MemoryReport {
  std::string ir_name;
  TrainConfig config_echo;
  std::vector<FactorBreakdown> per_layer;
  std::vector<ModuleTotals> per_module;  // IR order
  FactorTotals totals;
  Bytes m_peak = 0;
  Bytes m_peak_adjusted = 0;

  bool operator==(const MemoryReport&) const = default;
};

/// ceil(peak * headroom) + baseline.
inline Bytes adjusted_peak(Bytes peak, double headroom_factor,
                           Bytes baseline) {
  Bytes scaled = peak;
  if (headroom_factor != 1.0) {
    const long double product =
        std::ceil(static_cast<long double>(peak) *
                  static_cast<long double>(headroom_factor));
    if (!(product < 18446744073709551616.0L)) {
      throw std::overflow_error("adjusted peak exceeds 64-bit byte range");
    }
    scaled = static_cast<Bytes>(product);
  }
  return checked_add(scaled, baseline);
}

/// Predicts the training peak for `ir` under `cfg`.
///
/// Throws ValidationError if either input breaks an invariant and
/// ConfigMismatchError if the config names modules the IR lacks.
inline MemoryReport predict_peak(const ModelIR& ir, const TrainConfig& cfg) {
  if (auto diagnostics = validate_ir(ir); !diagnostics.empty()) {
    throw ValidationError(std::move(diagnostics));
  }
  const ResolvedPlan plan = resolve_plan(ir, cfg);

  MemoryReport report;
  report.ir_name = ir.name;
  report.config_echo = cfg;
  std::size_t flat = 0;
  for (const auto& module : ir.modules) {
    ModuleTotals subtotal{module.name, {}};
    for (const auto& layer : module.layers) {
      FactorBreakdown f = predict_layer(layer, plan.layers[flat++], cfg);
      subtotal.factors.add(f);
      report.per_layer.push_back(std::move(f));
    }
    report.totals.add(subtotal.factors);
    report.per_module.push_back(std::move(subtotal));
  }
  report.m_peak = report.totals.sum();
  report.m_peak_adjusted = adjusted_peak(report.m_peak, cfg.headroom_factor,
                                         cfg.runtime_baseline_bytes);
  return report;
}

struct SweepPoint {
  std::int64_t dp = 1;
  MemoryReport report;

  bool operator==(const SweepPoint&) const = default;
};

/// One report per entry of `dp_values`, in input order, each with
/// cfg.dp_degree overridden.
inline std::vector<SweepPoint> sweep_dp(const ModelIR& ir,
                                        const TrainConfig& cfg,
                                        std::span<const std::int64_t> dp_values) {
  if (dp_values.empty()) {
    throw std::invalid_argument("sweep_dp needs at least one dp value");
  }
  std::vector<SweepPoint> out;
  out.reserve(dp_values.size());
  for (const std::int64_t dp : dp_values) {
    TrainConfig point = cfg;
    point.dp_degree = dp;
    out.push_back({dp, predict_peak(ir, point)});
  }
  return out;
}

/// Mean absolute percentage error, in percent.
inline double mape(std::span<const Bytes> predicted,
                   std::span<const Bytes> measured) {
  if (predicted.size() != measured.size()) {
    throw std::invalid_argument("mape: predicted and measured lengths differ");
  }
  if (measured.empty()) {
    throw std::invalid_argument("mape: no data points");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < measured.size(); ++i) {
    if (measured[i] == 0) {
      throw std::invalid_argument("mape: measured value at index " +
                                  std::to_string(i) + " is zero");
    }
    const double p = static_cast<double>(predicted[i]);
    const double m = static_cast<double>(measured[i]);
    sum += std::fabs(p - m) / m;
  }
  return 100.0 * sum / static_cast<double>(measured.size());
}

// ---------------------------------------------------------------------------
// JSON schema

inline OrderedJson to_json(const FactorTotals& f) {
  OrderedJson out;
  out["m_param"] = f.m_param;
  out["m_opt"] = f.m_opt;
  out["m_grad"] = f.m_grad;
  out["m_act"] = f.m_act;
  return out;
}

inline OrderedJson to_json(const MemoryReport& report) {
  OrderedJson doc;
  doc["ir_name"] = report.ir_name;
  doc["config"] = to_json(report.config_echo);
  doc["per_layer"] = OrderedJson::array();
  for (const auto& f : report.per_layer) {
    OrderedJson l;
    l["path"] = f.path;
    l["m_param"] = f.m_param;
    l["m_opt"] = f.m_opt;
    l["m_grad"] = f.m_grad;
    l["m_act"] = f.m_act;
    doc["per_layer"].push_back(std::move(l));
  }
  doc["per_module"] = OrderedJson::array();
  for (const auto& m : report.per_module) {
    OrderedJson row;
    row["module"] = m.module;
    row.update(to_json(m.factors));
    doc["per_module"].push_back(std::move(row));
  }
  doc["totals"] = to_json(report.totals);
  doc["m_peak"] = report.m_peak;
  doc["m_peak_adjusted"] = report.m_peak_adjusted;
  return doc;
}

inline OrderedJson to_json(const std::vector<SweepPoint>& sweep) {
  OrderedJson doc = OrderedJson::array();
  for (const auto& point : sweep) {
    OrderedJson row;
    row["dp"] = point.dp;
    row["m_peak"] = point.report.m_peak;
    row["m_peak_adjusted"] = point.report.m_peak_adjusted;
    row["report"] = to_json(point.report);
    doc.push_back(std::move(row));
  }
  return doc;
}

namespace detail {

inline Bytes read_bytes(ObjectReader& r, std::string_view key) {
  const std::int64_t v = r.integer(key);
  if (v < 0) {
    throw SchemaError(r.child_path(key), "byte count must be non-negative");
  }
  return static_cast<Bytes>(v);
}

inline FactorTotals read_factor_fields(ObjectReader& r) {
  FactorTotals f;
  f.m_param = read_bytes(r, "m_param");
  f.m_opt = read_bytes(r, "m_opt");
  f.m_grad = read_bytes(r, "m_grad");
  f.m_act = read_bytes(r, "m_act");
  return f;
}

}  // namespace detail

/// Inverse of to_json(MemoryReport). `path` prefixes error locations.
inline MemoryReport read_report(const Json& doc, const std::string& path = "") {
  detail::ObjectReader r(doc, path);
  MemoryReport report;
  report.ir_name = r.string("ir_name");
  report.config_echo = read_train_config(r.required("config"),
                                         r.child_path("config"));
  const Json& layers = r.array("per_layer");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    detail::ObjectReader lr(layers[i],
                            detail::index_path(r.child_path("per_layer"), i));
    FactorBreakdown f;
    f.path = lr.string("path");
    const FactorTotals values = detail::read_factor_fields(lr);
    f.m_param = values.m_param;
    f.m_opt = values.m_opt;
    f.m_grad = values.m_grad;
    f.m_act = values.m_act;
    lr.finish();
    report.per_layer.push_back(std::move(f));
  }
  const Json& modules = r.array("per_module");
  for (std::size_t i = 0; i < modules.size(); ++i) {
    detail::ObjectReader mr(modules[i],
                            detail::index_path(r.child_path("per_module"), i));
    ModuleTotals m;
    m.module = mr.string("module");
    m.factors = detail::read_factor_fields(mr);
    mr.finish();
    report.per_module.push_back(std::move(m));
  }
  {
    detail::ObjectReader tr(r.required("totals"), r.child_path("totals"));
    report.totals = detail::read_factor_fields(tr);
    tr.finish();
  }
  report.m_peak = detail::read_bytes(r, "m_peak");
  report.m_peak_adjusted = detail::read_bytes(r, "m_peak_adjusted");
  r.finish();
  return report;
}

inline MemoryReport parse_report(std::string_view text) {
  return read_report(detail::parse_json_text(text));
}

// ---------------------------------------------------------------------------
// Rendering

enum class ReportFormat { json, table };

template <>
struct EnumNames<ReportFormat> {
  static constexpr std::array<std::string_view, 2> names = {"json", "table"};
};

struct TableStyle {
  bool ansi = false;  // bold header and totals rows
};

inline std::string format_mib(Bytes b) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f",
                static_cast<double>(b) / static_cast<double>(1ull << 20));
  return buf;
}

inline std::string format_gib(Bytes b) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f",
                static_cast<double>(b) / static_cast<double>(1ull << 30));
  return buf;
}

namespace detail {

inline std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

inline std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

inline std::string bold(const std::string& s, const TableStyle& style) {
  return style.ansi ? "\x1b[1m" + s + "\x1b[0m" : s;
}

inline std::string peak_line(const std::string& label, Bytes b) {
  return pad_right(label, 17) + ": " + std::to_string(b) + " B (" +
         format_mib(b) + " MiB, " + format_gib(b) + " GiB)\n";
}

inline std::string render_table(const MemoryReport& report,
                                const TableStyle& style) {
  std::size_t name_width = 6;
  for (const auto& m : report.per_module) {
    name_width = std::max(name_width, m.module.size());
  }
  name_width += 2;
  constexpr std::size_t kCol = 14;

  auto row = [&](const std::string& name, const FactorTotals& f) {
    return pad_right(name, name_width) + pad_left(format_mib(f.m_param), kCol) +
           pad_left(format_mib(f.m_opt), kCol) +
           pad_left(format_mib(f.m_grad), kCol) +
           pad_left(format_mib(f.m_act), kCol) +
           pad_left(format_mib(f.sum()), kCol) +
           pad_left(format_gib(f.sum()), kCol);
  };

  const TrainConfig& c = report.config_echo;
  std::string out;
  out += "model: " + report.ir_name + "\n";
  out += "config: micro_batch_size=" + std::to_string(c.micro_batch_size) +
         " text_token_count=" + std::to_string(c.text_token_count) +
         " image_patch_token_count=" +
         std::to_string(c.image_patch_token_count) +
         " precision=" + std::string(enum_name(c.precision)) +
         " optimizer=" + std::string(enum_name(c.optimizer)) +
         " zero_stage=" + std::to_string(c.zero_stage) +
         " dp_degree=" + std::to_string(c.dp_degree) + "\n\n";
  const std::string header =
      pad_right("module", name_width) + pad_left("param MiB", kCol) +
      pad_left("opt MiB", kCol) + pad_left("grad MiB", kCol) +
      pad_left("act MiB", kCol) + pad_left("total MiB", kCol) +
      pad_left("total GiB", kCol);
  out += bold(header, style) + "\n";
  for (const auto& m : report.per_module) {
    out += row(m.module, m.factors) + "\n";
  }
  out += bold(row("total", report.totals), style) + "\n\n";
  out += peak_line("m_peak", report.m_peak);
  out += peak_line("m_peak_adjusted", report.m_peak_adjusted);
  return out;
}

}  // namespace detail

inline std::string render_report(const MemoryReport& report,
                                 ReportFormat format,
                                 const TableStyle& style = {}) {
  if (format == ReportFormat::json) {
    return to_json(report).dump(2) + "\n";
  }
  return detail::render_table(report, style);
}

inline std::string render_sweep(const std::vector<SweepPoint>& sweep,
                                ReportFormat format,
                                const TableStyle& style = {}) {
  if (format == ReportFormat::json) {
    return to_json(sweep).dump(2) + "\n";
  }
  constexpr std::size_t kCol = 18;
  std::string out = detail::bold(
      detail::pad_left("dp", 4) + detail::pad_left("m_peak B", kCol + 4) +
          detail::pad_left("m_peak GiB", kCol) +
          detail::pad_left("adjusted B", kCol + 4) +
          detail::pad_left("adjusted GiB", kCol),
      style);
  out += "\n";
  for (const auto& p : sweep) {
    out += detail::pad_left(std::to_string(p.dp), 4) +
           detail::pad_left(std::to_string(p.report.m_peak), kCol + 4) +
           detail::pad_left(format_gib(p.report.m_peak), kCol) +
           detail::pad_left(std::to_string(p.report.m_peak_adjusted), kCol + 4) +
           detail::pad_left(format_gib(p.report.m_peak_adjusted), kCol) + "\n";
  }
  return out;
}

}  // namespace memfold
