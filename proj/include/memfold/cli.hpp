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

// Command implementations behind the `memfold` executable. Each command
// writes to caller-provided streams and returns the process exit status:
//   0 success, 1 I/O failure, 2 parse or validation failure,
//   3 config/IR or prediction/measurement mismatch, 4 over capacity.

#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "memfold/aggregator.hpp"
#include "memfold/alloc_oracle.hpp"
#include "memfold/model_ir.hpp"
#include "memfold/training_policy.hpp"

namespace memfold::cli {

enum ExitCode : int {
  kOk = 0,
  kIoError = 1,
  kInvalidInput = 2,
  kMismatch = 3,
  kOverCapacity = 4,
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path + "' for reading");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) {
    throw IoError("error while reading '" + path + "'");
  }
  return buf.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open '" + path + "' for writing");
  }
  out << text;
  out.flush();
  if (!out) {
    throw IoError("error while writing '" + path + "'");
  }
}

namespace detail {

inline void print_document_error(const std::string& path,
                                 const DocumentError& e, std::ostream& err) {
  if (const auto* v = dynamic_cast<const ValidationError*>(&e)) {
    for (const auto& d : v->diagnostics()) {
      err << path << ": " << to_string(d) << "\n";
    }
    return;
  }
  err << path << ": " << e.what() << "\n";
}

// Runs `body`, mapping exceptions onto the exit-code taxonomy.
inline int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const ConfigMismatchError& e) {
    err << "error: " << e.what() << "\n";
    return kMismatch;
  } catch (const MismatchError& e) {
    err << "error: " << e.what() << "\n";
    return kMismatch;
  } catch (const DocumentError& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const std::overflow_error& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidInput;
  }
}

template <typename T, typename Parse>
T load(const std::string& path, Parse parse) {
  const std::string text = read_file(path);
  try {
    return parse(text);
  } catch (const DocumentError& e) {
    // Re-throw with the file name attached.
    std::ostringstream msg;
    print_document_error(path, e, msg);
    std::string s = msg.str();
    if (!s.empty() && s.back() == '\n') {
      s.pop_back();
    }
    throw DocumentError(s);
  }
}

inline void emit(const std::string& text,
                 const std::optional<std::string>& out_path,
                 std::ostream& out) {
  if (out_path) {
    write_file(*out_path, text);
  } else {
    out << text;
  }
}

inline std::optional<std::int64_t> parse_int(std::string_view s) {
  std::int64_t v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    return std::nullopt;
  }
  return v;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace detail

/// Parses "A..B" (or a single "A") into the inclusive list A, A+1, ..., B.
/// Throws std::invalid_argument unless 1 <= A <= B.
inline std::vector<std::int64_t> parse_dp_range(std::string_view text) {
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  if (auto sep = text.find(".."); sep != std::string_view::npos) {
    auto a = detail::parse_int(text.substr(0, sep));
    auto b = detail::parse_int(text.substr(sep + 2));
    if (!a || !b) {
      throw std::invalid_argument("invalid dp range '" + std::string(text) +
                                  "' (expected A..B)");
    }
    lo = *a;
    hi = *b;
  } else if (auto a = detail::parse_int(text)) {
    lo = hi = *a;
  } else {
    throw std::invalid_argument("invalid dp range '" + std::string(text) +
                                "' (expected A..B)");
  }
  if (lo < 1 || hi < lo) {
    throw std::invalid_argument("invalid dp range '" + std::string(text) +
                                "': need 1 <= A <= B");
  }
  std::vector<std::int64_t> out;
  for (std::int64_t d = lo; d <= hi; ++d) {
    out.push_back(d);
  }
  return out;
}

struct PredictOptions {
  std::string ir_path;
  std::string cfg_path;
  ReportFormat format = ReportFormat::table;
  std::optional<std::string> out_path;
  std::optional<Bytes> capacity_bytes;
  std::optional<std::string> trace_path;
  TableStyle style;
};

inline int cmd_predict(const PredictOptions& opts, std::ostream& out,
                       std::ostream& err) {
  return detail::guarded(err, [&] {
    const ModelIR ir = detail::load<ModelIR>(opts.ir_path, parse_ir);
    const TrainConfig cfg =
        detail::load<TrainConfig>(opts.cfg_path, parse_train_config);
    const MemoryReport report = predict_peak(ir, cfg);
    detail::emit(render_report(report, opts.format, opts.style), opts.out_path,
                 out);
    if (opts.trace_path) {
      std::ostringstream trace;
      oracle::write_trace(oracle::build_graph(ir, resolve_plan(ir, cfg), cfg),
                          trace);
      write_file(*opts.trace_path, trace.str());
    }
    if (opts.capacity_bytes && report.m_peak_adjusted > *opts.capacity_bytes) {
      err << "error: predicted m_peak_adjusted " << report.m_peak_adjusted
          << " B exceeds capacity " << *opts.capacity_bytes << " B\n";
      return static_cast<int>(kOverCapacity);
    }
    return static_cast<int>(kOk);
  });
}

struct SweepOptions {
  std::string ir_path;
  std::string cfg_path;
  std::string dp_range = "1..8";
  ReportFormat format = ReportFormat::table;
  std::optional<std::string> out_path;
  TableStyle style;
};

inline int cmd_sweep(const SweepOptions& opts, std::ostream& out,
                     std::ostream& err) {
  return detail::guarded(err, [&] {
    const std::vector<std::int64_t> dps = parse_dp_range(opts.dp_range);
    const ModelIR ir = detail::load<ModelIR>(opts.ir_path, parse_ir);
    const TrainConfig cfg =
        detail::load<TrainConfig>(opts.cfg_path, parse_train_config);
    const auto sweep = sweep_dp(ir, cfg, dps);
    detail::emit(render_sweep(sweep, opts.format, opts.style), opts.out_path,
                 out);
    return static_cast<int>(kOk);
  });
}

struct MeasuredPoint {
  std::int64_t dp = 0;
  Bytes measured_bytes = 0;
};

/// CSV with the header `dp,measured_bytes` and one integer row per point.
inline std::vector<MeasuredPoint> parse_measured_csv(std::string_view text) {
  std::vector<MeasuredPoint> points;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = detail::trim(text.substr(0, nl));
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (line.empty()) {
      continue;
    }
    const std::string where = "measured CSV line " + std::to_string(line_no);
    const auto comma = line.find(',');
    if (comma == std::string_view::npos ||
        line.find(',', comma + 1) != std::string_view::npos) {
      throw DocumentError(where + ": expected two comma-separated columns");
    }
    const auto first = detail::trim(line.substr(0, comma));
    const auto second = detail::trim(line.substr(comma + 1));
    if (!header_seen) {
      if (first != "dp" || second != "measured_bytes") {
        throw DocumentError(where + ": expected header 'dp,measured_bytes'");
      }
      header_seen = true;
      continue;
    }
    auto dp = detail::parse_int(first);
    auto bytes = detail::parse_int(second);
    if (!dp || *dp < 1 || !bytes || *bytes <= 0) {
      throw DocumentError(where +
                          ": dp and measured_bytes must be positive integers");
    }
    points.push_back({*dp, static_cast<Bytes>(*bytes)});
  }
  if (!header_seen) {
    throw DocumentError("measured CSV is empty");
  }
  if (points.empty()) {
    throw DocumentError("measured CSV has no data rows");
  }
  return points;
}

/// Predicted m_peak_adjusted keyed by dp, from report or sweep JSON text.
inline std::map<std::int64_t, Bytes> predictions_from_json(
    std::string_view text) {
  const Json doc = memfold::detail::parse_json_text(text);
  std::map<std::int64_t, Bytes> out;
  if (doc.is_array()) {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const std::string path = memfold::detail::index_path("", i);
      memfold::detail::ObjectReader row(doc[i], path);
      row.optional("dp");
      row.optional("m_peak");
      row.optional("m_peak_adjusted");
      const MemoryReport r = read_report(row.required("report"),
                                         row.child_path("report"));
      row.finish();
      out[r.config_echo.dp_degree] = r.m_peak_adjusted;
    }
  } else {
    const MemoryReport r = read_report(doc);
    out[r.config_echo.dp_degree] = r.m_peak_adjusted;
  }
  return out;
}

struct CompareOptions {
  std::vector<std::string> report_paths;
  std::string measured_csv_path;
};

inline int cmd_compare(const CompareOptions& opts, std::ostream& out,
                       std::ostream& err) {
  return detail::guarded(err, [&] {
    if (opts.report_paths.empty()) {
      throw std::invalid_argument("compare needs at least one report file");
    }
    std::map<std::int64_t, Bytes> predicted;
    for (const auto& path : opts.report_paths) {
      for (const auto& [dp, bytes] : detail::load<std::map<std::int64_t, Bytes>>(
               path, predictions_from_json)) {
        predicted[dp] = bytes;
      }
    }
    const auto measured = detail::load<std::vector<MeasuredPoint>>(
        opts.measured_csv_path, parse_measured_csv);

    std::vector<Bytes> pred_values;
    std::vector<Bytes> meas_values;
    for (const auto& point : measured) {
      auto it = predicted.find(point.dp);
      if (it == predicted.end()) {
        throw MismatchError("no prediction for dp=" + std::to_string(point.dp));
      }
      pred_values.push_back(it->second);
      meas_values.push_back(point.measured_bytes);
    }

    char buf[160];
    std::snprintf(buf, sizeof(buf), "%4s %20s %20s %10s\n", "dp", "predicted_B",
                  "measured_B", "ape_%");
    out << buf;
    for (std::size_t i = 0; i < measured.size(); ++i) {
      const double ape = mape(std::span<const Bytes>(&pred_values[i], 1),
                              std::span<const Bytes>(&meas_values[i], 1));
      std::snprintf(buf, sizeof(buf), "%4lld %20llu %20llu %10.2f\n",
                    static_cast<long long>(measured[i].dp),
                    static_cast<unsigned long long>(pred_values[i]),
                    static_cast<unsigned long long>(meas_values[i]), ape);
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "MAPE: %.2f%%\n",
                  mape(pred_values, meas_values));
    out << buf;
    return static_cast<int>(kOk);
  });
}

/// Prints one diagnostic per line on `out`; nothing when the IR is valid.
inline int cmd_validate(const std::string& ir_path, std::ostream& out,
                        std::ostream& err) {
  std::string text;
  try {
    text = read_file(ir_path);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kIoError;
  }
  try {
    parse_ir(text);
  } catch (const DocumentError& e) {
    detail::print_document_error(ir_path, e, out);
    return kInvalidInput;
  }
  return kOk;
}

}  // namespace memfold::cli
