#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vrpower/errors.hpp"

namespace vrpower {

// One row per epoch (or per iteration for the one-loop solvers). Optional
// fields stay empty in CSV and null in JSON: error_gap needs a spectral
// reference, lambda2_hat an adaptive estimate, contraction a previous gap.
struct TraceRow {
  std::size_t epoch = 0;
  double data_passes = 0.0;
  std::optional<double> error_gap;
  std::optional<double> lambda2_hat;
  std::optional<double> contraction;
  double wallclock_s = 0.0;
};

struct RunTrace {
  std::string solver;
  std::uint64_t seed = 0;
  std::vector<TraceRow> rows;
  bool diverged = false;        // run stopped early, rows end at the last good epoch
  std::size_t diverged_epoch = 0;
  std::size_t diverged_step = 0;

  const TraceRow& back() const { return rows.back(); }
  std::optional<double> final_gap() const {
    return rows.empty() ? std::nullopt : rows.back().error_gap;
  }
};

inline constexpr char kTraceHeader[] = "solver,seed,epoch,data_passes,error_gap,lambda2_hat,contraction,wallclock_s";

namespace detail {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) { return v ? fmt17(*v) : std::string(); }

}  // namespace detail

inline std::string trace_csv(const std::vector<RunTrace>& traces) {
  std::ostringstream out;
  out << kTraceHeader << '\n';
  for (const auto& tr : traces)
    for (const auto& r : tr.rows)
      out << tr.solver << ',' << tr.seed << ',' << r.epoch << ',' << detail::fmt17(r.data_passes)
          << ',' << detail::fmt_opt(r.error_gap) << ',' << detail::fmt_opt(r.lambda2_hat) << ','
          << detail::fmt_opt(r.contraction) << ',' << detail::fmt17(r.wallclock_s) << '\n';
  return out.str();
}

// Flat array of row objects, same fields as the CSV columns.
inline std::string trace_json(const std::vector<RunTrace>& traces) {
  std::ostringstream out;
  auto opt = [](const std::optional<double>& v) { return v ? detail::fmt17(*v) : std::string("null"); };
  out << "[\n";
  bool first = true;
  for (const auto& tr : traces) {
    for (const auto& r : tr.rows) {
      if (!first) out << ",\n";
      first = false;
      out << "  {\"solver\": \"" << tr.solver << "\", \"seed\": " << tr.seed
          << ", \"epoch\": " << r.epoch << ", \"data_passes\": " << detail::fmt17(r.data_passes)
          << ", \"error_gap\": " << opt(r.error_gap) << ", \"lambda2_hat\": " << opt(r.lambda2_hat)
          << ", \"contraction\": " << opt(r.contraction) << ", \"wallclock_s\": " << detail::fmt17(r.wallclock_s)
          << "}";
    }
  }
  out << "\n]\n";
  return out.str();
}

enum class TraceFormat { csv, json };

// Write-then-rename so readers never observe a half-written file.
inline void emit_trace(const std::vector<RunTrace>& traces, const std::string& path, TraceFormat format) {
  const std::string payload = format == TraceFormat::csv ? trace_csv(traces) : trace_json(traces);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write '" + tmp + "'");
    out << payload;
    if (!out.flush()) throw io_error("short write to '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw io_error("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

// Inverse of trace_csv, mainly for round-trip checks and post-processing.
inline std::vector<RunTrace> parse_trace_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw parse_error(1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTraceHeader) throw parse_error(1, "unexpected header '" + line + "'");
  std::vector<RunTrace> traces;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      const auto pos = line.find(',', start);
      f.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (f.size() != 8) throw parse_error(lineno, "expected 8 fields");
    auto num = [&](const std::string& s) { return std::stod(s); };
    auto opt = [&](const std::string& s) {
      return s.empty() ? std::optional<double>{} : std::optional<double>(num(s));
    };
    const auto seed = static_cast<std::uint64_t>(std::stoull(f[1]));
    if (traces.empty() || traces.back().solver != f[0] || traces.back().seed != seed) {
      traces.emplace_back();
      traces.back().solver = f[0];
      traces.back().seed = seed;
    }
    TraceRow r;
    r.epoch = static_cast<std::size_t>(std::stoull(f[2]));
    r.data_passes = num(f[3]);
    r.error_gap = opt(f[4]);
    r.lambda2_hat = opt(f[5]);
    r.contraction = opt(f[6]);
    r.wallclock_s = num(f[7]);
    traces.back().rows.push_back(r);
  }
  return traces;
}

inline std::vector<RunTrace> parse_trace_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open '" + path + "'");
  return parse_trace_csv(in);
}

}  // namespace vrpower
