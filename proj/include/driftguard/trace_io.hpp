// Copyright 2026 The driftguard Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// \file
/// \brief Trace table, metrics sidecar and phase-plane dataset writers.
///
/// The trace table is comma separated with a version line first and a record-count trailer
/// last, so a truncated write is detectable on read.

#ifndef DRIFTGUARD__TRACE_IO_HPP_
#define DRIFTGUARD__TRACE_IO_HPP_

#include <array>
#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "driftguard/errors.hpp"
#include "driftguard/number_format.hpp"
#include "driftguard/simulator.hpp"
#include "driftguard/vehicle_model.hpp"

namespace driftguard
{

inline constexpr std::string_view kTraceVersionLine = "# driftguard-trace v1";
inline constexpr std::string_view kTraceTrailerPrefix = "# records ";
inline constexpr int kMetricsSchema = 1;

inline constexpr std::array<std::string_view, 14> kTraceColumns{
  "t", "r", "beta", "V", "delta", "tau", "delta_d", "tau_d", "delta_dot_cmd", "tau_dot_cmd",
  "eps", "h", "active", "solve_time"};

using TraceRow = std::array<double, kTraceColumns.size()>;

inline TraceRow trace_row(const TraceSample & s)
{
  return {
    s.t, s.state.r, s.state.beta, s.state.V, s.state.delta, s.state.tau, s.command.delta_d,
    s.command.tau_d, s.delta_dot_cmd, s.tau_dot_cmd, s.eps, s.h, s.active ? 1.0 : 0.0,
    s.solve_time};
}

class TraceWriter
{
public:
  explicit TraceWriter(std::ostream & out)
  : out_(out)
  {
    out_ << kTraceVersionLine << '\n';
    for (std::size_t c = 0; c < kTraceColumns.size(); ++c) {
      out_ << (c ? "," : "") << kTraceColumns[c];
    }
    out_ << '\n';
  }

  void write(const TraceRow & row)
  {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) {out_ << ',';}
      out_ << format_number(row[c]);
    }
    out_ << '\n';
    ++count_;
  }

  void write(const TraceSample & s) {write(trace_row(s));}

  void finish()
  {
    out_ << kTraceTrailerPrefix << count_ << '\n';
    out_.flush();
  }

  std::size_t count() const {return count_;}

private:
  std::ostream & out_;
  std::size_t count_{0};
};

inline void write_trace_csv(std::ostream & out, const TraceRecord & rec)
{
  TraceWriter w(out);
  for (const auto & s : rec.samples) {
    w.write(s);
  }
  w.finish();
}

/// Reads a trace table; throws ConfigError on a version mismatch, a malformed row, or a missing
/// or inconsistent trailer (truncated write).
inline std::vector<TraceRow> read_trace_csv(std::istream & in, const std::string & source = "trace")
{
  std::string line;
  if (!std::getline(in, line) || line != kTraceVersionLine) {
    throw ConfigError(source + ": not a driftguard trace (bad version line)");
  }
  std::string header;
  for (std::size_t c = 0; c < kTraceColumns.size(); ++c) {
    header += (c ? "," : "") + std::string(kTraceColumns[c]);
  }
  if (!std::getline(in, line) || line != header) {
    throw ConfigError(source + ": unexpected column header");
  }
  std::vector<TraceRow> rows;
  bool trailer = false;
  while (std::getline(in, line)) {
    if (line.rfind(kTraceTrailerPrefix, 0) == 0) {
      const auto n = parse_number(std::string_view(line).substr(kTraceTrailerPrefix.size()), source);
      if (n != static_cast<double>(rows.size())) {
        throw ConfigError(source + ": trailer says " + line.substr(kTraceTrailerPrefix.size()) +
                " records, found " + std::to_string(rows.size()));
      }
      trailer = true;
      break;
    }
    TraceRow row{};
    std::size_t col = 0;
    std::string_view rest = line;
    while (true) {
      const auto comma = rest.find(',');
      if (col >= row.size()) {
        throw ConfigError(source + ": too many columns");
      }
      row[col++] = parse_number(rest.substr(0, comma), source);
      if (comma == std::string_view::npos) {break;}
      rest = rest.substr(comma + 1);
    }
    if (col != row.size()) {
      throw ConfigError(source + ": row has " + std::to_string(col) + " columns");
    }
    rows.push_back(row);
  }
  if (!trailer) {
    throw ConfigError(source + ": missing record-count trailer (truncated write)");
  }
  return rows;
}

inline nlohmann::ordered_json metrics_json(
  const TraceRecord & rec, const VehicleParams & p, double h_tol)
{
  const TraceMetrics & m = rec.metrics;
  nlohmann::ordered_json j;
  j["schema"] = kMetricsSchema;
  j["scenario"] = rec.scenario;
  j["bypass"] = rec.bypass;
  j["dt"] = rec.dt;
  j["records"] = rec.samples.size();
  j["min_h"] = m.min_h;
  j["h_tol"] = h_tol;
  j["safe"] = m.min_h >= -h_tol;
  j["spin_out"] = rec.spin_out;
  j["truncated"] = rec.truncated;
  if (!rec.fault.empty()) {
    j["fault"] = rec.fault;
  }
  if (!rec.initial_condition_warning.empty()) {
    j["initial_condition_warning"] = rec.initial_condition_warning;
  }
  if (rec.sustained_ccw) {
    j["sustained_ccw"] = *rec.sustained_ccw;
  }
  j["active_ticks"] = m.active_ticks;
  j["max_torque_reduction"] = {
    {"value", m.max_torque_reduction}, {"beta", m.max_torque_reduction_beta},
    {"t", m.max_torque_reduction_t}, {"steering_handwheel", m.steering_at_worst_tick}};
  j["max_steering_augmentation"] = {
    {"handwheel", m.max_steering_augmentation},
    {"roadwheel", p.handwheel_to_roadwheel(m.max_steering_augmentation)},
    {"beta", m.max_steering_augmentation_beta}, {"t", m.max_steering_augmentation_t}};
  j["solve_time"] = {{"mean", m.mean_solve_time}, {"max", m.max_solve_time}};
  const VehicleState & f = rec.final_state;
  j["final_state"] = {
    {"r", f.r}, {"beta", f.beta}, {"V", f.V}, {"delta", f.delta}, {"tau", f.tau}};
  return j;
}

/// beta, r and the filter's deviation from the driver per tick (handwheel rad, N m).
inline void write_phase_dataset(std::ostream & out, const TraceRecord & rec, const VehicleParams & p)
{
  out << "# driftguard-phase v1\n";
  out << "t,beta,r,h,d_handwheel,d_tau,active\n";
  for (const auto & s : rec.samples) {
    out << format_number(s.t) << ',' << format_number(s.state.beta) << ',' <<
      format_number(s.state.r) << ',' << format_number(s.h) << ',' <<
      format_number(p.roadwheel_to_handwheel(s.delta_cmd - s.command.delta_d)) << ',' <<
      format_number(s.tau_cmd - s.command.tau_d) << ',' << (s.active ? 1 : 0) << '\n';
  }
}

/// Filtered and bypassed runs side by side, one row per tick of the longer run.
inline void write_compare_dataset(
  std::ostream & out, const TraceRecord & filtered, const TraceRecord & bypassed,
  const VehicleParams & p)
{
  out << "# driftguard-compare v1\n";
  out << "t,beta_filtered,r_filtered,h_filtered,delta_cmd_filtered,tau_cmd_filtered,"
    "beta_bypass,r_bypass,h_bypass,delta_d,tau_d\n";
  const std::size_t n = std::max(filtered.samples.size(), bypassed.samples.size());
  auto cell = [&](const TraceRecord & rec, std::size_t k, auto get) {
      return k < rec.samples.size() ? format_number(get(rec.samples[k])) : std::string();
    };
  for (std::size_t k = 0; k < n; ++k) {
    const TraceSample & ref = k < filtered.samples.size() ? filtered.samples[k] : bypassed.samples[k];
    out << format_number(ref.t) << ',' <<
      cell(filtered, k, [](const TraceSample & s) {return s.state.beta;}) << ',' <<
      cell(filtered, k, [](const TraceSample & s) {return s.state.r;}) << ',' <<
      cell(filtered, k, [](const TraceSample & s) {return s.h;}) << ',' <<
      cell(filtered, k, [&](const TraceSample & s) {return p.roadwheel_to_handwheel(s.delta_cmd);}) << ',' <<
      cell(filtered, k, [](const TraceSample & s) {return s.tau_cmd;}) << ',' <<
      cell(bypassed, k, [](const TraceSample & s) {return s.state.beta;}) << ',' <<
      cell(bypassed, k, [](const TraceSample & s) {return s.state.r;}) << ',' <<
      cell(bypassed, k, [](const TraceSample & s) {return s.h;}) << ',' <<
      format_number(p.roadwheel_to_handwheel(ref.command.delta_d)) << ',' <<
      format_number(ref.command.tau_d) << '\n';
  }
}

}  // namespace driftguard

#endif  // DRIFTGUARD__TRACE_IO_HPP_
