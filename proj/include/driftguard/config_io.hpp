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
/// \brief Flat `name = value` files for vehicle parameters and run configuration.
///
/// One assignment per line, `#` starts a comment, blank lines are ignored.  Unknown keys,
/// duplicate keys and missing required keys are errors.

#ifndef DRIFTGUARD__CONFIG_IO_HPP_
#define DRIFTGUARD__CONFIG_IO_HPP_

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "driftguard/ecbf.hpp"
#include "driftguard/errors.hpp"
#include "driftguard/phase_envelope.hpp"
#include "driftguard/safety_filter.hpp"
#include "driftguard/simulator.hpp"
#include "driftguard/vehicle_model.hpp"

namespace driftguard
{

struct KeyValues
{
  std::string source;
  std::map<std::string, std::string> values;
  std::map<std::string, int> lines;

  bool has(const std::string & key) const {return values.count(key) != 0;}

  double number(const std::string & key) const
  {
    const std::string & text = values.at(key);
    double v = 0.0;
    const auto * end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc{} || ptr != end || !std::isfinite(v)) {
      throw ConfigError(where(key) + ": '" + key + "' expects a finite number, got '" + text + "'");
    }
    return v;
  }

  bool boolean(const std::string & key) const
  {
    const std::string & text = values.at(key);
    if (text == "true" || text == "1") {return true;}
    if (text == "false" || text == "0") {return false;}
    throw ConfigError(where(key) + ": '" + key + "' expects true or false, got '" + text + "'");
  }

  std::string where(const std::string & key) const
  {
    const auto it = lines.find(key);
    return source + (it == lines.end() ? std::string() : ":" + std::to_string(it->second));
  }

  /// Rejects keys outside `allowed` and reports any of `required` that are absent.
  void check_keys(const std::set<std::string> & allowed, const std::set<std::string> & required)
  const
  {
    for (const auto & [k, v] : values) {
      if (!allowed.count(k)) {
        throw ConfigError(where(k) + ": unknown key '" + k + "'");
      }
    }
    std::string missing;
    for (const auto & k : required) {
      if (!values.count(k)) {
        missing += (missing.empty() ? "" : ", ") + k;
      }
    }
    if (!missing.empty()) {
      throw ConfigError(source + ": missing required key(s): " + missing);
    }
  }
};

namespace detail
{

inline std::string_view trim(std::string_view s)
{
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

inline KeyValues parse_key_values(std::istream & in, const std::string & source)
{
  KeyValues kv;
  kv.source = source;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view body = line;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) {
      body = body.substr(0, hash);
    }
    body = detail::trim(body);
    if (body.empty()) {
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'name = value'");
    }
    const std::string key(detail::trim(body.substr(0, eq)));
    const std::string value(detail::trim(body.substr(eq + 1)));
    if (key.empty() || value.empty()) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": empty name or value");
    }
    if (kv.values.count(key)) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    kv.values[key] = value;
    kv.lines[key] = lineno;
  }
  return kv;
}

inline KeyValues read_key_values(const std::string & path)
{
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open '" + path + "'");
  }
  return parse_key_values(in, path);
}

/// Vehicle parameters.  mu = 0 is accepted here so that envelope construction can report a
/// degenerate region; every other field must satisfy VehicleParams::validate.
inline VehicleParams params_from(const KeyValues & kv)
{
  kv.check_keys(
    {"m", "Iz", "a", "b", "Cc_front", "Cc_rear", "mu", "rw", "delta_max", "g", "steer_ratio",
      "gamma"},
    {"m", "Iz", "a", "b", "Cc_front", "Cc_rear", "mu", "rw", "delta_max"});
  VehicleParams p;
  p.m = kv.number("m");
  p.Iz = kv.number("Iz");
  p.a = kv.number("a");
  p.b = kv.number("b");
  p.Cc_front = kv.number("Cc_front");
  p.Cc_rear = kv.number("Cc_rear");
  p.mu = kv.number("mu");
  p.rw = kv.number("rw");
  p.delta_max = kv.number("delta_max");
  if (kv.has("g")) {p.g = kv.number("g");}
  if (kv.has("steer_ratio")) {p.steer_ratio = kv.number("steer_ratio");}
  if (kv.has("gamma")) {p.gamma = kv.number("gamma");}

  VehicleParams probe = p;
  if (p.mu == 0.0) {
    probe.mu = 1.0;
  }
  try {
    probe.validate();
  } catch (const ConfigError & e) {
    throw ConfigError(kv.source + ": " + e.what());
  }
  return p;
}

inline VehicleParams load_params(const std::string & path)
{
  return params_from(read_key_values(path));
}

/// Everything a run needs besides the vehicle and the envelope artifact.
struct RunConfig
{
  FilterConfig filter;
  std::optional<double> alpha0;  // overrides the artifact's gain when set
  std::optional<double> alpha1;
  EnvelopeSettings envelope;
  double duration{10.0};
  double h_tol{0.02};

  SimConfig sim() const
  {
    SimConfig s;
    s.filter = filter;
    s.duration = duration;
    s.h_tol = h_tol;
    return s;
  }

  EllipseBarrier apply_gains(EllipseBarrier e) const
  {
    if (alpha0) {e.alpha0 = *alpha0;}
    if (alpha1) {e.alpha1 = *alpha1;}
    e.validate();
    return e;
  }
};

inline RunConfig config_from(const KeyValues & kv)
{
  kv.check_keys(
    {"w_delta", "w_tau", "w_eps", "alpha0", "alpha1", "dt", "bypass", "delta_dot_max",
      "tau_dot_max", "angle_bound_in_qp", "torque_bound_in_qp", "measure_time", "beta_max", "r_window", "trace_dt",
      "trace_horizon", "rays", "duration", "h_tol"},
    {});
  RunConfig c;
  auto num = [&](const char * key, double & dst) {
      if (kv.has(key)) {dst = kv.number(key);}
    };
  auto flag = [&](const char * key, bool & dst) {
      if (kv.has(key)) {dst = kv.boolean(key);}
    };
  num("w_delta", c.filter.w_delta);
  num("w_tau", c.filter.w_tau);
  num("w_eps", c.filter.w_eps);
  num("dt", c.filter.dt);
  num("delta_dot_max", c.filter.delta_dot_max);
  num("tau_dot_max", c.filter.tau_dot_max);
  flag("bypass", c.filter.bypass);
  flag("angle_bound_in_qp", c.filter.angle_bound_in_qp);
  flag("torque_bound_in_qp", c.filter.torque_bound_in_qp);
  flag("measure_time", c.filter.measure_time);
  if (kv.has("alpha0")) {c.alpha0 = kv.number("alpha0");}
  if (kv.has("alpha1")) {c.alpha1 = kv.number("alpha1");}
  num("beta_max", c.envelope.beta_max);
  num("r_window", c.envelope.r_window);
  num("trace_dt", c.envelope.dt);
  num("trace_horizon", c.envelope.horizon);
  if (kv.has("rays")) {
    const double rays = kv.number("rays");
    if (!(rays >= 16.0 && rays <= 1e6 && rays == std::floor(rays))) {
      throw ConfigError(kv.where("rays") + ": 'rays' must be an integer >= 16");
    }
    c.envelope.rays = static_cast<std::size_t>(rays);
  }
  num("duration", c.duration);
  num("h_tol", c.h_tol);

  try {
    c.filter.validate();
    c.envelope.validate();
    if ((c.alpha0 && !(*c.alpha0 > 0.0)) || (c.alpha1 && !(*c.alpha1 > 0.0))) {
      throw ConfigError("alpha0 and alpha1 must be > 0");
    }
    if (!(c.duration > 0.0)) {throw ConfigError("duration must be > 0");}
    if (!(c.h_tol >= 0.0)) {throw ConfigError("h_tol must be >= 0");}
  } catch (const ConfigError & e) {
    throw ConfigError(kv.source + ": " + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::string & path)
{
  return config_from(read_key_values(path));
}

inline RunConfig parse_config_string(const std::string & text, const std::string & source = "<string>")
{
  std::istringstream in(text);
  return config_from(parse_key_values(in, source));
}

}  // namespace driftguard

#endif  // DRIFTGUARD__CONFIG_IO_HPP_
