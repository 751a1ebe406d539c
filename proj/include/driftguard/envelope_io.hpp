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
/// \brief Envelope artifact (versioned JSON) and the plot dataset for the phase portrait.

#ifndef DRIFTGUARD__ENVELOPE_IO_HPP_
#define DRIFTGUARD__ENVELOPE_IO_HPP_

#include <cstddef>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "driftguard/ecbf.hpp"
#include "driftguard/errors.hpp"
#include "driftguard/number_format.hpp"
#include "driftguard/phase_envelope.hpp"
#include "driftguard/vehicle_model.hpp"

namespace driftguard
{

inline constexpr int kEnvelopeSchema = 1;

/// Stable hash of the vehicle parameters, used to tie an artifact to the vehicle it was fitted for.
inline std::string params_hash(const VehicleParams & p)
{
  std::string canon;
  for (const double v : {p.m, p.Iz, p.a, p.b, p.Cc_front, p.Cc_rear, p.mu, p.rw, p.g,
      p.delta_max, p.steer_ratio, p.gamma})
  {
    canon += format_number(v);
    canon += ';';
  }
  return "fnv1a64:" + hex64(fnv1a(canon));
}

/// What a consumer needs from a fitted envelope.
struct EnvelopeArtifact
{
  std::string params_hash;
  double speed{0.0};
  EnvelopeSettings settings;
  EllipseBarrier ellipse;
  RadialProfile profile;
};

namespace detail
{

inline nlohmann::json points_json(const std::vector<PhasePoint> & pts, std::size_t stride)
{
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t k = 0; k < pts.size(); k += stride) {
    arr.push_back({pts[k].beta, pts[k].r});
  }
  if (!pts.empty() && (pts.size() - 1) % stride != 0) {
    arr.push_back({pts.back().beta, pts.back().r});
  }
  return arr;
}

inline nlohmann::json trace_json(const EnvelopeTrace & tr, std::size_t stride)
{
  return {
    {"steer_sign", tr.steer_sign},
    {"anchor", {tr.anchor.beta, tr.anchor.r}},
    {"dt", tr.dt},
    {"stride", stride},
    {"forward", points_json(tr.forward_branch, stride)},
    {"reverse", points_json(tr.reverse_branch, stride)}};
}

}  // namespace detail

/// Serializes the artifact.  Trace samples are thinned by `stride`; the boundary radii and the
/// ellipse are stored in full.  Output is a pure function of the inputs.
inline std::string envelope_to_json(
  const Envelope & env, const VehicleParams & p, std::size_t stride = 10)
{
  const EllipseBarrier & e = env.ellipse;
  nlohmann::ordered_json j;
  j["schema"] = kEnvelopeSchema;
  j["kind"] = "driftguard-envelope";
  j["params_hash"] = params_hash(p);
  j["speed"] = env.speed;
  j["settings"] = {
    {"beta_max", env.settings.beta_max}, {"r_window", env.settings.r_window},
    {"dt", env.settings.dt}, {"horizon", env.settings.horizon}, {"rays", env.settings.rays}};
  j["ellipse"] = {
    {"a", e.a}, {"b", e.b}, {"c", e.c}, {"d", e.d}, {"alpha0", e.alpha0}, {"alpha1", e.alpha1}};
  j["boundary_radius"] = env.profile.radius;
  j["traces"] = {
    {"upper", detail::trace_json(env.upper, stride)},
    {"lower", detail::trace_json(env.lower, stride)}};
  return j.dump(1) + "\n";
}

/// Parses and validates an artifact: schema, positive-definite ellipse, and containment on
/// every stored ray.  When `expected` is given the params hash must match.
inline EnvelopeArtifact envelope_from_json(
  const std::string & text, const std::optional<VehicleParams> & expected = std::nullopt)
{
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception & ex) {
    throw ConfigError(std::string("envelope artifact is not valid JSON: ") + ex.what());
  }
  EnvelopeArtifact art;
  try {
    if (j.at("schema").get<int>() != kEnvelopeSchema) {
      throw ConfigError("unsupported envelope schema " + j.at("schema").dump());
    }
    art.params_hash = j.at("params_hash").get<std::string>();
    art.speed = j.at("speed").get<double>();
    const auto & s = j.at("settings");
    art.settings.beta_max = s.at("beta_max").get<double>();
    art.settings.r_window = s.at("r_window").get<double>();
    art.settings.dt = s.at("dt").get<double>();
    art.settings.horizon = s.at("horizon").get<double>();
    art.settings.rays = s.at("rays").get<std::size_t>();
    const auto & e = j.at("ellipse");
    art.ellipse.a = e.at("a").get<double>();
    art.ellipse.b = e.at("b").get<double>();
    art.ellipse.c = e.at("c").get<double>();
    art.ellipse.d = e.at("d").get<double>();
    art.ellipse.alpha0 = e.at("alpha0").get<double>();
    art.ellipse.alpha1 = e.at("alpha1").get<double>();
    art.profile.radius = j.at("boundary_radius").get<std::vector<double>>();
  } catch (const nlohmann::json::exception & ex) {
    throw ConfigError(std::string("envelope artifact is missing a field: ") + ex.what());
  }
  art.ellipse.validate();
  if (art.profile.radius.size() != art.settings.rays) {
    throw ConfigError("envelope artifact has " + std::to_string(art.profile.radius.size()) +
            " boundary radii, expected " + std::to_string(art.settings.rays));
  }
  art.profile.theta = uniform_rays(art.settings.rays);
  if (!contained(art.ellipse, art.profile)) {
    throw ConfigError("envelope artifact failed containment validation");
  }
  if (expected && params_hash(*expected) != art.params_hash) {
    throw ConfigError("envelope artifact was fitted for different vehicle parameters (" +
            art.params_hash + " vs " + params_hash(*expected) + ")");
  }
  return art;
}

inline EnvelopeArtifact load_envelope(
  const std::string & path, const std::optional<VehicleParams> & expected = std::nullopt)
{
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open envelope artifact '" + path + "'");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return envelope_from_json(ss.str(), expected);
}

/// Long-format table of every curve in the phase portrait:
/// curve,index,beta,r with curve in {upper_forward, upper_reverse, lower_forward,
/// lower_reverse, boundary, ellipse}.
inline void write_envelope_dataset(std::ostream & out, const Envelope & env, std::size_t ellipse_points = 720)
{
  out << "# driftguard-envelope-dataset v1\n";
  out << "curve,index,beta,r\n";
  auto dump = [&](const char * name, const std::vector<PhasePoint> & pts) {
      for (std::size_t k = 0; k < pts.size(); ++k) {
        out << name << ',' << k << ',' << format_number(pts[k].beta) << ',' <<
          format_number(pts[k].r) << '\n';
      }
    };
  dump("upper_forward", env.upper.forward_branch);
  dump("upper_reverse", env.upper.reverse_branch);
  dump("lower_forward", env.lower.forward_branch);
  dump("lower_reverse", env.lower.reverse_branch);
  dump("boundary", env.boundary);
  std::vector<PhasePoint> ell;
  const auto th = uniform_rays(ellipse_points);
  const EllipseBarrier & e = env.ellipse;
  for (const double t : th) {
    const double q = detail::form_on_ray(e.a, e.b, e.c, t);
    const double rho = std::sqrt(e.d / q);
    ell.push_back({rho * std::cos(t), rho * std::sin(t)});
  }
  dump("ellipse", ell);
}

}  // namespace driftguard

#endif  // DRIFTGUARD__ENVELOPE_IO_HPP_
