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
/// \brief Recoverable region in the sideslip / yaw-rate plane and the largest ellipse inside it.
///
/// Traces are integrated at frozen speed with full steering lock and zero torque, forward and
/// backward in time from an anchor on the beta-nullcline.  The closed boundary is assembled
/// from the two reverse branches and the two forward branches (see close_boundary), sampled
/// on uniform rays from the origin, and an origin-centred ellipse is fitted inside it.

#ifndef DRIFTGUARD__PHASE_ENVELOPE_HPP_
#define DRIFTGUARD__PHASE_ENVELOPE_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "driftguard/ecbf.hpp"
#include "driftguard/errors.hpp"
#include "driftguard/vehicle_model.hpp"

namespace driftguard
{

struct PhasePoint
{
  double beta{0.0};
  double r{0.0};

  bool operator==(const PhasePoint &) const = default;
};

struct EnvelopeSettings
{
  double beta_max{1.1};    // rad
  double r_window{2.5};    // rad/s
  double dt{1e-3};         // s
  double horizon{10.0};    // s
  std::size_t rays{720};

  void validate() const
  {
    if (!(beta_max > 0.0 && beta_max < std::numbers::pi / 2.0)) {
      throw ConfigError("beta_max must be in (0, pi/2)");
    }
    if (!(r_window > 0.0 && dt > 0.0 && horizon > 0.0)) {
      throw ConfigError("r_window, trace dt and horizon must be > 0");
    }
    if (rays < 16) {
      throw ConfigError("at least 16 boundary rays are required");
    }
  }
};

struct EnvelopeTrace
{
  double speed{0.0};
  int steer_sign{1};
  PhasePoint anchor;
  std::vector<PhasePoint> forward_branch;  // starts at the anchor
  std::vector<PhasePoint> reverse_branch;  // starts at the anchor
  double dt{0.0};
};

/// Point on the saturated beta-nullcline for full lock `steer_sign * delta_max`.
///
/// Both axles are taken at |Fy| = mu Fz.  With delta = +delta_max the anchor sits at
/// beta = -beta_max in the upper half plane; the other sign is its mirror image.
inline PhasePoint nullcline_anchor(
  double speed, double beta_max, int steer_sign, const VehicleParams & p,
  const ModelOptions & opts = {})
{
  check_speed(speed, opts);
  const auto Fz = normal_forces(p);
  const double s = steer_sign >= 0 ? 1.0 : -1.0;
  const double r = (p.mu * Fz.front * std::cos(p.delta_max + beta_max) +
    p.mu * Fz.rear * std::cos(beta_max)) / (p.m * speed);
  return {-s * beta_max, s * r};
}

namespace detail
{

/// (beta_dot, r_dot) at frozen speed with the given actuators.
inline PhasePoint phase_field(
  const PhasePoint & z, double speed, double delta, double tau, const VehicleParams & p,
  const ModelOptions & opts)
{
  const VehicleState x{z.r, z.beta, speed, delta, tau};
  const StateDerivative d = evaluate(x, p, opts, false).drift;
  return {d.beta_dot, d.r_dot};
}

inline PhasePoint phase_rk4(
  const PhasePoint & z, double h, double speed, double delta, const VehicleParams & p,
  const ModelOptions & opts)
{
  auto at = [&](const PhasePoint & base, const PhasePoint & k, double s) {
      return PhasePoint{base.beta + s * k.beta, base.r + s * k.r};
    };
  const PhasePoint k1 = phase_field(z, speed, delta, 0.0, p, opts);
  const PhasePoint k2 = phase_field(at(z, k1, h / 2), speed, delta, 0.0, p, opts);
  const PhasePoint k3 = phase_field(at(z, k2, h / 2), speed, delta, 0.0, p, opts);
  const PhasePoint k4 = phase_field(at(z, k3, h), speed, delta, 0.0, p, opts);
  return {
    z.beta + h / 6.0 * (k1.beta + 2.0 * k2.beta + 2.0 * k3.beta + k4.beta),
    z.r + h / 6.0 * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r)};
}

inline std::vector<PhasePoint> integrate_branch(
  PhasePoint z, double h, double speed, double delta, double r_window, double horizon,
  const VehicleParams & p, const ModelOptions & opts)
{
  std::vector<PhasePoint> out{z};
  const auto steps = static_cast<std::size_t>(std::llround(horizon / std::abs(h)));
  out.reserve(steps + 1);
  for (std::size_t i = 0; i < steps; ++i) {
    z = phase_rk4(z, h, speed, delta, p, opts);
    if (!std::isfinite(z.beta) || !std::isfinite(z.r) ||
      std::abs(z.beta) > std::numbers::pi / 2.0 || std::abs(z.r) > r_window)
    {
      break;
    }
    out.push_back(z);
  }
  return out;
}

}  // namespace detail

/// Forward and reverse trajectories from the anchor with delta = steer_sign * delta_max, tau = 0.
inline EnvelopeTrace trace_envelope(
  double speed, int steer_sign, const VehicleParams & p, const EnvelopeSettings & s = {},
  const ModelOptions & opts = {})
{
  s.validate();
  EnvelopeTrace tr;
  tr.speed = speed;
  tr.steer_sign = steer_sign >= 0 ? 1 : -1;
  tr.dt = s.dt;
  tr.anchor = nullcline_anchor(speed, s.beta_max, tr.steer_sign, p, opts);
  const double delta = tr.steer_sign * p.delta_max;
  tr.forward_branch =
    detail::integrate_branch(tr.anchor, s.dt, speed, delta, s.r_window, s.horizon, p, opts);
  tr.reverse_branch =
    detail::integrate_branch(tr.anchor, -s.dt, speed, delta, s.r_window, s.horizon, p, opts);
  return tr;
}

using Polygon = std::vector<PhasePoint>;

namespace detail
{

inline double cross(const PhasePoint & u, const PhasePoint & v) {return u.beta * v.r - u.r * v.beta;}
inline PhasePoint minus(const PhasePoint & u, const PhasePoint & v)
{
  return {u.beta - v.beta, u.r - v.r};
}

struct Crossing
{
  std::size_t i{0};  // segment index on the first polyline
  std::size_t j{0};  // segment index on the second polyline
  PhasePoint point;
};

/// First segment of `A` (in order) that properly meets any segment of `B`.
inline std::optional<Crossing> first_crossing(
  const std::vector<PhasePoint> & A, const std::vector<PhasePoint> & B)
{
  if (A.size() < 2 || B.size() < 2) {
    return std::nullopt;
  }
  // Bounding boxes of fixed-size chunks of B prune most segment tests.
  constexpr std::size_t kChunk = 64;
  struct Box
  {
    double lo_b, hi_b, lo_r, hi_r;
  };
  std::vector<Box> boxes;
  for (std::size_t s = 0; s + 1 < B.size(); s += kChunk) {
    Box bx{B[s].beta, B[s].beta, B[s].r, B[s].r};
    for (std::size_t k = s; k <= std::min(s + kChunk, B.size() - 1); ++k) {
      bx.lo_b = std::min(bx.lo_b, B[k].beta);
      bx.hi_b = std::max(bx.hi_b, B[k].beta);
      bx.lo_r = std::min(bx.lo_r, B[k].r);
      bx.hi_r = std::max(bx.hi_r, B[k].r);
    }
    boxes.push_back(bx);
  }

  for (std::size_t i = 0; i + 1 < A.size(); ++i) {
    const PhasePoint & p0 = A[i];
    const PhasePoint & p1 = A[i + 1];
    const double lo_b = std::min(p0.beta, p1.beta), hi_b = std::max(p0.beta, p1.beta);
    const double lo_r = std::min(p0.r, p1.r), hi_r = std::max(p0.r, p1.r);
    const PhasePoint e1 = minus(p1, p0);
    for (std::size_t c = 0; c < boxes.size(); ++c) {
      const Box & bx = boxes[c];
      if (bx.hi_b < lo_b || bx.lo_b > hi_b || bx.hi_r < lo_r || bx.lo_r > hi_r) {
        continue;
      }
      const std::size_t start = c * kChunk;
      const std::size_t stop = std::min(start + kChunk, B.size() - 1);
      for (std::size_t j = start; j < stop; ++j) {
        const PhasePoint e2 = minus(B[j + 1], B[j]);
        const double den = cross(e1, e2);
        if (std::abs(den) < 1e-300) {
          continue;
        }
        const PhasePoint w = minus(B[j], p0);
        const double t = cross(w, e2) / den;
        const double u = cross(w, e1) / den;
        if (t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0) {
          return Crossing{i, j, {p0.beta + t * e1.beta, p0.r + t * e1.r}};
        }
      }
    }
  }
  return std::nullopt;
}

/// Signed area (positive for counter-clockwise).
inline double signed_area(const Polygon & poly)
{
  double s = 0.0;
  for (std::size_t k = 0; k < poly.size(); ++k) {
    s += cross(poly[k], poly[(k + 1) % poly.size()]);
  }
  return 0.5 * s;
}

inline int winding_number(const Polygon & poly, const PhasePoint & q)
{
  int wn = 0;
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const PhasePoint & u = poly[k];
    const PhasePoint & v = poly[(k + 1) % poly.size()];
    const double side = cross(minus(v, u), minus(q, u));
    if (u.r <= q.r) {
      if (v.r > q.r && side > 0.0) {++wn;}
    } else if (v.r <= q.r && side < 0.0) {
      --wn;
    }
  }
  return wn;
}

}  // namespace detail

/// Closed MPRE boundary from the two traces.
///
/// The forward branches spiral into interior equilibria, so the branches are not joined end
/// to end.  Instead each reverse branch is followed until it first meets the opposite forward
/// branch, and that forward branch is walked back to its own anchor:
///   upper anchor -> upper reverse -> X1 -> lower forward (backwards) -> lower anchor
///   -> lower reverse -> X2 -> upper forward (backwards) -> upper anchor.
inline Polygon close_boundary(const EnvelopeTrace & upper, const EnvelopeTrace & lower)
{
  auto half = [](const EnvelopeTrace & from, const EnvelopeTrace & to, Polygon & out) {
      const auto x = detail::first_crossing(from.reverse_branch, to.forward_branch);
      if (!x) {
        throw DegenerateRegion(
                "reverse branch never meets the opposite forward branch; the traces do not "
                "enclose a region");
      }
      out.insert(out.end(), from.reverse_branch.begin(),
        from.reverse_branch.begin() + static_cast<std::ptrdiff_t>(x->i) + 1);
      out.push_back(x->point);
      for (std::size_t k = x->j + 1; k-- > 1; ) {
        out.push_back(to.forward_branch[k]);
      }
    };
  Polygon poly;
  half(upper, lower, poly);
  half(lower, upper, poly);
  // Drop consecutive duplicates so every edge has nonzero length.
  poly.erase(std::unique(poly.begin(), poly.end()), poly.end());
  if (poly.size() > 1 && poly.front() == poly.back()) {
    poly.pop_back();
  }
  if (poly.size() < 3 || detail::winding_number(poly, {0.0, 0.0}) == 0) {
    throw DegenerateRegion("traced boundary does not enclose the origin");
  }
  return poly;
}

/// Boundary distance from the origin on uniform rays theta_k = 2 pi k / n in the (beta, r) plane.
struct RadialProfile
{
  std::vector<double> theta;
  std::vector<double> radius;

  std::size_t size() const {return theta.size();}
};

inline std::vector<double> uniform_rays(std::size_t n)
{
  std::vector<double> th(n);
  for (std::size_t k = 0; k < n; ++k) {
    th[k] = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
  }
  return th;
}

/// Nearest boundary crossing on each ray (linear interpolation along polygon edges).
/// Throws DegenerateRegion if some ray never meets the boundary.
inline RadialProfile radial_profile(const Polygon & poly, std::size_t rays)
{
  RadialProfile prof;
  prof.theta = uniform_rays(rays);
  prof.radius.resize(rays);
  for (std::size_t k = 0; k < rays; ++k) {
    const PhasePoint dir{std::cos(prof.theta[k]), std::sin(prof.theta[k])};
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < poly.size(); ++e) {
      const PhasePoint & u = poly[e];
      const PhasePoint edge = detail::minus(poly[(e + 1) % poly.size()], u);
      // Solve s dir = u + t edge.
      const double den = detail::cross(dir, edge);
      if (den == 0.0) {
        continue;
      }
      const double s = detail::cross(u, edge) / den;
      const double t = detail::cross(u, dir) / den;
      // Small slack on t so a ray through a vertex is not lost to rounding on both edges.
      if (s > 0.0 && t >= -1e-12 && t <= 1.0 + 1e-12) {
        best = std::min(best, s);
      }
    }
    if (!std::isfinite(best)) {
      throw DegenerateRegion("boundary is not star-shaped about the origin");
    }
    prof.radius[k] = best;
  }
  return prof;
}

namespace detail
{

inline double form_on_ray(double a, double b, double c, double theta)
{
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  return a * ct * ct + b * ct * st + c * st * st;
}

/// Largest level d with {form <= d} inside the profile on every ray, and the resulting area.
inline std::pair<double, double> level_and_area(
  const std::array<double, 3> & abc, const RadialProfile & prof)
{
  const auto [a, b, c] = abc;
  const double disc = 4.0 * a * c - b * b;
  if (!(a > 0.0 && c > 0.0 && disc > 0.0)) {
    return {0.0, 0.0};
  }
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < prof.size(); ++k) {
    d = std::min(d, form_on_ray(a, b, c, prof.theta[k]) * prof.radius[k] * prof.radius[k]);
  }
  return {d, 2.0 * std::numbers::pi * d / std::sqrt(disc)};
}

inline std::array<double, 3> sphere_point(double polar, double azimuth)
{
  return {
    std::sin(polar) * std::cos(azimuth), std::sin(polar) * std::sin(azimuth), std::cos(polar)};
}

/// Nelder-Mead on the two sphere angles, maximizing `score`.
template<class Score>
std::array<double, 2> nelder_mead_max(
  Score score, std::array<double, 2> x0, double step, int max_iter, double tol)
{
  using Pt = std::array<double, 2>;
  std::array<Pt, 3> simplex{x0, Pt{x0[0] + step, x0[1]}, Pt{x0[0], x0[1] + step}};
  std::array<double, 3> f{};
  for (int k = 0; k < 3; ++k) {
    f[k] = -score(simplex[k]);
  }
  auto lerp = [](const Pt & a, const Pt & b, double t) {
      return Pt{a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])};
    };
  for (int it = 0; it < max_iter; ++it) {
    std::array<int, 3> idx{0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int i, int j) {return f[i] < f[j];});
    const int lo = idx[0], mid = idx[1], hi = idx[2];
    const double size = std::max(
      std::abs(simplex[hi][0] - simplex[lo][0]) + std::abs(simplex[hi][1] - simplex[lo][1]),
      std::abs(simplex[mid][0] - simplex[lo][0]) + std::abs(simplex[mid][1] - simplex[lo][1]));
    if (size < tol) {
      break;
    }
    const Pt centroid = lerp(simplex[lo], simplex[mid], 0.5);
    const Pt refl = lerp(simplex[hi], centroid, 2.0);
    const double fr = -score(refl);
    if (fr < f[lo]) {
      const Pt expd = lerp(simplex[hi], centroid, 3.0);
      const double fe = -score(expd);
      if (fe < fr) {
        simplex[hi] = expd;
        f[hi] = fe;
      } else {
        simplex[hi] = refl;
        f[hi] = fr;
      }
    } else if (fr < f[mid]) {
      simplex[hi] = refl;
      f[hi] = fr;
    } else {
      const Pt contr = fr < f[hi] ? lerp(simplex[hi], centroid, 1.5) :
        lerp(simplex[hi], centroid, 0.5);
      const double fc = -score(contr);
      if (fc < std::min(fr, f[hi])) {
        simplex[hi] = contr;
        f[hi] = fc;
      } else {
        for (int k : {mid, hi}) {
          simplex[k] = lerp(simplex[lo], simplex[k], 0.5);
          f[k] = -score(simplex[k]);
        }
      }
    }
  }
  const auto best = std::min_element(f.begin(), f.end()) - f.begin();
  return simplex[static_cast<std::size_t>(best)];
}

}  // namespace detail

struct FitSettings
{
  int polar_steps{40};
  int azimuth_steps{80};
  int max_iter{4000};
  double tol{1e-12};
  double shrink{1e-9};  // relative margin taken off the largest feasible level
};

/// Largest-area origin-centred ellipse inside the profile, normalized to d = 1.
///
/// The form (a, b, c) ranges over the unit sphere (c >= 0 hemisphere); each candidate is
/// scaled to the largest level contained on every ray.  A grid search seeds a Nelder-Mead
/// refinement in the two sphere angles.
inline EllipseBarrier fit_ellipse(const RadialProfile & prof, const FitSettings & fs = {})
{
  auto score = [&](const std::array<double, 2> & ang) {
      return detail::level_and_area(detail::sphere_point(ang[0], ang[1]), prof).second;
    };
  std::array<double, 2> best{0.0, 0.0};
  double best_area = -1.0;
  for (int i = 0; i < fs.polar_steps; ++i) {
    const double polar = (std::numbers::pi / 2.0) * i / (fs.polar_steps - 1);
    for (int j = 0; j < fs.azimuth_steps; ++j) {
      const double az = 2.0 * std::numbers::pi * j / fs.azimuth_steps;
      const double area = score({polar, az});
      if (area > best_area) {
        best_area = area;
        best = {polar, az};
      }
    }
  }
  if (!(best_area > 0.0)) {
    throw DegenerateRegion("no ellipse fits inside the traced region");
  }
  const double step = 0.5 * std::numbers::pi / (fs.polar_steps - 1);
  const auto refined = detail::nelder_mead_max(score, best, step, fs.max_iter, fs.tol);
  if (score(refined) > best_area) {
    best = refined;
  }
  const auto abc = detail::sphere_point(best[0], best[1]);
  const double d = detail::level_and_area(abc, prof).first * (1.0 - fs.shrink);
  EllipseBarrier e;
  e.a = abc[0];
  e.b = abc[1];
  e.c = abc[2];
  e.d = d;
  e = e.normalized();
  e.validate();
  return e;
}

/// Ellipse inscribed in an arbitrary star-shaped polygon around the origin.
inline EllipseBarrier fit_ellipse_in_polygon(
  const Polygon & poly, std::size_t rays = 720, const FitSettings & fs = {})
{
  return fit_ellipse(radial_profile(poly, rays), fs);
}

/// Exact per-ray containment predicate: a beta^2 + b beta r + c r^2 >= d at the boundary point.
inline bool contained(const EllipseBarrier & e, const RadialProfile & prof)
{
  for (std::size_t k = 0; k < prof.size(); ++k) {
    const double R = prof.radius[k];
    if (detail::form_on_ray(e.a, e.b, e.c, prof.theta[k]) * R * R < e.d) {
      return false;
    }
  }
  return true;
}

struct Envelope
{
  double speed{0.0};
  EnvelopeSettings settings;
  EnvelopeTrace upper;  // steer_sign = +1
  EnvelopeTrace lower;  // steer_sign = -1
  Polygon boundary;
  RadialProfile profile;
  EllipseBarrier ellipse;
};

/// Full pipeline: trace both signs, close, sample rays, fit.
inline Envelope fit_mprel(
  double speed, const VehicleParams & p, const EnvelopeSettings & s = {},
  const FitSettings & fs = {}, const ModelOptions & opts = simulation_options())
{
  s.validate();
  if (!(p.mu > 0.0)) {
    throw DegenerateRegion("mu must be > 0: without lateral grip there is no recoverable region");
  }
  p.validate();
  Envelope env;
  env.speed = speed;
  env.settings = s;
  env.upper = trace_envelope(speed, +1, p, s, opts);
  env.lower = trace_envelope(speed, -1, p, s, opts);
  env.boundary = close_boundary(env.upper, env.lower);
  env.profile = radial_profile(env.boundary, s.rays);
  env.ellipse = fit_ellipse(env.profile, fs);
  if (!contained(env.ellipse, env.profile)) {
    throw DegenerateRegion("fitted ellipse failed the containment check");
  }
  return env;
}

}  // namespace driftguard

#endif  // DRIFTGUARD__PHASE_ENVELOPE_HPP_
