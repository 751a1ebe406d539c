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
/// \brief Per-tick CBF-QP that minimally modifies the driver's steering and torque rates.
///
/// Decision vector (delta_dot, tau_dot, eps), objective
///   1/2 w_delta (delta_dot - delta_dot_d)^2 + 1/2 w_tau (tau_dot - tau_dot_d)^2 + 1/2 w_eps eps^2,
/// one affine barrier inequality, and optional boxes on both rates: the roadwheel angle limit
/// and the transmissible rear torque, each expressed over one control period.  The Hessian is
/// diagonal, so the KKT system reduces to a scalar root in the row multiplier.

#ifndef DRIFTGUARD__SAFETY_FILTER_HPP_
#define DRIFTGUARD__SAFETY_FILTER_HPP_

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include "driftguard/ecbf.hpp"
#include "driftguard/errors.hpp"
#include "driftguard/vehicle_model.hpp"

namespace driftguard
{

struct FilterConfig
{
  double w_delta{1.0};
  double w_tau{1e-6};
  double w_eps{1e3};
  double dt{1e-3};              // control period, s
  double delta_dot_max{2.0};    // rad/s on desired rates, 0 disables
  double tau_dot_max{2000.0};   // N m/s on desired rates, 0 disables
  bool bypass{false};
  bool angle_bound_in_qp{true};
  bool torque_bound_in_qp{true};
  bool measure_time{true};

  void validate() const
  {
    if (!(w_delta > 0.0 && w_tau > 0.0 && w_eps > 0.0)) {
      throw ConfigError("filter weights must be > 0");
    }
    if (!(dt > 0.0)) {
      throw ConfigError("filter dt must be > 0");
    }
    if (!(delta_dot_max >= 0.0 && tau_dot_max >= 0.0)) {
      throw ConfigError("rate limits must be >= 0 (0 disables)");
    }
  }
};

/// Driver request: roadwheel angle and rear torque.
struct DriverCommand
{
  double delta_d{0.0};
  double tau_d{0.0};
  double timestamp{0.0};

  bool operator==(const DriverCommand &) const = default;
};

struct QpWeights
{
  double w_delta{1.0};
  double w_tau{1e-6};
  double w_eps{1e3};
};

/// Closed interval on one rate; infinite by default.
struct RateBounds
{
  double lo{-std::numeric_limits<double>::infinity()};
  double hi{std::numeric_limits<double>::infinity()};
};

struct QpSolution
{
  RateInput rates;
  double eps{0.0};
  double multiplier{0.0};  // KKT multiplier of the barrier row
  bool active{false};
  bool at_rate_bound{false};

  double objective(const RateInput & desired, const QpWeights & w) const
  {
    const double dd = rates.delta_dot - desired.delta_dot;
    const double dt = rates.tau_dot - desired.tau_dot;
    return 0.5 * (w.w_delta * dd * dd + w.w_tau * dt * dt + w.w_eps * eps * eps);
  }
};

/// Exact minimizer of the filter QP for one constraint row and a box on each rate.
///
/// Stationarity gives u_i(lambda) = clamp(ud_i + lambda g_i / w_i) and eps = lambda / w_eps, so
/// the row residual is a nondecreasing piecewise-linear function of the multiplier.  The
/// multiplier is its root, found by walking the (at most four) clamp breakpoints.
inline QpSolution solve_qp(
  const ConstraintRow & row, const RateInput & desired, const QpWeights & w,
  const RateBounds & delta_bounds = {}, const RateBounds & tau_bounds = {})
{
  const std::array<double, 2> g{row.g_delta, row.g_tau};
  const std::array<double, 2> ud{desired.delta_dot, desired.tau_dot};
  const std::array<double, 2> wt{w.w_delta, w.w_tau};
  const std::array<RateBounds, 2> box{delta_bounds, tau_bounds};

  auto at = [&](double lambda) {
      std::array<double, 2> u{};
      for (std::size_t i = 0; i < 2; ++i) {
        u[i] = std::clamp(ud[i] + lambda * g[i] / wt[i], box[i].lo, box[i].hi);
      }
      return u;
    };
  auto residual = [&](double lambda, const std::array<double, 2> & u) {
      return g[0] * u[0] + g[1] * u[1] + lambda / w.w_eps - row.rhs;
    };

  QpSolution sol;
  std::array<double, 2> u = at(0.0);
  double lambda = 0.0;
  if (residual(0.0, u) < 0.0) {
    sol.active = true;
    std::array<double, 5> knots{};
    std::size_t n = 0;
    for (std::size_t i = 0; i < 2; ++i) {
      if (g[i] == 0.0) {continue;}
      for (const double b : {box[i].lo, box[i].hi}) {
        const double k = (b - ud[i]) * wt[i] / g[i];
        if (std::isfinite(k) && k > 0.0) {knots[n++] = k;}
      }
    }
    knots[n++] = std::numeric_limits<double>::infinity();
    std::sort(knots.begin(), knots.begin() + static_cast<std::ptrdiff_t>(n));

    double left = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double right = knots[j];
      const double phi = residual(left, at(left));
      // Slope on (left, right): free components plus the slack.
      const double mid = std::isfinite(right) ? 0.5 * (left + right) : left + 1.0;
      const std::array<double, 2> um = at(mid);
      double slope = 1.0 / w.w_eps;
      for (std::size_t i = 0; i < 2; ++i) {
        if (um[i] > box[i].lo && um[i] < box[i].hi) {slope += g[i] * g[i] / wt[i];}
      }
      lambda = left - phi / slope;
      if (lambda <= right) {break;}
      left = right;
    }
    u = at(lambda);
  }

  sol.multiplier = lambda;
  sol.rates = {u[0], u[1]};
  sol.eps = lambda / w.w_eps;
  sol.at_rate_bound = sol.active &&
    (u[0] == delta_bounds.lo || u[0] == delta_bounds.hi ||
    u[1] == tau_bounds.lo || u[1] == tau_bounds.hi);

  // Absorb rounding so the returned point is feasible.
  const double slack = g[0] * u[0] + g[1] * u[1] + sol.eps - row.rhs;
  if (sol.active && slack < 0.0) {
    sol.eps -= slack;
  }
  return sol;
}

struct FilterDecision
{
  double delta_dot_cmd{0.0};
  double tau_dot_cmd{0.0};
  double eps{0.0};
  bool active{false};
  double delta_cmd{0.0};
  double tau_cmd{0.0};
  double solve_time{0.0};  // s, constraint assembly + QP
  ConstraintRow row;
  RateInput desired;
  double h{0.0};
  double lf_h{0.0};
  double nu1{0.0};
  bool bypassed{false};
};

inline double clamp_roadwheel(double delta, const VehicleParams & p)
{
  return std::clamp(delta, -p.delta_max, p.delta_max);
}

/// Largest rear torque the tire can transmit; above it the drive force is clamped and torque
/// no longer enters the barrier constraint.
inline double transmissible_torque(const VehicleParams & p)
{
  return clamped_longitudinal_limit(normal_forces(p).rear, p) * p.rw;
}

/// Finite-difference rates toward the driver's targets over one control period.
inline RateInput desired_rates(
  const DriverCommand & cmd, const VehicleState & x, const VehicleParams & p,
  const FilterConfig & cfg)
{
  const double tau_lim = transmissible_torque(p);
  RateInput u;
  u.delta_dot = (clamp_roadwheel(cmd.delta_d, p) - x.delta) / cfg.dt;
  u.tau_dot = (std::clamp(cmd.tau_d, -tau_lim, tau_lim) - x.tau) / cfg.dt;
  if (cfg.delta_dot_max > 0.0) {
    u.delta_dot = std::clamp(u.delta_dot, -cfg.delta_dot_max, cfg.delta_dot_max);
  }
  if (cfg.tau_dot_max > 0.0) {
    u.tau_dot = std::clamp(u.tau_dot, -cfg.tau_dot_max, cfg.tau_dot_max);
  }
  return u;
}

inline QpWeights weights_of(const FilterConfig & cfg)
{
  return {cfg.w_delta, cfg.w_tau, cfg.w_eps};
}

/// delta_dot range that keeps the integrated roadwheel angle inside +/- delta_max.
inline RateBounds angle_rate_bounds(
  const VehicleState & x, const VehicleParams & p, const FilterConfig & cfg)
{
  if (!cfg.angle_bound_in_qp) {
    return {};
  }
  return {(-p.delta_max - x.delta) / cfg.dt, (p.delta_max - x.delta) / cfg.dt};
}

/// tau_dot range that keeps the rear torque within what the tire can transmit.  Past that
/// limit the drive force saturates and the linearized torque gain is fictitious.
inline RateBounds torque_rate_bounds(
  const VehicleState & x, const VehicleParams & p, const FilterConfig & cfg)
{
  if (!cfg.torque_bound_in_qp) {
    return {};
  }
  const double lim = transmissible_torque(p);
  return {std::min(0.0, (-lim - x.tau) / cfg.dt), std::max(0.0, (lim - x.tau) / cfg.dt)};
}

inline FilterDecision solve_filter(
  const VehicleState & x, const RateInput & desired, const EllipseBarrier & e,
  const VehicleParams & p, const FilterConfig & cfg, const ModelOptions & opts = {})
{
  using clock = std::chrono::steady_clock;
  const auto t0 = cfg.measure_time ? clock::now() : clock::time_point{};

  const BarrierEvaluation be = lie2(x, e, p, opts);
  const ConstraintRow row = constraint_row(be, e);
  const QpSolution sol = solve_qp(
    row, desired, weights_of(cfg), angle_rate_bounds(x, p, cfg), torque_rate_bounds(x, p, cfg));

  FilterDecision out;
  if (cfg.measure_time) {
    out.solve_time = std::chrono::duration<double>(clock::now() - t0).count();
  }
  out.delta_dot_cmd = sol.rates.delta_dot;
  out.tau_dot_cmd = sol.rates.tau_dot;
  out.eps = sol.eps;
  out.active = sol.active;
  out.row = row;
  out.desired = desired;
  out.h = be.h;
  out.lf_h = be.lf_h;
  out.nu1 = nu1(be, e);
  out.delta_cmd = clamp_roadwheel(x.delta + out.delta_dot_cmd * cfg.dt, p);
  out.tau_cmd = x.tau + out.tau_dot_cmd * cfg.dt;
  return out;
}

/// One control tick: desired rates, barrier row, QP, and integration back to angle/torque.
inline FilterDecision step(
  const DriverCommand & cmd, const VehicleState & x, const EllipseBarrier & e,
  const VehicleParams & p, const FilterConfig & cfg, const ModelOptions & opts = {})
{
  if (cfg.bypass) {
    FilterDecision out;
    out.bypassed = true;
    out.delta_cmd = cmd.delta_d;
    out.tau_cmd = cmd.tau_d;
    out.delta_dot_cmd = (cmd.delta_d - x.delta) / cfg.dt;
    out.tau_dot_cmd = (cmd.tau_d - x.tau) / cfg.dt;
    out.desired = {out.delta_dot_cmd, out.tau_dot_cmd};
    out.h = barrier(x, e);
    // Diagnostics only; a bypassed tick must not fail on them.
    try {
      const double lf = lie1(x, e, p, opts);
      out.lf_h = lf;
      out.nu1 = lf + e.alpha0 * out.h;
    } catch (const Error &) {
      out.lf_h = std::numeric_limits<double>::quiet_NaN();
      out.nu1 = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
  }
  return solve_filter(x, desired_rates(cmd, x, p, cfg), e, p, cfg, opts);
}

}  // namespace driftguard

#endif  // DRIFTGUARD__SAFETY_FILTER_HPP_
