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
/// \brief Fixed-step closed-loop simulation, drift equilibria and the scripted drift scenarios.

#ifndef DRIFTGUARD__SIMULATOR_HPP_
#define DRIFTGUARD__SIMULATOR_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "driftguard/ecbf.hpp"
#include "driftguard/errors.hpp"
#include "driftguard/safety_filter.hpp"
#include "driftguard/vehicle_model.hpp"

namespace driftguard
{

/// Classical RK4 on the full state.  delta and tau are integrated as the exact linear ramps
/// they are, so they never pick up rounding from the stage average.
inline VehicleState integrate_rk4(
  const VehicleState & x, const RateInput & u, const VehicleParams & p, double dt,
  const ModelOptions & opts = simulation_options())
{
  auto f = [&](const VehicleState & s) {return state_derivative(s, u, p, opts);};
  auto shift = [&](const StateDerivative & k, double h) {
      return VehicleState{
        x.r + h * k.r_dot, x.beta + h * k.beta_dot, x.V + h * k.V_dot,
        x.delta + h * k.delta_dot, x.tau + h * k.tau_dot};
    };
  const StateDerivative k1 = f(x);
  const StateDerivative k2 = f(shift(k1, dt / 2));
  const StateDerivative k3 = f(shift(k2, dt / 2));
  const StateDerivative k4 = f(shift(k3, dt));
  VehicleState out;
  out.r = x.r + dt / 6.0 * (k1.r_dot + 2.0 * k2.r_dot + 2.0 * k3.r_dot + k4.r_dot);
  out.beta = x.beta + dt / 6.0 * (k1.beta_dot + 2.0 * k2.beta_dot + 2.0 * k3.beta_dot + k4.beta_dot);
  out.V = x.V + dt / 6.0 * (k1.V_dot + 2.0 * k2.V_dot + 2.0 * k3.V_dot + k4.V_dot);
  out.delta = x.delta + dt * u.delta_dot;
  out.tau = x.tau + dt * u.tau_dot;
  return out;
}

// ---------------------------------------------------------------------------
// Drift equilibria

struct DriftEquilibrium
{
  VehicleState state;  // delta, tau hold the open-loop inputs
  double delta_eq{0.0};
  double tau_eq{0.0};
  double residual{0.0};  // max-norm of (r_dot, beta_dot, V_dot)
  int iterations{0};
  int restarts{0};
};

struct EquilibriumOptions
{
  int max_iter{100};
  int restarts{5};
  double tol{1e-8};
  std::uint64_t seed{0};
};

namespace detail
{

inline Eigen::Vector3d velocity_residual(const VehicleState & x, const VehicleParams & p)
{
  const StateDerivative d = evaluate(x, p, ModelOptions{}, false).drift;
  return {d.r_dot, d.beta_dot, d.V_dot};
}

/// Damped Newton over (r, delta, tau) at fixed (beta, V).  Returns the iteration count on
/// success.
inline std::optional<int> newton_equilibrium(
  VehicleState & x, const VehicleParams & p, const EquilibriumOptions & eo)
{
  auto residual = [&](const VehicleState & s) -> std::optional<Eigen::Vector3d> {
      try {
        return velocity_residual(s, p);
      } catch (const Error &) {
        return std::nullopt;
      }
    };
  auto F = residual(x);
  if (!F) {
    return std::nullopt;
  }
  for (int it = 0; it <= eo.max_iter; ++it) {
    const double norm = F->lpNorm<Eigen::Infinity>();
    if (norm <= eo.tol) {
      return it;
    }
    if (it == eo.max_iter) {
      break;
    }
    VelocityJacobian J;
    try {
      J = velocity_jacobian(x, p);
    } catch (const Error &) {
      return std::nullopt;
    }
    Eigen::Matrix3d A;
    A.col(0) = J.wrt_velocity.col(0);
    A.col(1) = J.wrt_actuators.col(0);
    A.col(2) = J.wrt_actuators.col(1);
    const Eigen::FullPivLU<Eigen::Matrix3d> lu(A);
    if (!lu.isInvertible()) {
      return std::nullopt;
    }
    const Eigen::Vector3d step = lu.solve(-*F);
    bool accepted = false;
    for (double lambda = 1.0; lambda > 1e-6; lambda *= 0.5) {
      VehicleState trial = x;
      trial.r += lambda * step(0);
      trial.delta += lambda * step(1);
      trial.tau += lambda * step(2);
      const auto Ft = residual(trial);
      if (Ft && Ft->lpNorm<Eigen::Infinity>() < (1.0 - 1e-4 * lambda) * norm) {
        x = trial;
        F = Ft;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Steady drift at sideslip `target_beta` and speed `speed`: solves r_dot = beta_dot = V_dot = 0
/// for (r, delta, tau).  The first start is a saturated-tire estimate; up to `restarts`
/// further starts are drawn around it from a generator seeded by `seed`.
inline DriftEquilibrium find_drift_equilibrium(
  double target_beta, double speed, const VehicleParams & p, const EquilibriumOptions & eo = {})
{
  p.validate();
  check_speed(speed, ModelOptions{});
  const auto Fz = normal_forces(p);
  const double sgn = (target_beta > 0.0) - (target_beta < 0.0);
  const VehicleState guess{
    -sgn * p.mu * p.g * std::cos(target_beta) / speed, target_beta, speed, 0.7 * target_beta,
    p.mu * Fz.rear * p.rw * std::abs(std::sin(target_beta))};
  const double tau_limit = clamped_longitudinal_limit(Fz.rear, p) * p.rw;

  std::mt19937_64 rng(eo.seed);
  std::uniform_real_distribution<double> scale(0.5, 1.5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  for (int attempt = 0; attempt <= eo.restarts; ++attempt) {
    VehicleState x = guess;
    if (attempt > 0) {
      x.r = guess.r * scale(rng);
      x.delta = guess.delta * scale(rng);
      x.tau = 0.9 * tau_limit * unit(rng);
    }
    const auto iters = detail::newton_equilibrium(x, p, eo);
    if (iters && std::abs(x.delta) <= p.delta_max && std::abs(x.tau) < tau_limit) {
      DriftEquilibrium out;
      out.state = x;
      out.delta_eq = x.delta;
      out.tau_eq = x.tau;
      out.residual = detail::velocity_residual(x, p).lpNorm<Eigen::Infinity>();
      out.iterations = *iters;
      out.restarts = attempt;
      return out;
    }
  }
  throw NoConvergence(
          "no drift equilibrium found at beta=" + std::to_string(target_beta) + " rad, V=" +
          std::to_string(speed) + " m/s");
}

/// Eigenvalues of the (r, beta) block of the Jacobian at frozen speed and actuators.
inline Eigen::Vector2cd frozen_speed_eigenvalues(const VehicleState & x, const VehicleParams & p)
{
  const Eigen::Matrix2d A = velocity_jacobian(x, p).wrt_velocity.topLeftCorner<2, 2>();
  return Eigen::EigenSolver<Eigen::Matrix2d>(A, false).eigenvalues();
}

struct ClosedLoopStep
{
  FilterDecision decision;
  VehicleState next;
};

/// Filter one tick and integrate the plant with the rates that reach the commanded
/// angle and torque exactly at the end of the tick.
inline ClosedLoopStep closed_loop_step(
  const DriverCommand & cmd, const VehicleState & x, const EllipseBarrier & e,
  const VehicleParams & p, const FilterConfig & fc, const ModelOptions & opts = simulation_options())
{
  ClosedLoopStep out;
  out.decision = step(cmd, x, e, p, fc, opts);
  const RateInput applied{
    (out.decision.delta_cmd - x.delta) / fc.dt, (out.decision.tau_cmd - x.tau) / fc.dt};
  out.next = integrate_rk4(x, applied, p, fc.dt, opts);
  return out;
}

// ---------------------------------------------------------------------------
// Scenarios

struct ScriptSegment
{
  double t_start{0.0};    // s
  double handwheel{0.0};  // rad
  double tau{0.0};        // N m
};

/// Piecewise-constant driver holds, handwheel angle and rear torque.
struct DriverScript
{
  std::vector<ScriptSegment> segments;

  const ScriptSegment & segment_at(double t) const
  {
    const ScriptSegment * cur = &segments.front();
    for (const auto & s : segments) {
      if (s.t_start <= t) {cur = &s;}
    }
    return *cur;
  }

  DriverCommand at(double t, const VehicleParams & p) const
  {
    const ScriptSegment & cur = segment_at(t);
    const double hw_max = p.roadwheel_to_handwheel(p.delta_max);
    return {p.handwheel_to_roadwheel(std::clamp(cur.handwheel, -hw_max, hw_max)), cur.tau, t};
  }
};

struct Scenario
{
  std::string name;
  VehicleState initial;
  DriverScript script;
  double speed{7.0};  // design speed the envelope was fitted for
  double duration{10.0};
  bool filter_on{true};

  void validate() const
  {
    if (!(duration > 0.0)) {
      throw ConfigError("scenario duration must be > 0");
    }
    if (script.segments.empty() || script.segments.front().t_start > 0.0) {
      throw ConfigError("driver script must start at t = 0");
    }
  }
};

struct SimConfig
{
  FilterConfig filter;
  double duration{10.0};
  double h_tol{0.02};
  double spin_beta{std::numbers::pi / 2.0};
  double sustain_window{2.0};  // s, tail used by the transition check
};

/// One recorded tick: state at t before the step and the decision applied over [t, t + dt].
struct TraceSample
{
  double t{0.0};
  VehicleState state;
  DriverCommand command;
  double delta_dot_cmd{0.0};
  double tau_dot_cmd{0.0};
  double delta_cmd{0.0};
  double tau_cmd{0.0};
  double eps{0.0};
  double h{0.0};
  double lf_h{0.0};
  double nu1{0.0};
  bool active{false};
  double solve_time{0.0};
};

struct TraceMetrics
{
  double min_h{std::numeric_limits<double>::infinity()};
  double max_torque_reduction{0.0};         // N m, tau_d - tau_cmd on active ticks
  double max_torque_reduction_beta{0.0};
  double max_torque_reduction_t{0.0};
  double steering_at_worst_tick{0.0};       // delta_cmd - delta_d at that tick, handwheel rad
  double max_steering_augmentation{0.0};    // largest |delta_cmd - delta_d| on active ticks (signed), handwheel rad
  double max_steering_augmentation_beta{0.0};
  double max_steering_augmentation_t{0.0};
  double mean_solve_time{0.0};
  double max_solve_time{0.0};
  std::size_t active_ticks{0};
  bool has_worst_tick{false};
};

struct TraceRecord
{
  std::string scenario;
  bool bypass{false};
  double dt{0.0};
  std::vector<TraceSample> samples;
  VehicleState final_state;
  TraceMetrics metrics;
  bool spin_out{false};
  bool truncated{false};
  std::string fault;
  std::string initial_condition_warning;
  std::optional<bool> sustained_ccw;
};

/// Metrics from the raw series; run_scenario uses the same function so they are recomputable.
inline TraceMetrics compute_metrics(
  const std::vector<TraceSample> & samples, const VehicleState & final_state,
  const EllipseBarrier & e, const VehicleParams & p)
{
  TraceMetrics m;
  double solve_sum = 0.0;
  for (const auto & s : samples) {
    m.min_h = std::min(m.min_h, s.h);
    solve_sum += s.solve_time;
    m.max_solve_time = std::max(m.max_solve_time, s.solve_time);
    if (!s.active) {
      continue;
    }
    ++m.active_ticks;
    const double reduction = s.command.tau_d - s.tau_cmd;
    const double steer = p.roadwheel_to_handwheel(s.delta_cmd - s.command.delta_d);
    if (!m.has_worst_tick || reduction > m.max_torque_reduction) {
      m.has_worst_tick = true;
      m.max_torque_reduction = reduction;
      m.max_torque_reduction_beta = s.state.beta;
      m.max_torque_reduction_t = s.t;
      m.steering_at_worst_tick = steer;
    }
    if (std::abs(steer) > std::abs(m.max_steering_augmentation)) {
      m.max_steering_augmentation = steer;
      m.max_steering_augmentation_beta = s.state.beta;
      m.max_steering_augmentation_t = s.t;
    }
  }
  m.min_h = std::min(m.min_h, barrier(final_state, e));
  if (!samples.empty()) {
    m.mean_solve_time = solve_sum / static_cast<double>(samples.size());
  }
  return m;
}

/// Closed-loop run: sample the script, filter (or bypass), integrate one RK4 step.
/// Model failures are recorded, not thrown; the trace is marked truncated.
inline TraceRecord run_scenario(
  const Scenario & sc, const EllipseBarrier & e, const VehicleParams & p, const SimConfig & cfg)
{
  sc.validate();
  e.validate();
  cfg.filter.validate();
  FilterConfig fc = cfg.filter;
  fc.bypass = fc.bypass || !sc.filter_on;
  const ModelOptions opts = simulation_options();

  TraceRecord rec;
  rec.scenario = sc.name;
  rec.bypass = fc.bypass;
  rec.dt = fc.dt;

  VehicleState x = sc.initial;
  try {
    const auto ic = initial_condition_check(lie2(x, e, p, opts), e);
    if (!ic.satisfied) {
      rec.initial_condition_warning = ic.message;
    }
  } catch (const Error & err) {
    rec.initial_condition_warning = err.what();
  }

  const auto ticks = static_cast<std::size_t>(std::llround(sc.duration / fc.dt));
  rec.samples.reserve(ticks);
  for (std::size_t k = 0; k < ticks; ++k) {
    const double t = static_cast<double>(k) * fc.dt;
    const DriverCommand cmd = sc.script.at(t, p);
    TraceSample s;
    s.t = t;
    s.state = x;
    s.command = cmd;
    try {
      const auto [dec, next] = closed_loop_step(cmd, x, e, p, fc, opts);
      s.delta_cmd = dec.delta_cmd;
      s.tau_cmd = dec.tau_cmd;
      s.delta_dot_cmd = dec.delta_dot_cmd;
      s.tau_dot_cmd = dec.tau_dot_cmd;
      s.eps = dec.eps;
      s.h = dec.h;
      s.lf_h = dec.lf_h;
      s.nu1 = dec.nu1;
      s.active = dec.active;
      s.solve_time = dec.solve_time;
      rec.samples.push_back(s);
      x = next;
    } catch (const Error & err) {
      rec.truncated = true;
      rec.fault = err.what();
      break;
    }
    if (!std::isfinite(x.beta) || std::abs(x.beta) > cfg.spin_beta) {
      rec.spin_out = true;
      break;
    }
  }
  rec.final_state = x;
  rec.metrics = compute_metrics(rec.samples, x, e, p);
  return rec;
}

// Script values as commanded at the handwheel.
inline constexpr double kInitiationHandwheel = 1.5;
inline constexpr double kInitiationTorque = 856.0;
inline constexpr double kEquilibriumHandwheel = -1.5;
inline constexpr double kEquilibriumTorque = 700.0;
inline constexpr double kEquilibriumBeta = -0.44;
inline constexpr double kTransitionHandwheel = 1.5;
inline constexpr double kTransitionTorque = 800.0;
inline constexpr double kTransitionBeta = -0.98;
inline constexpr double kTransitionR = 0.15;

inline std::vector<std::string> scenario_names()
{
  return {"initiation", "equilibrium", "transition"};
}

inline void require_scenario_name(const std::string & name)
{
  for (const auto & n : scenario_names()) {
    if (n == name) {return;}
  }
  throw ConfigError("unknown scenario '" + name + "' (expected initiation, equilibrium or transition)");
}

/// Named drift scenario at `speed`.  Throws ConfigError for an unknown name.
inline Scenario make_scenario(
  const std::string & name, const VehicleParams & p, double speed = 7.0,
  double duration = 10.0, const EquilibriumOptions & eo = {})
{
  require_scenario_name(name);
  Scenario sc;
  sc.name = name;
  sc.speed = speed;
  sc.duration = duration;
  if (name == "initiation") {
    sc.initial = {0.0, 0.0, speed, 0.0, 0.0};
    sc.script.segments = {{0.0, kInitiationHandwheel, kInitiationTorque}};
  } else if (name == "equilibrium") {
    sc.initial = find_drift_equilibrium(kEquilibriumBeta, speed, p, eo).state;
    sc.script.segments = {{0.0, kEquilibriumHandwheel, kEquilibriumTorque}};
  } else {
    sc.initial = {kTransitionR, kTransitionBeta, speed, 0.0, 0.0};
    sc.script.segments = {{0.0, kTransitionHandwheel, kTransitionTorque}};
  }
  return sc;
}

/// True when every sample in the final `window` seconds is a counter-clockwise drift
/// (r > 0 with beta < 0) and the run finished without spin-out or truncation.
inline bool sustained_counterclockwise(const TraceRecord & rec, double duration, double window)
{
  if (rec.spin_out || rec.truncated || rec.samples.empty()) {
    return false;
  }
  for (const auto & s : rec.samples) {
    if (s.t >= duration - window && !(s.state.r > 0.0 && s.state.beta < 0.0)) {
      return false;
    }
  }
  return rec.final_state.r > 0.0 && rec.final_state.beta < 0.0;
}

inline TraceRecord run_transition_scenario(
  const EllipseBarrier & e, const VehicleParams & p, const SimConfig & cfg, double speed = 7.0)
{
  const Scenario sc = make_scenario("transition", p, speed, cfg.duration);
  TraceRecord rec = run_scenario(sc, e, p, cfg);
  rec.sustained_ccw = sustained_counterclockwise(rec, sc.duration, cfg.sustain_window);
  return rec;
}

}  // namespace driftguard

#endif  // DRIFTGUARD__SIMULATOR_HPP_
