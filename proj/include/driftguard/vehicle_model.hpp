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
/// \brief Nonlinear single-track vehicle with a saturating cubic lateral tire model.
///
/// State ordering is x = [r, beta, V, delta, tau] and the input is the actuator rate
/// u = [delta_dot, tau_dot].  The model is control affine: the rate inputs only enter the
/// last two rows, which are pure integrators.  Rear-wheel drive, static normal loads.

#ifndef DRIFTGUARD__VEHICLE_MODEL_HPP_
#define DRIFTGUARD__VEHICLE_MODEL_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>

#include "driftguard/errors.hpp"

namespace driftguard
{

struct VehicleParams
{
  double m{1800.0};           // kg
  double Iz{2800.0};          // kg m^2
  double a{1.4};              // CoM to front axle, m
  double b{1.4};              // CoM to rear axle, m
  double Cc_front{60000.0};   // N/rad
  double Cc_rear{60000.0};    // N/rad
  double mu{0.3};
  double rw{0.35};            // m
  double g{9.81};             // m/s^2
  double delta_max{0.71};     // roadwheel, rad
  double steer_ratio{1.0 / 15.0};  // roadwheel angle per handwheel angle
  double gamma{0.99};

  /// Throws ConfigError naming the first violated invariant.
  void validate() const
  {
    auto require = [](bool ok, const char * what) {
        if (!ok) {throw ConfigError(std::string("invalid vehicle params: ") + what);}
      };
    require(std::isfinite(m) && m > 0.0, "m must be > 0");
    require(std::isfinite(Iz) && Iz > 0.0, "Iz must be > 0");
    require(std::isfinite(a) && a > 0.0, "a must be > 0");
    require(std::isfinite(b) && b > 0.0, "b must be > 0");
    require(std::isfinite(Cc_front) && Cc_front > 0.0, "Cc_front must be > 0");
    require(std::isfinite(Cc_rear) && Cc_rear > 0.0, "Cc_rear must be > 0");
    require(std::isfinite(mu) && mu > 0.0 && mu <= 2.0, "mu must be in (0, 2]");
    require(std::isfinite(rw) && rw > 0.0, "rw must be > 0");
    require(std::isfinite(g) && g > 0.0, "g must be > 0");
    require(
      std::isfinite(delta_max) && delta_max > 0.0 && delta_max < std::numbers::pi / 2.0,
      "delta_max must be in (0, pi/2)");
    require(std::isfinite(steer_ratio) && steer_ratio > 0.0, "steer_ratio must be > 0");
    require(std::isfinite(gamma) && gamma > 0.0 && gamma < 1.0, "gamma must be in (0, 1)");
  }

  double handwheel_to_roadwheel(double handwheel) const {return handwheel * steer_ratio;}
  double roadwheel_to_handwheel(double roadwheel) const {return roadwheel / steer_ratio;}
};

/// How a rear longitudinal force beyond the friction circle is treated.
enum class CapacityPolicy
{
  kRaise,  // throw CapacityExceeded (library-direct use)
  kClamp,  // clamp |Fx| just inside the circle (closed-loop simulation)
};

struct ModelOptions
{
  double v_min{0.1};       // m/s, below this the slip kinematics are singular
  double kink_tol{1e-9};   // rad, band around the sliding slip angle treated as saturated
  CapacityPolicy capacity{CapacityPolicy::kRaise};
};

inline ModelOptions simulation_options()
{
  ModelOptions opts;
  opts.capacity = CapacityPolicy::kClamp;
  return opts;
}

struct VehicleState
{
  double r{0.0};      // yaw rate, rad/s
  double beta{0.0};   // sideslip at CoM, rad
  double V{0.0};      // CoM speed, m/s
  double delta{0.0};  // roadwheel angle, rad
  double tau{0.0};    // rear axle torque, N m

  bool operator==(const VehicleState &) const = default;
};

struct RateInput
{
  double delta_dot{0.0};  // rad/s
  double tau_dot{0.0};    // N m/s

  bool operator==(const RateInput &) const = default;
};

struct StateDerivative
{
  double r_dot{0.0};
  double beta_dot{0.0};
  double V_dot{0.0};
  double delta_dot{0.0};
  double tau_dot{0.0};
};

struct AxlePair
{
  double front{0.0};
  double rear{0.0};
};

struct TireState
{
  double alpha_f{0.0}, alpha_r{0.0};
  double Fyf{0.0}, Fyr{0.0};
  double Fxf{0.0}, Fxr{0.0};
  double Fzf{0.0}, Fzr{0.0};
  double alpha_sl_f{0.0}, alpha_sl_r{0.0};
  double Fy_max_f{0.0}, Fy_max_r{0.0};
};

/// Partials of (r_dot, beta_dot, V_dot): columns (r, beta, V) and (delta, tau).
struct VelocityJacobian
{
  Eigen::Matrix3d wrt_velocity{Eigen::Matrix3d::Zero()};
  Eigen::Matrix<double, 3, 2> wrt_actuators{Eigen::Matrix<double, 3, 2>::Zero()};
};

inline AxlePair normal_forces(const VehicleParams & p)
{
  const double wheelbase = p.a + p.b;
  return {p.m * p.g * p.b / wheelbase, p.m * p.g * p.a / wheelbase};
}

/// Rear-wheel drive: the front axle carries no longitudinal force.
inline AxlePair longitudinal_forces(double tau, const VehicleParams & p)
{
  return {0.0, tau / p.rw};
}

inline void check_speed(double V, const ModelOptions & opts)
{
  if (!(V > opts.v_min)) {
    throw SingularSpeed("speed " + std::to_string(V) + " m/s is at or below the model floor");
  }
}

inline AxlePair slip_angles(
  const VehicleState & x, const VehicleParams & p, const ModelOptions & opts = {})
{
  check_speed(x.V, opts);
  const double vx = x.V * std::cos(x.beta);
  const double vy = x.V * std::sin(x.beta);
  return {std::atan((vy + p.a * x.r) / vx) - x.delta, std::atan((vy - p.b * x.r) / vx)};
}

/// Lateral force capacity sqrt((mu Fz)^2 - gamma Fx^2).
inline double lateral_capacity(double Fz, double Fx, const VehicleParams & p)
{
  const double radicand = (p.mu * Fz) * (p.mu * Fz) - p.gamma * Fx * Fx;
  if (!(radicand > 0.0)) {
    throw CapacityExceeded("longitudinal force " + std::to_string(Fx) +
      " N leaves no lateral capacity");
  }
  return std::sqrt(radicand);
}

inline double sliding_slip_angle(double Fy_max, double Cc)
{
  return std::atan(3.0 * Fy_max / Cc);
}

/// Largest |Fx| the clamp policy lets through for a given normal load.
inline double clamped_longitudinal_limit(double Fz, const VehicleParams & p)
{
  return p.mu * Fz * (1.0 - 1e-6) / std::sqrt(p.gamma);
}

namespace detail
{

struct TireResponse
{
  double force{0.0};
  double d_alpha{0.0};     // dFy/dalpha
  double d_capacity{0.0};  // dFy/dFy_max at fixed alpha
  double alpha_sl{0.0};
};

inline double sign(double v) {return (v > 0.0) - (v < 0.0);}

inline TireResponse tire_response(double alpha, double Fy_max, double Cc, double kink_tol)
{
  TireResponse out;
  out.alpha_sl = sliding_slip_angle(Fy_max, Cc);
  const double mag = std::abs(alpha);
  if (mag >= out.alpha_sl) {
    out.force = -Fy_max * sign(alpha);
  } else {
    const double t = std::tan(alpha);
    const double at = std::abs(t);
    out.force = -Cc * t + Cc * Cc / (3.0 * Fy_max) * at * t -
      Cc * Cc * Cc / (27.0 * Fy_max * Fy_max) * t * t * t;
  }
  if (mag >= out.alpha_sl - kink_tol) {
    out.d_alpha = 0.0;
    out.d_capacity = -sign(alpha);
  } else {
    const double t = std::tan(alpha);
    const double at = std::abs(t);
    const double M = Fy_max;
    const double dfdt = -Cc + 2.0 * Cc * Cc * at / (3.0 * M) - Cc * Cc * Cc * t * t / (9.0 * M * M);
    out.d_alpha = dfdt * (1.0 + t * t);
    out.d_capacity = -Cc * Cc * at * t / (3.0 * M * M) +
      2.0 * Cc * Cc * Cc * t * t * t / (27.0 * M * M * M);
  }
  return out;
}

/// Rear longitudinal force after applying the capacity policy, and dFx/dtau.
inline std::pair<double, double> rear_drive_force(
  double tau, double Fzr, const VehicleParams & p, const ModelOptions & opts)
{
  const double Fx = tau / p.rw;
  if (opts.capacity == CapacityPolicy::kClamp) {
    const double lim = clamped_longitudinal_limit(Fzr, p);
    if (Fx > lim) {return {lim, 0.0};}
    if (Fx < -lim) {return {-lim, 0.0};}
  }
  return {Fx, 1.0 / p.rw};
}

struct Evaluation
{
  StateDerivative drift;
  TireState tires;
  VelocityJacobian jac;
};

inline Evaluation evaluate(
  const VehicleState & x, const VehicleParams & p, const ModelOptions & opts, bool with_jacobian)
{
  check_speed(x.V, opts);
  Evaluation ev;
  TireState & ts = ev.tires;

  const auto Fz = normal_forces(p);
  ts.Fzf = Fz.front;
  ts.Fzr = Fz.rear;
  ts.Fxf = 0.0;
  const auto [Fxr, dFxr_dtau] = rear_drive_force(x.tau, ts.Fzr, p, opts);
  ts.Fxr = Fxr;

  ts.Fy_max_f = lateral_capacity(ts.Fzf, ts.Fxf, p);
  ts.Fy_max_r = lateral_capacity(ts.Fzr, ts.Fxr, p);

  const double sb = std::sin(x.beta);
  const double cb = std::cos(x.beta);
  const double vx = x.V * cb;
  const double vy = x.V * sb;
  const double yf = vy + p.a * x.r;
  const double yr = vy - p.b * x.r;
  ts.alpha_f = std::atan(yf / vx) - x.delta;
  ts.alpha_r = std::atan(yr / vx);

  const auto front = tire_response(ts.alpha_f, ts.Fy_max_f, p.Cc_front, opts.kink_tol);
  const auto rear = tire_response(ts.alpha_r, ts.Fy_max_r, p.Cc_rear, opts.kink_tol);
  ts.Fyf = front.force;
  ts.Fyr = rear.force;
  ts.alpha_sl_f = front.alpha_sl;
  ts.alpha_sl_r = rear.alpha_sl;

  const double sd = std::sin(x.delta);
  const double cd = std::cos(x.delta);
  const double sdb = std::sin(x.delta - x.beta);
  const double cdb = std::cos(x.delta - x.beta);

  const double lat = ts.Fxf * sdb + ts.Fyf * cdb - ts.Fxr * sb + ts.Fyr * cb;
  const double lon = ts.Fxf * cdb - ts.Fyf * sdb + ts.Fxr * cb + ts.Fyr * sb;

  ev.drift.r_dot = (p.a * (ts.Fxf * sd + ts.Fyf * cd) - p.b * ts.Fyr) / p.Iz;
  ev.drift.beta_dot = lat / (p.m * x.V) - x.r;
  ev.drift.V_dot = lon / p.m;

  if (!with_jacobian) {
    return ev;
  }

  // Slip-angle partials through atan2(y, vx): d theta = (vx dy - y dvx) / (vx^2 + y^2).
  // Index order of the 5-vectors below: r, beta, V, delta, tau.
  using Vec5 = Eigen::Matrix<double, 5, 1>;
  const double df = vx * vx + yf * yf;
  const double dr = vx * vx + yr * yr;
  Vec5 dalpha_f;
  dalpha_f << vx * p.a / df, x.V * (x.V + p.a * x.r * sb) / df, -p.a * x.r * cb / df, -1.0, 0.0;
  Vec5 dalpha_r;
  dalpha_r << -vx * p.b / dr, x.V * (x.V - p.b * x.r * sb) / dr, p.b * x.r * cb / dr, 0.0, 0.0;

  // Rear capacity depends on tau through Fx.
  const double dcap_r_dFx = -p.gamma * ts.Fxr / ts.Fy_max_r;
  Vec5 dFxr = Vec5::Zero();
  dFxr(4) = dFxr_dtau;

  const Vec5 dFyf = front.d_alpha * dalpha_f;
  const Vec5 dFyr = rear.d_alpha * dalpha_r + rear.d_capacity * dcap_r_dFx * dFxr;

  Vec5 e_beta = Vec5::Zero();
  e_beta(1) = 1.0;
  Vec5 e_delta = Vec5::Zero();
  e_delta(3) = 1.0;
  const Vec5 d_db = e_delta - e_beta;  // d(delta - beta)

  const Vec5 d_rdot =
    (p.a * ((ts.Fxf * cd - ts.Fyf * sd) * e_delta + cd * dFyf) - p.b * dFyr) / p.Iz;

  const Vec5 d_lat = (ts.Fxf * cdb - ts.Fyf * sdb) * d_db + cdb * dFyf - sb * dFxr -
    ts.Fxr * cb * e_beta + cb * dFyr - ts.Fyr * sb * e_beta;
  Vec5 d_bdot = d_lat / (p.m * x.V);
  d_bdot(2) -= lat / (p.m * x.V * x.V);
  d_bdot(0) -= 1.0;

  const Vec5 d_lon = -(ts.Fxf * sdb + ts.Fyf * cdb) * d_db - sdb * dFyf + cb * dFxr -
    ts.Fxr * sb * e_beta + sb * dFyr + ts.Fyr * cb * e_beta;
  const Vec5 d_vdot = d_lon / p.m;

  for (int j = 0; j < 3; ++j) {
    ev.jac.wrt_velocity(0, j) = d_rdot(j);
    ev.jac.wrt_velocity(1, j) = d_bdot(j);
    ev.jac.wrt_velocity(2, j) = d_vdot(j);
  }
  for (int j = 0; j < 2; ++j) {
    ev.jac.wrt_actuators(0, j) = d_rdot(3 + j);
    ev.jac.wrt_actuators(1, j) = d_bdot(3 + j);
    ev.jac.wrt_actuators(2, j) = d_vdot(3 + j);
  }
  return ev;
}

}  // namespace detail

/// Lateral tire force: cubic in tan(alpha) below the sliding slip angle, saturated above.
/// At exactly |alpha| = alpha_sl the saturated value is returned (both branches agree).
inline double lateral_force(
  double alpha, double Fz, double Fx, double Cc, const VehicleParams & p)
{
  const double cap = lateral_capacity(Fz, Fx, p);
  return detail::tire_response(alpha, cap, Cc, 0.0).force;
}

/// dFy/dalpha of lateral_force, saturated branch one-sided within kink_tol.
inline double lateral_force_slope(
  double alpha, double Fz, double Fx, double Cc, const VehicleParams & p, double kink_tol = 1e-9)
{
  const double cap = lateral_capacity(Fz, Fx, p);
  return detail::tire_response(alpha, cap, Cc, kink_tol).d_alpha;
}

inline TireState tire_state(
  const VehicleState & x, const VehicleParams & p, const ModelOptions & opts = {})
{
  return detail::evaluate(x, p, opts, false).tires;
}

/// f(x) + g(x) u.
inline StateDerivative state_derivative(
  const VehicleState & x, const RateInput & u, const VehicleParams & p,
  const ModelOptions & opts = {})
{
  StateDerivative d = detail::evaluate(x, p, opts, false).drift;
  d.delta_dot = u.delta_dot;
  d.tau_dot = u.tau_dot;
  return d;
}

inline VelocityJacobian velocity_jacobian(
  const VehicleState & x, const VehicleParams & p, const ModelOptions & opts = {})
{
  return detail::evaluate(x, p, opts, true).jac;
}

}  // namespace driftguard

#endif  // DRIFTGUARD__VEHICLE_MODEL_HPP_
