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
/// \brief Elliptical barrier on the sideslip / yaw-rate plane and its exponential-CBF constraint.

#ifndef DRIFTGUARD__ECBF_HPP_
#define DRIFTGUARD__ECBF_HPP_

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "driftguard/errors.hpp"
#include "driftguard/vehicle_model.hpp"

namespace driftguard
{

/// h(x) = d - (a beta^2 + b beta r + c r^2) with exponential-CBF pole gains.
struct EllipseBarrier
{
  double a{1.0};  // 1/rad^2
  double b{0.0};  // s/rad^2
  double c{1.0};  // s^2/rad^2
  double d{1.0};
  double alpha0{4.0};  // 1/s
  double alpha1{8.0};  // 1/s

  double form(double beta, double r) const {return a * beta * beta + b * beta * r + c * r * r;}

  double area() const
  {
    return 2.0 * std::numbers::pi * d / std::sqrt(4.0 * a * c - b * b);
  }

  void validate() const
  {
    if (!(a > 0.0 && c > 0.0 && d > 0.0 && 4.0 * a * c - b * b > 0.0)) {
      throw ConfigError("ellipse coefficients do not define a bounded positive-definite form");
    }
    if (!(alpha0 > 0.0 && alpha1 > 0.0)) {
      throw ConfigError("ECBF gains alpha0, alpha1 must be > 0");
    }
  }

  /// Same set with d rescaled to 1.
  EllipseBarrier normalized() const
  {
    EllipseBarrier out = *this;
    out.a /= d;
    out.b /= d;
    out.c /= d;
    out.d = 1.0;
    return out;
  }
};

struct BarrierEvaluation
{
  double h{0.0};
  double lf_h{0.0};
  double lf2_h{0.0};
  Eigen::Vector2d lglf_h{Eigen::Vector2d::Zero()};  // coefficients of (delta_dot, tau_dot)
  StateDerivative drift;                           // f(x) used for the evaluation
};

inline double barrier(double beta, double r, const EllipseBarrier & e)
{
  return e.d - e.form(beta, r);
}

inline double barrier(const VehicleState & x, const EllipseBarrier & e)
{
  return barrier(x.beta, x.r, e);
}

/// (dh/dbeta, dh/dr).
inline Eigen::Vector2d barrier_gradient(double beta, double r, const EllipseBarrier & e)
{
  return {-(2.0 * e.a * beta + e.b * r), -(e.b * beta + 2.0 * e.c * r)};
}

/// Lf h. The barrier depends on (beta, r) only, so Lg h is identically zero.
inline double lie1(
  const VehicleState & x, const EllipseBarrier & e, const VehicleParams & p,
  const ModelOptions & opts = {})
{
  const StateDerivative f = state_derivative(x, {}, p, opts);
  const Eigen::Vector2d grad = barrier_gradient(x.beta, x.r, e);
  return grad(0) * f.beta_dot + grad(1) * f.r_dot;
}

/// Second Lie derivative split into the drift part and the gains on the rate inputs.
inline BarrierEvaluation lie2(
  const VehicleState & x, const EllipseBarrier & e, const VehicleParams & p,
  const ModelOptions & opts = {})
{
  const auto ev = detail::evaluate(x, p, opts, true);
  const StateDerivative & f = ev.drift;
  const Eigen::Vector2d grad = barrier_gradient(x.beta, x.r, e);
  const double h_beta = grad(0);
  const double h_r = grad(1);

  BarrierEvaluation out;
  out.drift = f;
  out.h = barrier(x, e);
  out.lf_h = h_beta * f.beta_dot + h_r * f.r_dot;

  // Time derivatives of (r_dot, beta_dot) along f: J_v * (r_dot, beta_dot, V_dot).
  const Eigen::Vector3d vel_rates(f.r_dot, f.beta_dot, f.V_dot);
  const Eigen::Vector3d along_f = ev.jac.wrt_velocity * vel_rates;
  const double r_ddot_f = along_f(0);
  const double beta_ddot_f = along_f(1);

  out.lf2_h = -(2.0 * e.a * f.beta_dot * f.beta_dot + 2.0 * e.b * f.beta_dot * f.r_dot +
    2.0 * e.c * f.r_dot * f.r_dot) + h_beta * beta_ddot_f + h_r * r_ddot_f;

  for (int j = 0; j < 2; ++j) {
    out.lglf_h(j) = h_beta * ev.jac.wrt_actuators(1, j) + h_r * ev.jac.wrt_actuators(0, j);
  }
  return out;
}

/// Coefficients p_0..p_{k-1} of prod_i (lambda + alpha_i) = lambda^k + p_{k-1} lambda^{k-1} + ... + p_0.
inline std::vector<double> vieta(std::span<const double> alphas)
{
  if (alphas.empty()) {
    throw EmptyPoles("at least one pole gain is required");
  }
  // poly[i] is the coefficient of lambda^i; start from the constant 1.
  std::vector<double> poly{1.0};
  for (const double alpha : alphas) {
    if (!(alpha > 0.0)) {
      throw ConfigError("pole gains must be > 0");
    }
    std::vector<double> next(poly.size() + 1, 0.0);
    for (std::size_t i = 0; i < poly.size(); ++i) {
      next[i] += alpha * poly[i];
      next[i + 1] += poly[i];
    }
    poly = std::move(next);
  }
  poly.pop_back();  // monic leading term
  return poly;
}

/// Chain-of-integrators output system for a relative-degree-k barrier, with
/// the pole-placement feedback mu = -P^T eta.
struct EcbfSystem
{
  Eigen::MatrixXd F;
  Eigen::VectorXd G;
  Eigen::RowVectorXd C;
  Eigen::VectorXd P;

  int order() const {return static_cast<int>(F.rows());}

  Eigen::MatrixXd closed_loop() const {return F - G * P.transpose();}

  /// C exp((F - G P^T) t) eta0: the lower bound on h(x(t)) when the ECBF condition holds.
  double decay_bound(const Eigen::VectorXd & eta0, double t) const
  {
    const Eigen::MatrixXd A = closed_loop() * t;
    return (C * A.exp() * eta0)(0);
  }
};

inline EcbfSystem make_ecbf_system(std::span<const double> alphas)
{
  const std::vector<double> p = vieta(alphas);
  const int k = static_cast<int>(alphas.size());
  EcbfSystem sys;
  sys.F = Eigen::MatrixXd::Zero(k, k);
  for (int i = 0; i + 1 < k; ++i) {
    sys.F(i, i + 1) = 1.0;
  }
  sys.G = Eigen::VectorXd::Zero(k);
  sys.G(k - 1) = 1.0;
  sys.C = Eigen::RowVectorXd::Zero(k);
  sys.C(0) = 1.0;
  sys.P = Eigen::Map<const Eigen::VectorXd>(p.data(), k);
  return sys;
}

/// Affine constraint g . (delta_dot, tau_dot) + eps >= rhs.
struct ConstraintRow
{
  double g_delta{0.0};
  double g_tau{0.0};
  double rhs{0.0};
};

inline ConstraintRow constraint_row(const BarrierEvaluation & be, const EllipseBarrier & e)
{
  const double p0 = e.alpha0 * e.alpha1;
  const double p1 = e.alpha0 + e.alpha1;
  return {be.lglf_h(0), be.lglf_h(1), -(be.lf2_h + p0 * be.h + p1 * be.lf_h)};
}

inline ConstraintRow constraint_row(
  const VehicleState & x, const EllipseBarrier & e, const VehicleParams & p,
  const ModelOptions & opts = {})
{
  return constraint_row(lie2(x, e, p, opts), e);
}

/// nu_1 = h_dot + alpha0 h; the first higher-order safe-set function.
inline double nu1(const BarrierEvaluation & be, const EllipseBarrier & e)
{
  return be.lf_h + e.alpha0 * be.h;
}

/// Initial-condition requirement of the pole-placement result, evaluated at u = 0:
/// -alpha_0 <= nu0_dot / nu0 and -alpha_1 <= nu1_dot / nu1.
struct InitialConditionCheck
{
  double nu0{0.0};
  double nu1{0.0};
  double nu0_dot{0.0};
  double nu1_dot{0.0};
  bool satisfied{true};
  std::string message;
};

inline InitialConditionCheck initial_condition_check(
  const BarrierEvaluation & be, const EllipseBarrier & e)
{
  InitialConditionCheck out;
  out.nu0 = be.h;
  out.nu0_dot = be.lf_h;
  out.nu1 = nu1(be, e);
  out.nu1_dot = be.lf2_h + e.alpha0 * be.lf_h;
  // Multiply through by nu_i to avoid dividing by a vanishing value.
  const bool first = out.nu0_dot + e.alpha0 * out.nu0 >= 0.0;
  const bool second = out.nu1_dot + e.alpha1 * out.nu1 >= 0.0;
  out.satisfied = out.nu0 >= 0.0 && first && second;
  if (!out.satisfied) {
    out.message = "initial state violates the ECBF pole condition (nu0=" +
      std::to_string(out.nu0) + ", nu1=" + std::to_string(out.nu1) + ")";
  }
  return out;
}

}  // namespace driftguard

#endif  // DRIFTGUARD__ECBF_HPP_
