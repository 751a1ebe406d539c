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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <map>
#include <string>

#include "driftguard/phase_envelope.hpp"
#include "driftguard/simulator.hpp"
#include "oracles.hpp"

using namespace driftguard;

namespace
{

const EllipseBarrier & fitted()
{
  static const EllipseBarrier e = fit_mprel(7.0, VehicleParams{}).ellipse;
  return e;
}

SimConfig quiet_config()
{
  SimConfig cfg;
  cfg.filter.measure_time = false;
  return cfg;
}

// Scenario runs are the slowest part of the suite, so each one is simulated once.
const TraceRecord & scenario_run(const std::string & name, bool filter_on)
{
  static std::map<std::pair<std::string, bool>, TraceRecord> cache;
  const auto key = std::make_pair(name, filter_on);
  auto it = cache.find(key);
  if (it == cache.end()) {
    VehicleParams p;
    Scenario sc = make_scenario(name, p);
    sc.filter_on = filter_on;
    TraceRecord rec = run_scenario(sc, fitted(), p, quiet_config());
    if (name == "transition") {
      rec.sustained_ccw = sustained_counterclockwise(rec, sc.duration, 2.0);
    }
    it = cache.emplace(key, std::move(rec)).first;
  }
  return it->second;
}

TEST(Rk4, StraightLineIsAFixedPoint)
{
  VehicleParams p;
  const VehicleState x{0.0, 0.0, 7.0, 0.0, 0.0};
  const VehicleState y = integrate_rk4(x, {}, p, 1e-3);
  EXPECT_EQ(y.r, 0.0);
  EXPECT_EQ(y.beta, 0.0);
  EXPECT_EQ(y.V, 7.0);
}

TEST(Rk4, ActuatorChannelsAreExactRamps)
{
  VehicleParams p;
  const VehicleState x{0.1, -0.1, 7.0, 0.05, 100.0};
  const VehicleState y = integrate_rk4(x, {0.5, 400.0}, p, 1e-3);
  EXPECT_DOUBLE_EQ(y.delta, 0.05 + 0.5e-3);
  EXPECT_DOUBLE_EQ(y.tau, 100.0 + 0.4);
}

TEST(Rk4, FourthOrderSelfConvergence)
{
  VehicleParams p;
  // Steps large enough that the differences sit well above roundoff.
  const VehicleState x0{0.1, -0.02, 7.0, 0.05, 100.0};
  auto run = [&](double dt) {
      VehicleState x = x0;
      const int n = static_cast<int>(std::llround(1.0 / dt));
      for (int i = 0; i < n; ++i) {x = integrate_rk4(x, {}, p, dt);}
      return x;
    };
  const VehicleState a = run(2e-2), b = run(1e-2), c = run(5e-3);
  const double e1 = std::hypot(a.r - b.r, a.beta - b.beta);
  const double e2 = std::hypot(b.r - c.r, b.beta - c.beta);
  EXPECT_GT(e1 / e2, 12.0);
  EXPECT_LT(e1 / e2, 20.0);
}

TEST(Equilibrium, SweepConvergesAndIsUnstable)
{
  VehicleParams p;
  for (double beta = -0.6; beta <= -0.2 + 1e-12; beta += 0.05) {
    const DriftEquilibrium eq = find_drift_equilibrium(beta, 7.0, p);
    EXPECT_LE(eq.residual, 1e-8) << "beta=" << beta;
    EXPECT_EQ(eq.state.beta, beta);
    const auto d = oracle::derivative(eq.state, p);
    for (const auto v : d) {EXPECT_LE(std::abs(static_cast<double>(v)), 1e-7);}
    const auto ev = frozen_speed_eigenvalues(eq.state, p);
    EXPECT_GT(std::max(ev(0).real(), ev(1).real()), 0.0) << "beta=" << beta;
    // Counter-steered drift: yaw opposes sideslip, wheel points into the slide.
    EXPECT_GT(eq.state.r, 0.0);
    EXPECT_LT(eq.delta_eq, 0.0);
    EXPECT_GT(eq.tau_eq, 0.0);
  }
}

TEST(Equilibrium, MirrorPairs)
{
  VehicleParams p;
  const DriftEquilibrium a = find_drift_equilibrium(-0.44, 7.0, p);
  const DriftEquilibrium b = find_drift_equilibrium(0.44, 7.0, p);
  EXPECT_NEAR(a.state.r, -b.state.r, 1e-8);
  EXPECT_NEAR(a.delta_eq, -b.delta_eq, 1e-8);
  EXPECT_NEAR(a.tau_eq, b.tau_eq, 1e-4);
  EXPECT_NEAR(a.state.r, 0.393, 2e-3);
  EXPECT_NEAR(a.delta_eq, -0.2986, 1e-3);
  EXPECT_NEAR(a.tau_eq, 497.0, 2.0);
}

TEST(Equilibrium, ZeroSideslipIsStraightLine)
{
  VehicleParams p;
  const DriftEquilibrium eq = find_drift_equilibrium(0.0, 7.0, p);
  EXPECT_NEAR(eq.state.r, 0.0, 1e-10);
  EXPECT_NEAR(eq.delta_eq, 0.0, 1e-10);
  EXPECT_NEAR(eq.tau_eq, 0.0, 1e-6);
}

TEST(Scenario, FilterKeepsEveryRunSafe)
{
  for (const auto & name : scenario_names()) {
    const TraceRecord & rec = scenario_run(name, true);
    EXPECT_FALSE(rec.spin_out) << name;
    EXPECT_FALSE(rec.truncated) << name << ": " << rec.fault;
    EXPECT_EQ(rec.samples.size(), 10000u) << name;
    EXPECT_GE(rec.metrics.min_h, -0.02) << name;
    EXPECT_GT(rec.metrics.active_ticks, 0u) << name;
    EXPECT_TRUE(rec.metrics.has_worst_tick) << name;
    // Torque comes down and the steering moves toward countersteer at the worst tick.
    EXPECT_GT(rec.metrics.max_torque_reduction, 0.0) << name;
    EXPECT_LT(rec.metrics.steering_at_worst_tick, 0.0) << name;
  }
}

TEST(Scenario, BypassSpinsOut)
{
  for (const auto & name : scenario_names()) {
    const TraceRecord & rec = scenario_run(name, false);
    EXPECT_TRUE(rec.bypass) << name;
    EXPECT_TRUE(rec.spin_out) << name;
    EXPECT_GT(std::abs(rec.final_state.beta), std::numbers::pi / 2.0) << name;
    EXPECT_EQ(rec.metrics.active_ticks, 0u) << name;
  }
}

TEST(Scenario, TransitionHoldsCounterclockwiseDrift)
{
  const TraceRecord & rec = scenario_run("transition", true);
  ASSERT_TRUE(rec.sustained_ccw.has_value());
  EXPECT_TRUE(*rec.sustained_ccw);
  EXPECT_FALSE(*scenario_run("transition", false).sustained_ccw);
}

TEST(Scenario, MetricsRecomputeFromSamples)
{
  VehicleParams p;
  for (const auto & name : scenario_names()) {
    const TraceRecord & rec = scenario_run(name, true);
    double min_h = barrier(rec.final_state, fitted());
    double worst = -1e300, steer = 0.0;
    std::size_t active = 0;
    for (const auto & s : rec.samples) {
      const double h = fitted().d - fitted().a * s.state.beta * s.state.beta -
        fitted().b * s.state.beta * s.state.r - fitted().c * s.state.r * s.state.r;
      EXPECT_NEAR(s.h, h, 1e-12);
      min_h = std::min(min_h, h);
      if (s.active) {
        ++active;
        if (s.command.tau_d - s.tau_cmd > worst) {
          worst = s.command.tau_d - s.tau_cmd;
          steer = (s.delta_cmd - s.command.delta_d) / p.steer_ratio;
        }
      }
    }
    EXPECT_NEAR(rec.metrics.min_h, min_h, 1e-12) << name;
    EXPECT_EQ(rec.metrics.active_ticks, active) << name;
    EXPECT_NEAR(rec.metrics.max_torque_reduction, worst, 1e-9) << name;
    EXPECT_NEAR(rec.metrics.steering_at_worst_tick, steer, 1e-9) << name;
  }
}

TEST(Scenario, StatesFollowTheRecordedCommands)
{
  VehicleParams p;
  const TraceRecord & rec = scenario_run("initiation", true);
  // Replaying the recorded actuator commands through RK4 reproduces the trajectory exactly.
  VehicleState x = rec.samples.front().state;
  for (std::size_t k = 0; k + 1 < rec.samples.size(); ++k) {
    const auto & s = rec.samples[k];
    const RateInput u{(s.delta_cmd - x.delta) / rec.dt, (s.tau_cmd - x.tau) / rec.dt};
    x = integrate_rk4(x, u, p, rec.dt);
    ASSERT_EQ(std::memcmp(&x, &rec.samples[k + 1].state, sizeof(VehicleState)), 0) << k;
  }
  for (const auto & s : rec.samples) {
    EXPECT_LE(std::abs(s.state.delta), p.delta_max + 1e-12);
  }
}

TEST(Scenario, SpeedStaysNearDesignValue)
{
  for (const auto & name : scenario_names()) {
    const TraceRecord & rec = scenario_run(name, true);
    for (const auto & s : rec.samples) {
      EXPECT_GT(s.state.V, 0.1) << name;
    }
  }
}

TEST(Scenario, Deterministic)
{
  VehicleParams p;
  const Scenario sc = make_scenario("equilibrium", p, 7.0, 2.0);
  const TraceRecord a = run_scenario(sc, fitted(), p, quiet_config());
  const TraceRecord b = run_scenario(sc, fitted(), p, quiet_config());
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t k = 0; k < a.samples.size(); ++k) {
    ASSERT_EQ(std::memcmp(&a.samples[k].state, &b.samples[k].state, sizeof(VehicleState)), 0);
  }
}

TEST(Scenario, UnknownNameAndBadScript)
{
  VehicleParams p;
  EXPECT_THROW(make_scenario("donut", p), ConfigError);
  Scenario sc = make_scenario("initiation", p);
  sc.script.segments.front().t_start = 1.0;
  EXPECT_THROW(sc.validate(), ConfigError);
}

TEST(Script, PiecewiseConstantAndClamped)
{
  VehicleParams p;
  DriverScript s;
  s.segments = {{0.0, 1.0, 100.0}, {2.0, 50.0, 200.0}};
  EXPECT_DOUBLE_EQ(s.at(1.0, p).delta_d, p.handwheel_to_roadwheel(1.0));
  EXPECT_EQ(s.at(1.0, p).tau_d, 100.0);
  EXPECT_DOUBLE_EQ(s.at(2.0, p).delta_d, p.delta_max);
  EXPECT_EQ(s.at(3.0, p).tau_d, 200.0);
}

}  // namespace
