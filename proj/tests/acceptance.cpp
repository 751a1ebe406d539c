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

// Acceptance report: one PASS/FAIL line per criterion, exit status 0 only if all pass.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "driftguard/ecbf.hpp"
#include "driftguard/phase_envelope.hpp"
#include "driftguard/safety_filter.hpp"
#include "driftguard/simulator.hpp"
#include "driftguard/teleop/client.hpp"
#include "driftguard/teleop/server.hpp"
#include "driftguard/teleop/session.hpp"
#include "oracles.hpp"

using namespace driftguard;

namespace
{

struct Outcome
{
  bool pass{false};
  std::string detail;
};

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0)
{
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::string fmt(const char * f, double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const EllipseBarrier & fitted()
{
  static const EllipseBarrier e = fit_mprel(7.0, VehicleParams{}).ellipse;
  return e;
}

Outcome tire_continuity()
{
  const auto t0 = clock_type::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> C(2e4, 2e5), mu(0.1, 1.2), Fz(1000.0, 15000.0),
  frac(-0.95, 0.95);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    VehicleParams p;
    p.mu = mu(rng);
    const double fz = Fz(rng);
    const double fx = frac(rng) * p.mu * fz / std::sqrt(p.gamma);
    const double c = C(rng);
    const double fmax = lateral_capacity(fz, fx, p);
    const double asl = sliding_slip_angle(fmax, c);
    for (const double s : {1.0, -1.0}) {
      const double in = s * asl * (1.0 - 1e-13), out = s * asl * (1.0 + 1e-13);
      const double dv = std::abs(lateral_force(in, fz, fx, c, p) - lateral_force(out, fz, fx, c, p));
      const double ds = std::abs(lateral_force_slope(in, fz, fx, c, p, 0.0) -
        lateral_force_slope(out, fz, fx, c, p, 0.0));
      worst = std::max({worst, dv / fmax, ds / fmax});
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-9 && t < 1.0,
    "max jump " + fmt("%.2e", worst) + " * Fy_max over 100 draws, " + fmt("%.3f", t) + " s"};
}

Outcome derivative_oracles()
{
  const auto t0 = clock_type::now();
  VehicleParams p;
  const EllipseBarrier & e = fitted();
  std::mt19937_64 rng(202);
  int bad = 0;
  const std::array<double, 5> scale{1.0, 1.0, 10.0, 1.0, 1000.0};
  for (int i = 0; i < 1000; ++i) {
    const VehicleState x = oracle::random_state(rng, p);
    // lie1 along the drift.
    const auto f = state_derivative(x, {}, p);
    const double s = 1e-6;
    const double fd_lie = (barrier(x.beta + s * f.beta_dot, x.r + s * f.r_dot, e) -
      barrier(x.beta - s * f.beta_dot, x.r - s * f.r_dot, e)) / (2 * s);
    bad += !oracle::close_rel(lie1(x, e, p), fd_lie, 1e-4, 1e-6);
    // Velocity Jacobian, every column.
    const VelocityJacobian J = velocity_jacobian(x, p);
    for (int j = 0; j < 5; ++j) {
      const double h = 1e-6 * scale[static_cast<std::size_t>(j)];
      auto shifted = [&](double d) {
          VehicleState y = x;
          double * c[5] = {&y.r, &y.beta, &y.V, &y.delta, &y.tau};
          *c[j] += d;
          return state_derivative(y, {}, p);
        };
      const auto fp = shifted(h), fm = shifted(-h);
      const double fd[3] = {(fp.r_dot - fm.r_dot) / (2 * h), (fp.beta_dot - fm.beta_dot) / (2 * h),
        (fp.V_dot - fm.V_dot) / (2 * h)};
      for (int row = 0; row < 3; ++row) {
        const double an = j < 3 ? J.wrt_velocity(row, j) : J.wrt_actuators(row, j - 3);
        bad += !oracle::close_rel(an, fd[row], 1e-4, 1e-5 / scale[static_cast<std::size_t>(j)]);
      }
    }
    // Input-gain row of lie2 vs directional differences of lie1.
    const BarrierEvaluation be = lie2(x, e, p);
    VehicleState xp = x, xm = x;
    xp.delta += 1e-6;
    xm.delta -= 1e-6;
    bad += !oracle::close_rel(be.lglf_h(0), (lie1(xp, e, p) - lie1(xm, e, p)) / 2e-6, 1e-4, 1e-6);
    xp = x;
    xm = x;
    xp.tau += 1e-3;
    xm.tau -= 1e-3;
    bad += !oracle::close_rel(be.lglf_h(1), (lie1(xp, e, p) - lie1(xm, e, p)) / 2e-3, 1e-4, 1e-6);
  }
  const double t = seconds_since(t0);
  return {bad == 0 && t < 10.0,
    std::to_string(bad) + " mismatches over 1000 states, " + fmt("%.3f", t) + " s"};
}

Outcome qp_exactness()
{
  const auto t0 = clock_type::now();
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> logw(-7.0, 4.0);
  std::bernoulli_distribution bounded(0.6);
  double worst = 0.0;
  int passthrough_bad = 0, passthrough = 0;
  for (int n = 0; n < 100000; ++n) {
    const ConstraintRow row{unit(rng) * 3.0, unit(rng) * 1e-3, unit(rng) * 20.0};
    const RateInput ud{unit(rng) * 5.0, unit(rng) * 3000.0};
    const QpWeights w{std::pow(10.0, logw(rng) / 3.0), std::pow(10.0, logw(rng)),
      std::pow(10.0, 1.0 + logw(rng) / 2.0)};
    RateBounds b;
    if (bounded(rng)) {
      const double c = unit(rng) * 3.0, half = 0.1 + std::abs(unit(rng)) * 3.0;
      b = {c - half, c + half};
    }
    RateBounds bt;
    if (bounded(rng)) {
      const double c = unit(rng) * 2000.0, half = 10.0 + std::abs(unit(rng)) * 2000.0;
      bt = {c - half, c + half};
    }
    const QpSolution sol = solve_qp(row, ud, w, b, bt);
    const auto ref = oracle::enumerate_kkt(row, ud, w, {b.lo, bt.lo}, {b.hi, bt.hi});
    worst = std::max({worst,
      std::abs(sol.rates.delta_dot - ref.u(0)) / std::max(1.0, std::abs(ref.u(0))),
      std::abs(sol.rates.tau_dot - ref.u(1)) / std::max(1.0, std::abs(ref.u(1))),
      std::abs(sol.eps - ref.u(2)) / std::max(1.0, std::abs(ref.u(2)))});
    if (!sol.active) {
      ++passthrough;
      const double expect_d = std::clamp(ud.delta_dot, b.lo, b.hi);
      const double expect_t = std::clamp(ud.tau_dot, bt.lo, bt.hi);
      passthrough_bad += !(sol.rates.delta_dot == expect_d && sol.rates.tau_dot == expect_t &&
        sol.eps == 0.0);
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-8 && passthrough_bad == 0 && t < 30.0,
    "max coordinate error " + fmt("%.2e", worst) + " over 1e5 instances, " +
    std::to_string(passthrough) + " passthroughs bitwise (" + std::to_string(passthrough_bad) +
    " differ), " + fmt("%.2f", t) + " s"};
}

Outcome vieta_check()
{
  const std::vector<double> a{4.0, 8.0};
  const auto p = vieta(a);
  bool ok = p.size() == 2 && p[0] == 32.0 && p[1] == 12.0;
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> root(0.2, 10.0);
  double worst = 0.0;
  for (int k = 1; k <= 6; ++k) {
    for (int trial = 0; trial < 200; ++trial) {
      std::vector<double> r(static_cast<std::size_t>(k));
      bool spaced = false;
      while (!spaced) {
        for (auto & v : r) {v = root(rng);}
        std::sort(r.begin(), r.end());
        spaced = true;
        for (std::size_t i = 1; i < r.size(); ++i) {spaced = spaced && r[i] - r[i - 1] >= 0.5;}
      }
      const EcbfSystem sys = make_ecbf_system(r);
      Eigen::EigenSolver<Eigen::MatrixXd> es(sys.closed_loop());
      std::vector<double> back;
      for (int i = 0; i < k; ++i) {
        std::complex<long double> z(es.eigenvalues()(i).real(), es.eigenvalues()(i).imag());
        for (int it = 0; it < 50; ++it) {
          std::complex<long double> val = 1, der = 0;
          for (int j = k - 1; j >= 0; --j) {
            der = der * z + val;
            val = val * z + static_cast<long double>(sys.P(j));
          }
          if (std::abs(der) == 0) {break;}
          z -= val / der;
        }
        back.push_back(-static_cast<double>(z.real()));
      }
      std::sort(back.begin(), back.end());
      for (std::size_t i = 0; i < r.size(); ++i) {
        worst = std::max(worst, std::abs(back[i] - r[i]) / r[i]);
      }
    }
  }
  ok = ok && worst <= 1e-10;
  return {ok, "k=2 gives p0=" + fmt("%g", p[0]) + " p1=" + fmt("%g", p[1]) +
    ", max relative root error " + fmt("%.2e", worst) + " for k<=6"};
}

Outcome envelope_containment()
{
  const auto t0 = clock_type::now();
  VehicleParams p;
  const Envelope env = fit_mprel(7.0, p);
  const double t = seconds_since(t0);
  const bool in = env.profile.size() == 720 && contained(env.ellipse, env.profile);
  const EllipseBarrier & e = env.ellipse;
  return {in && t < 60.0,
    "a=" + fmt("%.6f", e.a) + " b=" + fmt("%.6f", e.b) + " c=" + fmt("%.6f", e.c) +
    " area=" + fmt("%.4f", e.area()) + ", inside on 720/720 rays: " + (in ? "yes" : "no") +
    ", " + fmt("%.2f", t) + " s"};
}

Outcome safety_reproduction()
{
  const auto t0 = clock_type::now();
  VehicleParams p;
  SimConfig cfg;
  cfg.filter.measure_time = false;
  bool ok = true;
  std::string detail;
  for (const auto & name : scenario_names()) {
    Scenario sc = make_scenario(name, p);
    const TraceRecord on = run_scenario(sc, fitted(), p, cfg);
    sc.filter_on = false;
    const TraceRecord off = run_scenario(sc, fitted(), p, cfg);
    const TraceMetrics & m = on.metrics;
    const bool safe = !on.spin_out && !on.truncated && m.min_h >= -cfg.h_tol;
    const bool directions = m.has_worst_tick && m.max_torque_reduction > 0.0 &&
      m.steering_at_worst_tick < 0.0;
    ok = ok && safe && directions && off.spin_out;
    detail += name + ": min_h " + fmt("%.1e", m.min_h) + ", bypass spin " +
      (off.spin_out ? "yes" : "no") + ", torque -" + fmt("%.0f", m.max_torque_reduction) +
      " N m, steer " + fmt("%+.3f", m.steering_at_worst_tick) + " rad; ";
  }
  const double t = seconds_since(t0);
  ok = ok && t < 30.0;
  return {ok, detail + fmt("%.2f", t) + " s"};
}

Outcome equilibrium_solver()
{
  VehicleParams p;
  double worst = 0.0, min_growth = 1e9;
  bool ok = true;
  int n = 0;
  for (int i = 0; i <= 8; ++i) {
    const double beta = -0.6 + 0.05 * i;
    const DriftEquilibrium eq = find_drift_equilibrium(beta, 7.0, p);
    const auto ev = frozen_speed_eigenvalues(eq.state, p);
    const double growth = std::max(ev(0).real(), ev(1).real());
    worst = std::max(worst, eq.residual);
    min_growth = std::min(min_growth, growth);
    ok = ok && eq.residual <= 1e-8 && growth > 0.0;
    ++n;
  }
  return {ok, std::to_string(n) + " equilibria, max residual " + fmt("%.1e", worst) +
    ", smallest unstable eigenvalue " + fmt("%+.3f", min_growth) + " 1/s"};
}

Outcome performance_budget()
{
  VehicleParams p;
  const EllipseBarrier & e = fitted();
  FilterConfig cfg;
  cfg.measure_time = false;
  std::mt19937_64 rng(505);
  std::vector<VehicleState> pool;
  for (int i = 0; i < 1024; ++i) {
    VehicleState x = oracle::random_state(rng, p);
    x.V = 7.0;
    x.delta = std::clamp(x.delta, -p.delta_max, p.delta_max);
    pool.push_back(x);
  }
  std::vector<ConstraintRow> rows;
  for (const auto & x : pool) {rows.push_back(constraint_row(x, e, p));}
  const int N = 1000000;
  const DriverCommand cmd{0.1, 800.0, 0.0};
  const RateInput desired{1.5, 1500.0};
  const QpWeights w = weights_of(cfg);
  const ModelOptions sim = simulation_options();
  double sink = 0.0;

  auto t0 = clock_type::now();
  for (int i = 0; i < N; ++i) {
    const auto & x = pool[static_cast<std::size_t>(i) & 1023];
    sink += solve_qp(rows[static_cast<std::size_t>(i) & 1023], desired, w, angle_rate_bounds(x, p, cfg)).eps;
  }
  const double qp = seconds_since(t0) / N;

  t0 = clock_type::now();
  for (int i = 0; i < N; ++i) {
    sink += step(cmd, pool[static_cast<std::size_t>(i) & 1023], e, p, cfg, sim).tau_cmd;
  }
  const double full = seconds_since(t0) / N;

  t0 = clock_type::now();
  for (int i = 0; i < N; ++i) {
    sink += integrate_rk4(pool[static_cast<std::size_t>(i) & 1023], desired, p, 1e-3, sim).r;
  }
  const double rk4 = seconds_since(t0) / N;
  const bool ok = std::isfinite(sink) && qp < 5e-6 && full < 50e-6 && rk4 < 5e-6;
  return {ok, "QP solve " + fmt("%.3f", qp * 1e6) + " us, filter step " + fmt("%.3f", full * 1e6) +
    " us, RK4 " + fmt("%.3f", rk4 * 1e6) + " us (means over 1e6)"};
}

Outcome batch_live_equivalence()
{
  using namespace driftguard::teleop;
  VehicleParams p;
  double worst = 0.0;
  std::size_t frames = 0;
  bool ok = true;
  for (const auto & name : scenario_names()) {
    SessionConfig sc;
    sc.filter.measure_time = false;
    sc.scenario = name;
    const Scenario scenario = make_scenario(name, p, sc.speed);
    // Live: lockstep server with a headless bot replaying the scenario's driver script.
    Session session(p, fitted(), sc);
    ServerOptions so;
    so.port = 0;
    so.realtime = false;
    so.lockstep = true;
    const std::int64_t ticks = static_cast<std::int64_t>(std::llround(scenario.duration * sc.rate_hz));
    so.max_ticks = ticks;
    Server server(session, so);
    const int port = server.start();
    Client client;
    client.connect("127.0.0.1", port);
    std::thread loop([&] {server.run();});
    BotSession bot;
    try {
      bot = run_bot(client, scripted_policy(scenario.script, 1.0 / sc.rate_hz), ticks);
    } catch (const Error &) {
      ok = false;
    }
    loop.join();
    server.shutdown_all();

    // Batch: the same scenario through the simulator.
    SimConfig cfg;
    cfg.filter = sc.filter;
    cfg.filter.dt = sc.dt();
    const TraceRecord ref = run_scenario(scenario, fitted(), p, cfg);
    if (bot.frames.size() != static_cast<std::size_t>(ticks) || ref.samples.size() != static_cast<std::size_t>(ticks * sc.substeps)) {
      ok = false;
      continue;
    }
    for (std::size_t k = 0; k < bot.frames.size(); ++k) {
      const std::size_t idx = (k + 1) * static_cast<std::size_t>(sc.substeps);
      const VehicleState & want = idx < ref.samples.size() ? ref.samples[idx].state : ref.final_state;
      const VehicleState & got = bot.frames[k].state;
      worst = std::max({worst, std::abs(got.r - want.r), std::abs(got.beta - want.beta),
        std::abs(got.V - want.V), std::abs(got.delta - want.delta),
        std::abs(got.tau - want.tau) / std::max(1.0, std::abs(want.tau))});
    }
    frames += bot.frames.size();
  }
  ok = ok && worst <= 1e-9;
  return {ok, std::to_string(frames) + " frames over TCP across 3 scenarios, max state difference " +
    fmt("%.1e", worst)};
}

}  // namespace

int main()
{
  struct Criterion
  {
    const char * name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
    {"tire-model continuity", tire_continuity},
    {"derivative oracles", derivative_oracles},
    {"QP exactness", qp_exactness},
    {"Vieta coefficients", vieta_check},
    {"envelope containment", envelope_containment},
    {"safety reproduction", safety_reproduction},
    {"equilibrium solver", equilibrium_solver},
    {"performance budget", performance_budget},
    {"batch/live equivalence", batch_live_equivalence},
  };
  int failed = 0;
  for (const auto & c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception & ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    failed += !o.pass;
    std::printf("%s  %-24s %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
