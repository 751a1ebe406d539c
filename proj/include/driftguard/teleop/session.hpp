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
/// \brief The authoritative teleop simulation loop, without transport or wall clock.
///
/// A control tick runs `substeps` filter + RK4 steps at dt = 1 / (rate * substeps) with the
/// driver request held across the tick.  All mutable state lives here; the server feeds
/// messages in and ships the returned payloads out.

#ifndef DRIFTGUARD__TELEOP__SESSION_HPP_
#define DRIFTGUARD__TELEOP__SESSION_HPP_

#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "driftguard/ecbf.hpp"
#include "driftguard/errors.hpp"
#include "driftguard/safety_filter.hpp"
#include "driftguard/simulator.hpp"
#include "driftguard/teleop/protocol.hpp"
#include "driftguard/trace_io.hpp"
#include "driftguard/vehicle_model.hpp"

namespace driftguard::teleop
{

struct SessionConfig
{
  double rate_hz{100.0};
  int substeps{10};
  double stale_timeout{0.5};  // s without a command before the torque request decays; 0 disables
  double stale_decay{0.5};    // s for the linear ramp of the torque request to zero
  double spin_beta{std::numbers::pi / 2.0};
  FilterConfig filter;        // dt is derived from rate_hz and substeps
  std::string scenario{"initiation"};
  double speed{7.0};

  double dt() const {return 1.0 / (rate_hz * substeps);}

  void validate() const
  {
    if (!(rate_hz > 0.0) || substeps < 1) {
      throw ConfigError("teleop rate and substeps must be positive");
    }
    if (!(stale_timeout >= 0.0 && stale_decay > 0.0)) {
      throw ConfigError("stale timeout must be >= 0 and decay > 0");
    }
  }
};

struct HeldCommand
{
  double handwheel{0.0};
  double torque{0.0};
  std::int64_t tag{-1};
  double timestamp_ms{0.0};
  double received_t{0.0};  // sim time it was taken into the loop
};

struct TickOutput
{
  std::vector<std::string> payloads;  // in broadcast order
  OutboundFrame frame;
  bool fault{false};
};

class Session
{
public:
  Session(
    const VehicleParams & p, const EllipseBarrier & e, const SessionConfig & cfg,
    std::optional<VehicleState> initial = std::nullopt)
  : params_(p), ellipse_(e), cfg_(cfg)
  {
    cfg_.validate();
    ellipse_.validate();
    cfg_.filter.dt = cfg_.dt();
    cfg_.filter.validate();
    bypass_ = cfg_.filter.bypass;
    if (initial) {
      initial_ = *initial;
    } else {
      const Scenario sc = make_scenario(cfg_.scenario, params_, cfg_.speed);
      initial_ = sc.initial;
    }
    x_ = initial_;
  }

  /// Queue a message; it takes effect at the start of the next tick.
  void post(const InboundMessage & m) {inbox_.push_back(m);}

  /// Session logs: trace table at substep rate and every broadcast payload as one JSON line.
  void attach_logs(std::ostream * trace, std::ostream * frames)
  {
    if (trace) {trace_writer_.emplace(*trace);}
    frames_log_ = frames;
  }

  void close_logs()
  {
    if (trace_writer_) {
      trace_writer_->finish();
      trace_writer_.reset();
    }
    if (frames_log_) {
      frames_log_->flush();
      frames_log_ = nullptr;
    }
  }

  /// Greeting for a newly connected client.
  std::vector<std::string> greeting() const
  {
    return {hello_message(cfg_.rate_hz, cfg_.substeps, cfg_.filter.dt),
      envelope_message(ellipse_, cfg_.speed)};
  }

  TickOutput tick()
  {
    TickOutput out;
    if (!envelope_announced_) {
      out.payloads.push_back(envelope_message(ellipse_, cfg_.speed));
      envelope_announced_ = true;
    }
    drain();

    const double dt = cfg_.filter.dt;
    const ModelOptions opts = simulation_options();
    FilterConfig fc = cfg_.filter;
    fc.bypass = bypass_;
    FilterDecision last;
    DriverCommand applied;
    for (int s = 0; s < cfg_.substeps; ++s) {
      const double t = static_cast<double>(substep_) * dt;
      applied = driver_command(t);
      TraceSample sample;
      sample.t = t;
      sample.state = x_;
      sample.command = applied;
      std::string fault;
      try {
        const auto [dec, next] = closed_loop_step(applied, x_, ellipse_, params_, fc, opts);
        last = dec;
        sample.delta_dot_cmd = dec.delta_dot_cmd;
        sample.tau_dot_cmd = dec.tau_dot_cmd;
        sample.delta_cmd = dec.delta_cmd;
        sample.tau_cmd = dec.tau_cmd;
        sample.eps = dec.eps;
        sample.h = dec.h;
        sample.lf_h = dec.lf_h;
        sample.nu1 = dec.nu1;
        sample.active = dec.active;
        sample.solve_time = dec.solve_time;
        if (trace_writer_) {trace_writer_->write(sample);}
        advance_pose(next, dt);
        x_ = next;
        if (!std::isfinite(x_.beta) || std::abs(x_.beta) > cfg_.spin_beta) {
          fault = "spin_out";
        }
      } catch (const Error & err) {
        fault = err.what();
      }
      ++substep_;
      if (!fault.empty()) {
        out.fault = true;
        out.payloads.push_back(fault_message(tick_, static_cast<double>(substep_) * dt, fault));
        x_ = initial_;
        ++faults_;
        break;
      }
    }

    OutboundFrame& f = out.frame;
    f.tick = tick_;
    f.t = static_cast<double>(substep_) * dt;
    f.state = x_;
    f.x = pose_x_;
    f.y = pose_y_;
    f.heading = heading_;
    f.handwheel = held_.handwheel;
    f.delta_d = applied.delta_d;
    f.tau_d = applied.tau_d;
    f.command_tick = held_.tag;
    f.command_timestamp_ms = held_.timestamp_ms;
    f.delta_cmd = last.delta_cmd;
    f.tau_cmd = last.tau_cmd;
    f.delta_dot_cmd = last.delta_dot_cmd;
    f.tau_dot_cmd = last.tau_dot_cmd;
    f.eps = last.eps;
    f.active = last.active;
    f.solve_time = last.solve_time;
    f.h = barrier(x_, ellipse_);
    try {
      f.nu1 = lie1(x_, ellipse_, params_, opts) + ellipse_.alpha0 * f.h;
    } catch (const Error &) {
      f.nu1 = 0.0;
    }
    f.bypass = bypass_;
    out.payloads.push_back(frame_to_json(f));
    if (frames_log_) {
      for (const auto & p : out.payloads) {
        *frames_log_ << p << '\n';
      }
    }
    ++tick_;
    return out;
  }

  const VehicleState & state() const {return x_;}
  const VehicleState & initial_state() const {return initial_;}
  std::int64_t tick_index() const {return tick_;}
  double sim_time() const {return static_cast<double>(substep_) * cfg_.filter.dt;}
  bool bypass() const {return bypass_;}
  int faults() const {return faults_;}
  const SessionConfig & config() const {return cfg_;}
  const EllipseBarrier & ellipse() const {return ellipse_;}
  const VehicleParams & params() const {return params_;}

private:
  DriverCommand driver_command(double t) const
  {
    double torque = held_.torque;
    const double age = t - held_.received_t;
    if (cfg_.stale_timeout > 0.0 && age > cfg_.stale_timeout) {
      torque *= std::max(0.0, 1.0 - (age - cfg_.stale_timeout) / cfg_.stale_decay);
    }
    return {params_.handwheel_to_roadwheel(held_.handwheel), torque, t};
  }

  void drain()
  {
    const double now = sim_time();
    while (!inbox_.empty()) {
      const InboundMessage m = inbox_.front();
      inbox_.pop_front();
      switch (m.kind) {
        case InboundKind::kCommand:
          held_ = {m.handwheel, m.torque, m.tick.value_or(-1), m.timestamp_ms, now};
          break;
        case InboundKind::kSetBypass:
          bypass_ = m.bypass;
          break;
        case InboundKind::kReset:
          if (m.state) {initial_ = *m.state;}
          reset_vehicle();
          if (m.reset_handwheel || m.reset_torque) {
            held_ = {m.reset_handwheel.value_or(0.0), m.reset_torque.value_or(0.0), -1, 0.0, now};
          }
          break;
        case InboundKind::kLoadScenario: {
            const Scenario sc = make_scenario(m.scenario, params_, cfg_.speed);
            initial_ = sc.initial;
            reset_vehicle();
            const auto & seg = sc.script.segments.front();
            held_ = {seg.handwheel, seg.tau, -1, 0.0, now};
            break;
          }
      }
    }
  }

  void reset_vehicle()
  {
    x_ = initial_;
    pose_x_ = pose_y_ = heading_ = 0.0;
  }

  // Planar pose for display: x_dot = V cos(psi + beta), y_dot = V sin(psi + beta), psi_dot = r.
  void advance_pose(const VehicleState & next, double dt)
  {
    const double V = 0.5 * (x_.V + next.V);
    const double course = heading_ + 0.5 * dt * x_.r + 0.5 * (x_.beta + next.beta);
    pose_x_ += dt * V * std::cos(course);
    pose_y_ += dt * V * std::sin(course);
    heading_ += 0.5 * dt * (x_.r + next.r);
  }

  VehicleParams params_;
  EllipseBarrier ellipse_;
  SessionConfig cfg_;
  VehicleState initial_;
  VehicleState x_;
  HeldCommand held_;
  bool bypass_{false};
  bool envelope_announced_{false};
  std::deque<InboundMessage> inbox_;
  std::int64_t tick_{0};
  std::int64_t substep_{0};
  int faults_{0};
  double pose_x_{0.0};
  double pose_y_{0.0};
  double heading_{0.0};
  std::optional<TraceWriter> trace_writer_;
  std::ostream * frames_log_{nullptr};
};

}  // namespace driftguard::teleop

#endif  // DRIFTGUARD__TELEOP__SESSION_HPP_
