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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include "driftguard/phase_envelope.hpp"
#include "driftguard/simulator.hpp"
#include "driftguard/teleop/client.hpp"
#include "driftguard/teleop/server.hpp"
#include "driftguard/teleop/session.hpp"
#include "driftguard/trace_io.hpp"

using namespace driftguard;
using namespace driftguard::teleop;

namespace
{

const EllipseBarrier & fitted()
{
  static const EllipseBarrier e = fit_mprel(7.0, VehicleParams{}).ellipse;
  return e;
}

SessionConfig quiet_session(const std::string & scenario = "initiation")
{
  SessionConfig cfg;
  cfg.filter.measure_time = false;
  cfg.scenario = scenario;
  return cfg;
}

InboundMessage command(double hw, double tq, std::int64_t tick)
{
  return parse_inbound(command_message(hw, tq, tick, 0.0), VehicleParams{});
}

// Batch reference for a per-tick command sequence: one script segment per tick.
TraceRecord batch_reference(
  const std::string & scenario, const std::vector<std::pair<double, double>> & cmds,
  const SessionConfig & sc)
{
  VehicleParams p;
  Scenario s = make_scenario(scenario, p, sc.speed);
  s.script.segments.clear();
  for (std::size_t k = 0; k < cmds.size(); ++k) {
    const double t0 = static_cast<double>(k * static_cast<std::size_t>(sc.substeps)) * sc.dt();
    s.script.segments.push_back({t0, cmds[k].first, cmds[k].second});
  }
  s.duration = static_cast<double>(cmds.size()) / sc.rate_hz;
  SimConfig cfg;
  cfg.filter = sc.filter;
  cfg.filter.dt = sc.dt();
  return run_scenario(s, fitted(), p, cfg);
}

std::vector<std::pair<double, double>> varied_commands(std::size_t n)
{
  std::vector<std::pair<double, double>> cmds;
  for (std::size_t k = 0; k < n; ++k) {
    const double phase = static_cast<double>(k) / 40.0;
    cmds.emplace_back(3.0 * std::sin(phase), 600.0 + 300.0 * std::cos(0.7 * phase));
  }
  return cmds;
}

void expect_states_match(const VehicleState & a, const VehicleState & b, const std::string & where)
{
  EXPECT_NEAR(a.r, b.r, 1e-9) << where;
  EXPECT_NEAR(a.beta, b.beta, 1e-9) << where;
  EXPECT_NEAR(a.V, b.V, 1e-9) << where;
  EXPECT_NEAR(a.delta, b.delta, 1e-9) << where;
  EXPECT_NEAR(a.tau, b.tau, 1e-9 * std::max(1.0, std::abs(b.tau))) << where;
}

TEST(Framing, RoundTripAcrossArbitraryChunks)
{
  const std::vector<std::string> payloads{"{}", command_message(1.5, 856.0, 3, 12.5), "", "x"};
  std::string stream;
  for (const auto & p : payloads) {stream += encode_frame(p);}
  for (std::size_t chunk : {1u, 2u, 7u, 1000u}) {
    FrameDecoder d;
    std::vector<std::string> got;
    for (std::size_t i = 0; i < stream.size(); i += chunk) {
      for (auto & p : d.feed(std::string_view(stream).substr(i, chunk))) {got.push_back(p);}
    }
    EXPECT_EQ(got, payloads) << "chunk " << chunk;
    EXPECT_EQ(d.pending(), 0u);
  }
}

TEST(Framing, RejectsMalformedPrefixes)
{
  FrameDecoder a;
  EXPECT_THROW(a.feed("abc\n{}"), ProtocolError);
  FrameDecoder b;
  EXPECT_THROW(b.feed("\n"), ProtocolError);
  FrameDecoder c;
  EXPECT_THROW(c.feed("99999999999\n"), ProtocolError);
  FrameDecoder d;
  EXPECT_THROW(d.feed(std::string(30, '1')), ProtocolError);
}

TEST(Messages, InboundParsing)
{
  VehicleParams p;
  const InboundMessage m = parse_inbound(command_message(100.0, 856.0, 7, 3.0), p);
  EXPECT_EQ(m.kind, InboundKind::kCommand);
  EXPECT_DOUBLE_EQ(m.handwheel, p.roadwheel_to_handwheel(p.delta_max));
  EXPECT_EQ(m.torque, 856.0);
  EXPECT_EQ(m.tick, 7);
  EXPECT_EQ(parse_inbound(set_bypass_message(true), p).bypass, true);
  EXPECT_EQ(parse_inbound(load_scenario_message("transition"), p).scenario, "transition");
  const InboundMessage r = parse_inbound(reset_message(VehicleState{0.1, -0.2, 7.0, 0.0, 0.0}, 1.0, 50.0), p);
  ASSERT_TRUE(r.state.has_value());
  EXPECT_EQ(r.state->beta, -0.2);
  EXPECT_EQ(r.reset_torque, 50.0);

  EXPECT_THROW(parse_inbound("[]", p), ProtocolError);
  EXPECT_THROW(parse_inbound("{\"kind\":\"warp\"}", p), ProtocolError);
  EXPECT_THROW(parse_inbound("{\"kind\":\"command\",\"handwheel\":\"1\",\"torque\":0}", p), ProtocolError);
  EXPECT_THROW(parse_inbound("{\"kind\":\"command\",\"handwheel\":1,\"torque\":0,\"tick\":1.5}", p), ProtocolError);
  EXPECT_THROW(parse_inbound("{\"kind\":\"set_bypass\",\"bypass\":1}", p), ProtocolError);
  EXPECT_THROW(parse_inbound("not json", p), ProtocolError);
}

TEST(Messages, FrameRoundTripIsExact)
{
  OutboundFrame f;
  f.tick = 42;
  f.t = 0.43;
  f.state = {0.1234567890123, -0.98, 7.0000000001, -0.3, 812.25};
  f.x = 1.0 / 3.0;
  f.command_tick = 41;
  f.eps = 1e-300;
  f.active = true;
  f.h = -6e-5;
  f.bypass = true;
  EXPECT_EQ(parse_frame(frame_to_json(f)), f);
  EXPECT_EQ(kind_of(frame_to_json(f)), "frame");
  EXPECT_THROW(parse_frame(hello_message(100, 10, 1e-3)), ProtocolError);
  EXPECT_EQ(nlohmann::json::parse(hello_message(100, 10, 1e-3))["protocol"], kProtocolVersion);
}

TEST(Session, MatchesBatchRunForTheSameCommands)
{
  const SessionConfig sc = quiet_session("transition");
  const auto cmds = varied_commands(300);
  Session session(VehicleParams{}, fitted(), sc);
  std::vector<VehicleState> states;
  for (std::size_t k = 0; k < cmds.size(); ++k) {
    session.post(command(cmds[k].first, cmds[k].second, static_cast<std::int64_t>(k)));
    const TickOutput out = session.tick();
    ASSERT_FALSE(out.fault);
    EXPECT_EQ(out.frame.command_tick, static_cast<std::int64_t>(k));
    states.push_back(out.frame.state);
  }
  const TraceRecord ref = batch_reference("transition", cmds, sc);
  ASSERT_EQ(ref.samples.size(), cmds.size() * 10);
  for (std::size_t k = 0; k + 1 < states.size(); ++k) {
    expect_states_match(states[k], ref.samples[(k + 1) * 10].state, "tick " + std::to_string(k));
  }
  expect_states_match(states.back(), ref.final_state, "final");
}

TEST(Session, LockstepBotOverTcpMatchesBatchRun)
{
  const SessionConfig sc = quiet_session("initiation");
  const auto cmds = varied_commands(200);
  Session session(VehicleParams{}, fitted(), sc);
  ServerOptions so;
  so.port = 0;
  so.realtime = false;
  so.lockstep = true;
  so.max_ticks = static_cast<std::int64_t>(cmds.size());
  Server server(session, so);
  const int port = server.start();

  Client client;
  client.connect("127.0.0.1", port);
  std::thread loop([&] {server.run();});
  const BotPolicy policy = [&](std::int64_t k, const OutboundFrame *) {
      return cmds[static_cast<std::size_t>(k)];
    };
  const BotSession bot = run_bot(client, policy, static_cast<std::int64_t>(cmds.size()));
  loop.join();
  server.shutdown_all();

  EXPECT_EQ(bot.hello_protocol, kProtocolVersion);
  EXPECT_EQ(bot.faults, 0);
  ASSERT_EQ(bot.frames.size(), cmds.size());
  const TraceRecord ref = batch_reference("initiation", cmds, sc);
  for (std::size_t k = 0; k < bot.frames.size(); ++k) {
    EXPECT_EQ(bot.frames[k].tick, static_cast<std::int64_t>(k));
    EXPECT_EQ(bot.frames[k].command_tick, static_cast<std::int64_t>(k));
    const VehicleState & want = k + 1 < cmds.size() ? ref.samples[(k + 1) * 10].state : ref.final_state;
    expect_states_match(bot.frames[k].state, want, "tick " + std::to_string(k));
  }
  EXPECT_EQ(server.stats().protocol_errors, 0u);
}

TEST(Session, MalformedClientInputIsReported)
{
  Session session(VehicleParams{}, fitted(), quiet_session());
  ServerOptions so;
  so.port = 0;
  so.realtime = false;
  so.max_ticks = 0;
  Server server(session, so);
  const int port = server.start();
  Client client;
  client.connect("127.0.0.1", port);
  client.send("{\"kind\":\"teleport\"}");
  bool saw_error = false;
  for (int i = 0; i < 5 && !saw_error; ++i) {
    const auto p = client.next_payload(2000);
    if (!p) {break;}
    saw_error = kind_of(*p) == "error";
  }
  EXPECT_TRUE(saw_error);
  server.shutdown_all();
  EXPECT_EQ(server.stats().protocol_errors, 1u);
}

TEST(Session, StaleCommandTorqueDecaysToZero)
{
  SessionConfig sc = quiet_session();
  Session session(VehicleParams{}, fitted(), sc);
  session.post(command(0.0, 400.0, 0));
  std::vector<double> tau_d;
  for (int k = 0; k < 120; ++k) {
    tau_d.push_back(session.tick().frame.tau_d);
  }
  // Frame k reports the request applied at its last substep, t = (10 k + 9) ms.
  EXPECT_EQ(tau_d[40], 400.0);  // t = 0.409
  EXPECT_EQ(tau_d[49], 400.0);  // t = 0.499
  EXPECT_NEAR(tau_d[74], 400.0 * (1.0 - (0.749 - 0.5) / 0.5), 1e-9);
  EXPECT_EQ(tau_d[110], 0.0);
  for (std::size_t k = 1; k < tau_d.size(); ++k) {EXPECT_LE(tau_d[k], tau_d[k - 1]);}
  // A fresh command restores the request immediately.
  session.post(command(0.0, 300.0, 120));
  EXPECT_EQ(session.tick().frame.tau_d, 300.0);
}

TEST(Session, BypassSpinOutFaultsAndResets)
{
  Session session(VehicleParams{}, fitted(), quiet_session("initiation"));
  VehicleParams p;
  session.post(parse_inbound(set_bypass_message(true), p));
  bool faulted = false;
  for (int k = 0; k < 1000 && !faulted; ++k) {
    session.post(command(1.5, 856.0, k));
    const TickOutput out = session.tick();
    if (out.fault) {
      faulted = true;
      EXPECT_EQ(kind_of(out.payloads[out.payloads.size() - 2]), "fault");
      EXPECT_EQ(out.frame.state, session.initial_state());
      EXPECT_TRUE(out.frame.bypass);
    }
  }
  EXPECT_TRUE(faulted);
  EXPECT_EQ(session.faults(), 1);
}

TEST(Session, LoadScenarioAndReset)
{
  VehicleParams p;
  Session session(p, fitted(), quiet_session("initiation"));
  session.post(parse_inbound(load_scenario_message("transition"), p));
  const TickOutput out = session.tick();
  EXPECT_EQ(session.initial_state().beta, kTransitionBeta);
  EXPECT_DOUBLE_EQ(out.frame.handwheel, kTransitionHandwheel);
  session.post(parse_inbound(reset_message(VehicleState{0.0, 0.1, 6.0, 0.0, 0.0}), p));
  session.tick();
  EXPECT_EQ(session.initial_state().V, 6.0);
  EXPECT_THROW(parse_inbound(load_scenario_message("donut"), p), ProtocolError);
}

TEST(Session, AdversarialDriverStaysSafeForOneMinute)
{
  VehicleParams p;
  Session session(p, fitted(), quiet_session("initiation"));
  std::stringstream trace;
  session.attach_logs(&trace, nullptr);
  const BotPolicy policy = adversarial_policy(7, p);
  OutboundFrame last;
  for (std::int64_t k = 0; k < 6000; ++k) {
    const auto [hw, tq] = policy(k, k > 0 ? &last : nullptr);
    session.post(command(hw, tq, k));
    const TickOutput out = session.tick();
    ASSERT_FALSE(out.fault) << "tick " << k;
    last = out.frame;
  }
  session.close_logs();
  const auto rows = read_trace_csv(trace);
  ASSERT_EQ(rows.size(), 60000u);
  double min_h = 1.0;
  for (const auto & r : rows) {min_h = std::min(min_h, r[11]);}
  EXPECT_GE(min_h, -0.02);
}

TEST(Session, TraceLogReplaysThroughTheIntegrator)
{
  VehicleParams p;
  Session session(p, fitted(), quiet_session("equilibrium"));
  std::stringstream trace, frames;
  session.attach_logs(&trace, &frames);
  const auto cmds = varied_commands(100);
  for (std::size_t k = 0; k < cmds.size(); ++k) {
    session.post(command(cmds[k].first, cmds[k].second, static_cast<std::int64_t>(k)));
    session.tick();
  }
  session.close_logs();
  const auto rows = read_trace_csv(trace);
  ASSERT_EQ(rows.size(), 1000u);
  for (std::size_t k = 0; k + 1 < rows.size(); ++k) {
    const VehicleState x{rows[k][1], rows[k][2], rows[k][3], rows[k][4], rows[k][5]};
    const VehicleState y = integrate_rk4(x, {rows[k][8], rows[k][9]}, p, 1e-3, simulation_options());
    const VehicleState want{rows[k + 1][1], rows[k + 1][2], rows[k + 1][3], rows[k + 1][4], rows[k + 1][5]};
    expect_states_match(y, want, "row " + std::to_string(k));
  }
  // The frame log holds the envelope once and one frame per tick.
  std::string line;
  int n_frames = 0, n_env = 0;
  while (std::getline(frames, line)) {
    const std::string kind = kind_of(line);
    n_frames += kind == "frame";
    n_env += kind == "envelope";
  }
  EXPECT_EQ(n_frames, 100);
  EXPECT_EQ(n_env, 1);
}

TEST(Session, TickComputeFitsTheBudget)
{
  VehicleParams p;
  SessionConfig sc = quiet_session("initiation");
  Session session(p, fitted(), sc);
  const BotPolicy policy = adversarial_policy(3, p);
  std::vector<double> ms;
  OutboundFrame last;
  for (std::int64_t k = 0; k < 2000; ++k) {
    const auto [hw, tq] = policy(k, k > 0 ? &last : nullptr);
    const auto t0 = std::chrono::steady_clock::now();
    session.post(command(hw, tq, k));
    const TickOutput out = session.tick();
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    ASSERT_FALSE(out.fault);
    last = out.frame;
  }
  std::sort(ms.begin(), ms.end());
  EXPECT_LT(ms[static_cast<std::size_t>(0.99 * static_cast<double>(ms.size()))], 2.0);
}

TEST(SessionConfig, Validation)
{
  SessionConfig sc;
  sc.rate_hz = 0.0;
  EXPECT_THROW(sc.validate(), ConfigError);
  sc = {};
  sc.substeps = 0;
  EXPECT_THROW(sc.validate(), ConfigError);
  sc = {};
  sc.scenario = "donut";
  EXPECT_THROW(Session(VehicleParams{}, fitted(), sc), ConfigError);
}

}  // namespace
