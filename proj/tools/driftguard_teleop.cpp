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

// driftguard-teleop: live simulation + safety filter served over TCP.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include "CLI11.hpp"

#include "driftguard/config_io.hpp"
#include "driftguard/envelope_io.hpp"
#include "driftguard/phase_envelope.hpp"
#include "driftguard/teleop/server.hpp"
#include "driftguard/teleop/session.hpp"

namespace fs = std::filesystem;
using namespace driftguard;

namespace
{
volatile std::sig_atomic_t g_interrupted = 0;
void on_signal(int) {g_interrupted = 1;}
}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"driftguard-teleop: live drift simulator with the safety filter in the loop"};
  double rate = 100.0;
  int substeps = 10;
  std::string listen = "127.0.0.1:7447";
  std::string params_path, config_path, envelope_path, out;
  std::string scenario = "initiation";
  double speed = 7.0;
  double stale = 0.5;
  double duration = 0.0;
  bool bypass = false, lockstep = false, no_realtime = false, no_timing = false;

  app.add_option("--rate", rate, "control loop rate, Hz")->capture_default_str();
  app.add_option("--substeps", substeps, "simulation substeps per control tick")->capture_default_str();
  app.add_option("--listen", listen, "listen address host:port (port 0 picks one)")->capture_default_str();
  app.add_option("--params", params_path, "vehicle parameter file")->check(CLI::ExistingFile);
  app.add_option("--config", config_path, "run configuration file")->check(CLI::ExistingFile);
  app.add_option("--envelope", envelope_path, "envelope artifact (fitted if omitted)")
  ->check(CLI::ExistingFile);
  app.add_option("--scenario", scenario, "initial state: initiation | equilibrium | transition")
  ->capture_default_str();
  app.add_option("--speed", speed, "design speed, m/s")->capture_default_str();
  app.add_option("--out", out, "directory for session logs (DRIFTGUARD_OUT if unset)");
  app.add_flag("--bypass", bypass, "start with the filter bypassed");
  app.add_option("--stale-timeout", stale, "seconds before a silent driver's torque decays, 0 disables")
  ->capture_default_str();
  app.add_option("--duration", duration, "stop after this many seconds of sim time, 0 runs until SIGINT");
  app.add_flag("--lockstep", lockstep, "advance only when the command for the next tick arrives");
  app.add_flag("--no-realtime", no_realtime, "do not pace ticks to the wall clock");
  app.add_flag("--no-timing", no_timing, "record zero solve times");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const VehicleParams p = params_path.empty() ? VehicleParams{} : load_params(params_path);
    RunConfig c = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (no_timing) {c.filter.measure_time = false;}
    c.filter.bypass = c.filter.bypass || bypass;
    const EllipseBarrier e = c.apply_gains(
      envelope_path.empty() ? fit_mprel(speed, p, c.envelope).ellipse :
      load_envelope(envelope_path, p).ellipse);

    teleop::SessionConfig sc;
    sc.rate_hz = rate;
    sc.substeps = substeps;
    sc.stale_timeout = stale;
    sc.filter = c.filter;
    sc.scenario = scenario;
    sc.speed = speed;
    teleop::Session session(p, e, sc);

    fs::path dir = out;
    if (dir.empty()) {
      const char * env = std::getenv("DRIFTGUARD_OUT");
      dir = env && *env ? fs::path(env) : fs::path("driftguard_out");
    }
    fs::create_directories(dir);
    std::ofstream trace_log(dir / "session_trace.csv", std::ios::binary);
    std::ofstream frame_log(dir / "session_frames.jsonl", std::ios::binary);
    session.attach_logs(&trace_log, &frame_log);

    const auto [host, port] = teleop::split_address(listen);
    teleop::ServerOptions so;
    so.host = host;
    so.port = port;
    so.lockstep = lockstep;
    so.realtime = !no_realtime;
    if (duration > 0.0) {so.max_ticks = static_cast<std::int64_t>(std::llround(duration * rate));}
    teleop::Server server(session, so);
    const int bound = server.start();
    std::cout << "listening on " << host << ":" << bound << " at " << rate << " Hz" << std::endl;

    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::atomic<bool> done{false};
    std::thread watcher([&] {
        while (!done) {
          if (g_interrupted) {server.stop();}
          std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
      });
    server.run();
    done = true;
    watcher.join();
    server.shutdown_all();

    const auto stats = server.stats();
    std::cout << "ticks=" << session.tick_index() << " faults=" << session.faults() <<
      " p99_tick_ms=" << stats.percentile(0.99) * 1e3 << " dropped=" << stats.dropped_frames <<
      "\n";
    return 0;
  } catch (const ConfigError & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
