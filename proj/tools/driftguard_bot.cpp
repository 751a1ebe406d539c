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

// driftguard-bot: headless driver for the teleop service.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "driftguard/config_io.hpp"
#include "driftguard/simulator.hpp"
#include "driftguard/teleop/client.hpp"
#include "driftguard/teleop/protocol.hpp"

using namespace driftguard;

int main(int argc, char ** argv)
{
  CLI::App app{"driftguard-bot: scripted or adversarial teleop driver"};
  std::string connect = "127.0.0.1:7447";
  std::string scenario = "initiation";
  std::string params_path, out;
  std::int64_t ticks = 1000;
  bool adversarial = false, bypass = false, load = false;
  std::uint64_t seed = 1;
  double rate = 100.0;

  app.add_option("--connect", connect, "server address host:port")->capture_default_str();
  app.add_option("--scenario", scenario, "script to drive")->capture_default_str();
  app.add_option("--params", params_path, "vehicle parameter file")->check(CLI::ExistingFile);
  app.add_option("--ticks", ticks, "control ticks to drive")->capture_default_str();
  app.add_option("--rate", rate, "server control rate, Hz")->capture_default_str();
  app.add_flag("--adversarial", adversarial, "random steering holds and torque pulses around the design speed");
  app.add_option("--seed", seed, "seed for --adversarial")->capture_default_str();
  app.add_flag("--bypass", bypass, "ask the server to bypass the filter");
  app.add_flag("--load-scenario", load, "ask the server to load --scenario's initial state first");
  app.add_option("--out", out, "write every received payload here, one per line");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const VehicleParams p = params_path.empty() ? VehicleParams{} : load_params(params_path);
    require_scenario_name(scenario);
    const auto [host, port] = teleop::split_address(connect);
    teleop::Client client;
    client.connect(host, port);

    std::vector<std::string> preamble;
    if (load) {preamble.push_back(teleop::load_scenario_message(scenario));}
    preamble.push_back(teleop::set_bypass_message(bypass));

    DriverScript script;
    if (scenario == "equilibrium") {
      script.segments = {{0.0, kEquilibriumHandwheel, kEquilibriumTorque}};
    } else if (scenario == "transition") {
      script.segments = {{0.0, kTransitionHandwheel, kTransitionTorque}};
    } else {
      script.segments = {{0.0, kInitiationHandwheel, kInitiationTorque}};
    }
    const teleop::BotPolicy policy = adversarial ?
      teleop::adversarial_policy(seed, p) : teleop::scripted_policy(script, 1.0 / rate);
    const teleop::BotSession session = teleop::run_bot(client, policy, ticks, 5000, preamble);

    double min_h = std::numeric_limits<double>::infinity();
    std::size_t mismatched = 0;
    for (const auto & f : session.frames) {
      min_h = std::min(min_h, f.h);
      if (f.command_tick != f.tick) {++mismatched;}
    }
    if (!out.empty()) {
      std::ofstream o(out, std::ios::binary);
      for (const auto & pl : session.payloads) {o << pl << '\n';}
    }
    std::cout << "protocol=" << session.hello_protocol << " frames=" << session.frames.size() <<
      " faults=" << session.faults << " min_h=" << min_h << " untagged_echo=" << mismatched <<
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
