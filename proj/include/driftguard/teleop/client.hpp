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
/// \brief Headless teleop client used by the bot tool and the equivalence harness.

#ifndef DRIFTGUARD__TELEOP__CLIENT_HPP_
#define DRIFTGUARD__TELEOP__CLIENT_HPP_

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <random>
#include <optional>
#include <string>
#include <vector>

#include "driftguard/errors.hpp"
#include "driftguard/simulator.hpp"
#include "driftguard/teleop/protocol.hpp"
#include "driftguard/teleop/socket.hpp"

namespace driftguard::teleop
{

class Client
{
public:
  void connect(const std::string & host, int port) {sock_ = connect_tcp(host, port);}

  void send(const std::string & payload)
  {
    if (!sock_.send_all(encode_frame(payload))) {
      throw Error("teleop connection lost while sending");
    }
  }

  /// Next complete payload, or nullopt after `timeout_ms` without one or on disconnect.
  std::optional<std::string> next_payload(int timeout_ms)
  {
    using clock = std::chrono::steady_clock;
    const auto deadline = clock::now() + std::chrono::milliseconds(timeout_ms);
    std::string chunk;
    while (pending_.empty()) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - clock::now()).count();
      if (left <= 0 || closed_) {return std::nullopt;}
      if (!sock_.receive(chunk, static_cast<int>(left))) {
        closed_ = true;
        return std::nullopt;
      }
      for (auto & p : decoder_.feed(chunk)) {
        pending_.push_back(std::move(p));
      }
    }
    std::string out = std::move(pending_.front());
    pending_.pop_front();
    return out;
  }

  bool closed() const {return closed_;}
  void close() {sock_.close();}

private:
  Socket sock_;
  FrameDecoder decoder_;
  std::deque<std::string> pending_;
  bool closed_{false};
};

/// Handwheel angle (rad) and torque (N m) the bot sends for a given tick.
using BotPolicy = std::function<std::pair<double, double>(std::int64_t tick, const OutboundFrame * last)>;

/// Holds the first segment of a named scenario's script.
inline BotPolicy scripted_policy(const DriverScript & script, double tick_period)
{
  return [script, tick_period](std::int64_t tick, const OutboundFrame *) {
           const ScriptSegment & s = script.segment_at(static_cast<double>(tick) * tick_period);
           return std::pair<double, double>{s.handwheel, s.tau};
         };
}

struct AdversaryOptions
{
  std::int64_t hold{50};         // ticks between redraws
  double steer_fraction{0.4};    // of full handwheel lock
  double design_speed{7.0};      // m/s
  double torque_base{500.0};     // N m
  double speed_gain{400.0};      // N m per m/s
  double torque_spread{400.0};   // N m, half-width of the random offset
  double torque_max{1500.0};     // N m
};

/// Random handwheel holds and torque pulses while keeping the car near the design speed.
/// The torque request is base + gain (V* - V) + offset, with V read from the last frame.
inline BotPolicy adversarial_policy(
  std::uint64_t seed, const VehicleParams & p, const AdversaryOptions & opt = {})
{
  auto rng = std::make_shared<std::mt19937_64>(seed);
  auto held = std::make_shared<std::pair<double, double>>(0.0, 0.0);  // handwheel, offset
  const double hw_max = opt.steer_fraction * p.roadwheel_to_handwheel(p.delta_max);
  return [=](std::int64_t tick, const OutboundFrame * last) {
           if (tick % opt.hold == 0) {
             std::uniform_real_distribution<double> steer(-hw_max, hw_max);
             std::uniform_real_distribution<double> offset(-opt.torque_spread, opt.torque_spread);
             const double hw = steer(*rng);
             *held = {hw, offset(*rng)};
           }
           const double v = last ? last->state.V : opt.design_speed;
           const double tq = opt.torque_base + opt.speed_gain * (opt.design_speed - v) + held->second;
           return std::pair<double, double>{held->first, std::clamp(tq, 0.0, opt.torque_max)};
         };
}

struct BotSession
{
  std::vector<std::string> payloads;  // everything received, in order
  std::vector<OutboundFrame> frames;
  int faults{0};
  int hello_protocol{-1};
};

/// Drives `ticks` control ticks: sends the command tagged for tick k, then waits for frame k.
/// Pair with a lockstep server for exact reproducibility.
inline BotSession run_bot(
  Client & client, const BotPolicy & policy, std::int64_t ticks, int timeout_ms = 5000,
  const std::vector<std::string> & preamble = {})
{
  BotSession out;
  for (const auto & p : preamble) {
    client.send(p);
  }
  const OutboundFrame * last = nullptr;
  for (std::int64_t k = 0; k < ticks; ++k) {
    const auto [hw, tq] = policy(k, last);
    client.send(command_message(hw, tq, k, static_cast<double>(k)));
    while (true) {
      const auto p = client.next_payload(timeout_ms);
      if (!p) {
        throw Error("teleop server stopped responding at tick " + std::to_string(k));
      }
      out.payloads.push_back(*p);
      const std::string kind = kind_of(*p);
      if (kind == "hello") {
        out.hello_protocol = nlohmann::json::parse(*p).value("protocol", -1);
      } else if (kind == "fault") {
        ++out.faults;
      } else if (kind == "frame") {
        out.frames.push_back(parse_frame(*p));
        if (out.frames.back().tick >= k) {break;}
      }
    }
    last = &out.frames.back();
  }
  return out;
}

}  // namespace driftguard::teleop

#endif  // DRIFTGUARD__TELEOP__CLIENT_HPP_
