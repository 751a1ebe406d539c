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
/// \brief Teleop wire protocol.
///
/// Transport framing: ASCII decimal payload length, '\n', then the payload.  Every payload is
/// a flat JSON object with a "kind" field.  Server to client: hello, envelope, frame, fault,
/// error.  Client to server: command, set_bypass, reset, load_scenario.

#ifndef DRIFTGUARD__TELEOP__PROTOCOL_HPP_
#define DRIFTGUARD__TELEOP__PROTOCOL_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "driftguard/ecbf.hpp"
#include "driftguard/errors.hpp"
#include "driftguard/simulator.hpp"
#include "driftguard/vehicle_model.hpp"

namespace driftguard::teleop
{

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxPayload = 1 << 20;

inline std::string encode_frame(std::string_view payload)
{
  std::string out = std::to_string(payload.size());
  out += '\n';
  out += payload;
  return out;
}

/// Incremental decoder for the length-prefixed stream.
class FrameDecoder
{
public:
  /// Appends bytes and returns every payload completed by them.
  std::vector<std::string> feed(std::string_view bytes)
  {
    buffer_.append(bytes);
    std::vector<std::string> out;
    while (true) {
      const auto nl = buffer_.find('\n');
      if (nl == std::string::npos) {
        if (buffer_.size() > 20) {
          throw ProtocolError("frame length prefix too long");
        }
        break;
      }
      std::size_t len = 0;
      if (nl == 0 || nl > 20) {
        throw ProtocolError("malformed frame length prefix");
      }
      for (std::size_t k = 0; k < nl; ++k) {
        const char ch = buffer_[k];
        if (ch < '0' || ch > '9') {
          throw ProtocolError("malformed frame length prefix");
        }
        len = len * 10 + static_cast<std::size_t>(ch - '0');
        if (len > kMaxPayload) {
          throw ProtocolError("frame exceeds maximum payload size");
        }
      }
      if (buffer_.size() < nl + 1 + len) {
        break;
      }
      out.push_back(buffer_.substr(nl + 1, len));
      buffer_.erase(0, nl + 1 + len);
    }
    return out;
  }

  std::size_t pending() const {return buffer_.size();}

private:
  std::string buffer_;
};

// ---------------------------------------------------------------------------
// Client to server

enum class InboundKind { kCommand, kSetBypass, kReset, kLoadScenario };

struct InboundMessage
{
  InboundKind kind{InboundKind::kCommand};
  // command
  double handwheel{0.0};     // rad
  double torque{0.0};        // N m
  double timestamp_ms{0.0};  // client clock
  std::optional<std::int64_t> tick;  // server tick this command is meant for
  // set_bypass
  bool bypass{false};
  // reset
  std::optional<VehicleState> state;
  std::optional<double> reset_handwheel;
  std::optional<double> reset_torque;
  // load_scenario
  std::string scenario;
};

namespace detail
{

inline double finite_field(const nlohmann::json & j, const char * key)
{
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) {
    throw ProtocolError(std::string("field '") + key + "' must be a number");
  }
  const double v = it->get<double>();
  if (!std::isfinite(v)) {
    throw ProtocolError(std::string("field '") + key + "' must be finite");
  }
  return v;
}

}  // namespace detail

/// Parses one inbound payload.  The handwheel angle is clamped to the steering lock.
inline InboundMessage parse_inbound(std::string_view payload, const VehicleParams & p)
{
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(payload);
  } catch (const nlohmann::json::exception & ex) {
    throw ProtocolError(std::string("payload is not JSON: ") + ex.what());
  }
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) {
    throw ProtocolError("payload must be an object with a string 'kind'");
  }
  const double hw_max = p.roadwheel_to_handwheel(p.delta_max);
  const std::string kind = j["kind"].get<std::string>();
  InboundMessage m;
  if (kind == "command") {
    m.kind = InboundKind::kCommand;
    m.handwheel = std::clamp(detail::finite_field(j, "handwheel"), -hw_max, hw_max);
    m.torque = detail::finite_field(j, "torque");
    if (j.contains("timestamp_ms")) {m.timestamp_ms = detail::finite_field(j, "timestamp_ms");}
    if (j.contains("tick")) {
      if (!j["tick"].is_number_integer()) {throw ProtocolError("field 'tick' must be an integer");}
      m.tick = j["tick"].get<std::int64_t>();
    }
  } else if (kind == "set_bypass") {
    m.kind = InboundKind::kSetBypass;
    if (!j.contains("bypass") || !j["bypass"].is_boolean()) {
      throw ProtocolError("field 'bypass' must be a boolean");
    }
    m.bypass = j["bypass"].get<bool>();
  } else if (kind == "reset") {
    m.kind = InboundKind::kReset;
    if (j.contains("r") || j.contains("beta") || j.contains("V")) {
      VehicleState s;
      s.r = detail::finite_field(j, "r");
      s.beta = detail::finite_field(j, "beta");
      s.V = detail::finite_field(j, "V");
      s.delta = j.contains("delta") ? detail::finite_field(j, "delta") : 0.0;
      s.tau = j.contains("tau") ? detail::finite_field(j, "tau") : 0.0;
      m.state = s;
    }
    if (j.contains("handwheel")) {
      m.reset_handwheel = std::clamp(detail::finite_field(j, "handwheel"), -hw_max, hw_max);
    }
    if (j.contains("torque")) {m.reset_torque = detail::finite_field(j, "torque");}
  } else if (kind == "load_scenario") {
    m.kind = InboundKind::kLoadScenario;
    if (!j.contains("name") || !j["name"].is_string()) {
      throw ProtocolError("field 'name' must be a string");
    }
    m.scenario = j["name"].get<std::string>();
    try {
      require_scenario_name(m.scenario);
    } catch (const ConfigError & e) {
      throw ProtocolError(e.what());
    }
  } else {
    throw ProtocolError("unknown message kind '" + kind + "'");
  }
  return m;
}

inline std::string command_message(
  double handwheel, double torque, std::optional<std::int64_t> tick = std::nullopt,
  double timestamp_ms = 0.0)
{
  nlohmann::ordered_json j{
    {"kind", "command"}, {"handwheel", handwheel}, {"torque", torque},
    {"timestamp_ms", timestamp_ms}};
  if (tick) {j["tick"] = *tick;}
  return j.dump();
}

inline std::string set_bypass_message(bool bypass)
{
  return nlohmann::ordered_json{{"kind", "set_bypass"}, {"bypass", bypass}}.dump();
}

inline std::string load_scenario_message(const std::string & name)
{
  return nlohmann::ordered_json{{"kind", "load_scenario"}, {"name", name}}.dump();
}

inline std::string reset_message(
  const std::optional<VehicleState> & s = std::nullopt,
  std::optional<double> handwheel = std::nullopt, std::optional<double> torque = std::nullopt)
{
  nlohmann::ordered_json j{{"kind", "reset"}};
  if (s) {
    j["r"] = s->r;
    j["beta"] = s->beta;
    j["V"] = s->V;
    j["delta"] = s->delta;
    j["tau"] = s->tau;
  }
  if (handwheel) {j["handwheel"] = *handwheel;}
  if (torque) {j["torque"] = *torque;}
  return j.dump();
}

// ---------------------------------------------------------------------------
// Server to client

inline std::string hello_message(double rate_hz, int substeps, double dt)
{
  return nlohmann::ordered_json{
    {"kind", "hello"}, {"protocol", kProtocolVersion}, {"rate_hz", rate_hz},
    {"substeps", substeps}, {"dt", dt}}.dump();
}

inline std::string envelope_message(const EllipseBarrier & e, double speed)
{
  return nlohmann::ordered_json{
    {"kind", "envelope"}, {"a", e.a}, {"b", e.b}, {"c", e.c}, {"d", e.d},
    {"alpha0", e.alpha0}, {"alpha1", e.alpha1}, {"speed", speed}}.dump();
}

inline std::string fault_message(std::int64_t tick, double t, const std::string & reason)
{
  return nlohmann::ordered_json{
    {"kind", "fault"}, {"tick", tick}, {"t", t}, {"reason", reason}}.dump();
}

inline std::string error_message(const std::string & what)
{
  return nlohmann::ordered_json{{"kind", "error"}, {"message", what}}.dump();
}

/// Per-tick broadcast.  Pose fields are for display only.
struct OutboundFrame
{
  std::int64_t tick{0};
  double t{0.0};
  VehicleState state;
  double x{0.0};
  double y{0.0};
  double heading{0.0};
  double handwheel{0.0};  // applied driver request
  double delta_d{0.0};
  double tau_d{0.0};
  std::int64_t command_tick{-1};  // tag of the applied command, -1 when untagged
  double command_timestamp_ms{0.0};
  double delta_cmd{0.0};
  double tau_cmd{0.0};
  double delta_dot_cmd{0.0};
  double tau_dot_cmd{0.0};
  double eps{0.0};
  bool active{false};
  double solve_time{0.0};
  double h{0.0};
  double nu1{0.0};
  bool bypass{false};

  bool operator==(const OutboundFrame &) const = default;
};

inline std::string frame_to_json(const OutboundFrame & f)
{
  return nlohmann::ordered_json{
    {"kind", "frame"}, {"tick", f.tick}, {"t", f.t},
    {"r", f.state.r}, {"beta", f.state.beta}, {"V", f.state.V}, {"delta", f.state.delta},
    {"tau", f.state.tau}, {"x", f.x}, {"y", f.y}, {"heading", f.heading},
    {"handwheel", f.handwheel}, {"delta_d", f.delta_d}, {"tau_d", f.tau_d},
    {"command_tick", f.command_tick}, {"command_timestamp_ms", f.command_timestamp_ms},
    {"delta_cmd", f.delta_cmd}, {"tau_cmd", f.tau_cmd}, {"delta_dot_cmd", f.delta_dot_cmd},
    {"tau_dot_cmd", f.tau_dot_cmd}, {"eps", f.eps}, {"active", f.active},
    {"solve_time", f.solve_time}, {"h", f.h}, {"nu1", f.nu1}, {"bypass", f.bypass}}.dump();
}

inline OutboundFrame frame_from_json(const nlohmann::json & j)
{
  try {
    if (j.at("kind").get<std::string>() != "frame") {
      throw ProtocolError("not a frame");
    }
    OutboundFrame f;
    f.tick = j.at("tick").get<std::int64_t>();
    f.t = j.at("t").get<double>();
    f.state = {
      j.at("r").get<double>(), j.at("beta").get<double>(), j.at("V").get<double>(),
      j.at("delta").get<double>(), j.at("tau").get<double>()};
    f.x = j.at("x").get<double>();
    f.y = j.at("y").get<double>();
    f.heading = j.at("heading").get<double>();
    f.handwheel = j.at("handwheel").get<double>();
    f.delta_d = j.at("delta_d").get<double>();
    f.tau_d = j.at("tau_d").get<double>();
    f.command_tick = j.at("command_tick").get<std::int64_t>();
    f.command_timestamp_ms = j.at("command_timestamp_ms").get<double>();
    f.delta_cmd = j.at("delta_cmd").get<double>();
    f.tau_cmd = j.at("tau_cmd").get<double>();
    f.delta_dot_cmd = j.at("delta_dot_cmd").get<double>();
    f.tau_dot_cmd = j.at("tau_dot_cmd").get<double>();
    f.eps = j.at("eps").get<double>();
    f.active = j.at("active").get<bool>();
    f.solve_time = j.at("solve_time").get<double>();
    f.h = j.at("h").get<double>();
    f.nu1 = j.at("nu1").get<double>();
    f.bypass = j.at("bypass").get<bool>();
    return f;
  } catch (const nlohmann::json::exception & ex) {
    throw ProtocolError(std::string("malformed frame: ") + ex.what());
  }
}

inline OutboundFrame parse_frame(std::string_view payload)
{
  try {
    return frame_from_json(nlohmann::json::parse(payload));
  } catch (const nlohmann::json::parse_error & ex) {
    throw ProtocolError(std::string("malformed frame: ") + ex.what());
  }
}

inline std::string kind_of(std::string_view payload)
{
  try {
    const auto j = nlohmann::json::parse(payload);
    return j.value("kind", "");
  } catch (const nlohmann::json::exception &) {
    return "";
  }
}

}  // namespace driftguard::teleop

#endif  // DRIFTGUARD__TELEOP__PROTOCOL_HPP_
