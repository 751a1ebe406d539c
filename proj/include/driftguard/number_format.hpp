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

#ifndef DRIFTGUARD__NUMBER_FORMAT_HPP_
#define DRIFTGUARD__NUMBER_FORMAT_HPP_

#include <charconv>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "driftguard/errors.hpp"

namespace driftguard
{

/// Shortest text that parses back to the same double.
inline std::string format_number(double v)
{
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_number(std::string_view text, const std::string & what)
{
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("malformed number '" + std::string(text) + "' in " + what);
  }
  return v;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view data)
{
  std::uint64_t h = 14695981039346656037ull;
  for (const char ch : data) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v)
{
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
    v >>= 4;
  }
  return out;
}

}  // namespace driftguard

#endif  // DRIFTGUARD__NUMBER_FORMAT_HPP_
