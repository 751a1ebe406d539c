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

#ifndef DRIFTGUARD__ERRORS_HPP_
#define DRIFTGUARD__ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace driftguard
{

/// Base class for every failure raised by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Speed at or below the model floor; slip kinematics divide by V.
class SingularSpeed : public Error
{
public:
  using Error::Error;
};

/// Longitudinal force at or beyond the friction circle, no lateral capacity left.
class CapacityExceeded : public Error
{
public:
  using Error::Error;
};

/// Traced recovery envelope does not enclose the origin.
class DegenerateRegion : public Error
{
public:
  using Error::Error;
};

class NoConvergence : public Error
{
public:
  using Error::Error;
};

class EmptyPoles : public Error
{
public:
  using Error::Error;
};

/// Malformed or invalid configuration / parameter / artifact input.
class ConfigError : public Error
{
public:
  using Error::Error;
};

/// Malformed teleop wire message.
class ProtocolError : public Error
{
public:
  using Error::Error;
};

}  // namespace driftguard

#endif  // DRIFTGUARD__ERRORS_HPP_
