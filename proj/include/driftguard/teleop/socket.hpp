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
/// \brief Blocking TCP endpoint helpers shared by the teleop server and client (POSIX sockets).

#ifndef DRIFTGUARD__TELEOP__SOCKET_HPP_
#define DRIFTGUARD__TELEOP__SOCKET_HPP_

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <string>
#include <string_view>
#include <utility>

#include "driftguard/errors.hpp"

namespace driftguard::teleop
{

/// Owning file descriptor.
class Socket
{
public:
  Socket() = default;
  explicit Socket(int fd)
  : fd_(fd) {}
  Socket(const Socket &) = delete;
  Socket & operator=(const Socket &) = delete;
  Socket(Socket && o) noexcept
  : fd_(std::exchange(o.fd_, -1)) {}
  Socket & operator=(Socket && o) noexcept
  {
    if (this != &o) {
      close();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() {close();}

  int fd() const {return fd_;}
  bool valid() const {return fd_ >= 0;}

  void close()
  {
    if (fd_ >= 0) {
      ::close(fd_);
      fd_ = -1;
    }
  }

  void shutdown() const
  {
    if (fd_ >= 0) {::shutdown(fd_, SHUT_RDWR);}
  }

  /// Sends everything or returns false.
  bool send_all(std::string_view data) const
  {
    while (!data.empty()) {
      const ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) {continue;}
      if (n <= 0) {return false;}
      data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
  }

  /// Waits up to `timeout_ms` (-1 blocks) and reads what is available.  Returns false on
  /// EOF or error; `out` is empty on timeout.
  bool receive(std::string & out, int timeout_ms) const
  {
    out.clear();
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, timeout_ms);
    if (ready < 0) {return errno == EINTR;}
    if (ready == 0) {return true;}
    char buf[65536];
    const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
    if (n < 0 && errno == EINTR) {return true;}
    if (n <= 0) {return false;}
    out.assign(buf, static_cast<std::size_t>(n));
    return true;
  }

private:
  int fd_{-1};
};

/// Splits "host:port"; a bare port binds all interfaces.
inline std::pair<std::string, int> split_address(const std::string & addr)
{
  const auto colon = addr.rfind(':');
  std::string host = colon == std::string::npos ? "0.0.0.0" : addr.substr(0, colon);
  const std::string port = colon == std::string::npos ? addr : addr.substr(colon + 1);
  if (host.empty()) {host = "0.0.0.0";}
  try {
    std::size_t used = 0;
    const int p = std::stoi(port, &used);
    if (used != port.size() || p < 0 || p > 65535) {throw std::out_of_range("port");}
    return {host, p};
  } catch (const std::exception &) {
    throw ConfigError("invalid listen address '" + addr + "' (expected host:port)");
  }
}

inline sockaddr_in resolve_ipv4(const std::string & host, int port)
{
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(static_cast<uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &sa.sin_addr) == 1) {
    return sa;
  }
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo * res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) {
    throw ConfigError("cannot resolve host '" + host + "'");
  }
  sa.sin_addr = reinterpret_cast<sockaddr_in *>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return sa;
}

inline void set_nodelay(const Socket & s)
{
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

/// Bound, listening socket and the port actually assigned (port 0 picks a free one).
inline std::pair<Socket, int> listen_tcp(const std::string & host, int port)
{
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) {
    throw Error(std::string("socket: ") + std::strerror(errno));
  }
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in sa = resolve_ipv4(host, port);
  if (::bind(s.fd(), reinterpret_cast<sockaddr *>(&sa), sizeof(sa)) != 0) {
    throw Error("bind " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  }
  if (::listen(s.fd(), 16) != 0) {
    throw Error(std::string("listen: ") + std::strerror(errno));
  }
  socklen_t len = sizeof(sa);
  ::getsockname(s.fd(), reinterpret_cast<sockaddr *>(&sa), &len);
  return {std::move(s), ntohs(sa.sin_port)};
}

inline Socket connect_tcp(const std::string & host, int port)
{
  Socket s(::socket(AF_INET, SOCK_STREAM, 0));
  if (!s.valid()) {
    throw Error(std::string("socket: ") + std::strerror(errno));
  }
  sockaddr_in sa = resolve_ipv4(host, port);
  if (::connect(s.fd(), reinterpret_cast<sockaddr *>(&sa), sizeof(sa)) != 0) {
    throw Error("connect " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
  }
  set_nodelay(s);
  return s;
}

}  // namespace driftguard::teleop

#endif  // DRIFTGUARD__TELEOP__SOCKET_HPP_
