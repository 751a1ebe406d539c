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
/// \brief Fixed-rate teleop server: one simulation loop, any number of TCP subscribers.
///
/// Reader threads parse inbound frames into a shared queue that the loop drains once per
/// tick.  Each client has a bounded outbound queue and its own writer thread; when the queue
/// is full new frames for that client are dropped, so a slow subscriber never stalls the loop.

#ifndef DRIFTGUARD__TELEOP__SERVER_HPP_
#define DRIFTGUARD__TELEOP__SERVER_HPP_

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "driftguard/errors.hpp"
#include "driftguard/teleop/protocol.hpp"
#include "driftguard/teleop/session.hpp"
#include "driftguard/teleop/socket.hpp"

namespace driftguard::teleop
{

struct ServerOptions
{
  std::string host{"127.0.0.1"};
  int port{7447};
  bool realtime{true};       // pace ticks at the session rate
  bool lockstep{false};      // wait for a command tagged with the current tick before stepping
  double lockstep_timeout{5.0};  // s
  std::int64_t max_ticks{-1};    // stop after this many ticks, -1 runs until stop()
  std::size_t client_queue{256};
};

struct ServerStats
{
  std::vector<double> tick_compute;  // s per tick: drain + filter + integration + serialization
  std::uint64_t dropped_frames{0};
  std::uint64_t protocol_errors{0};

  double percentile(double q) const
  {
    if (tick_compute.empty()) {return 0.0;}
    std::vector<double> v = tick_compute;
    const auto k = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1));
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
  }
};

class Server
{
public:
  Server(Session & session, const ServerOptions & opts)
  : session_(session), opts_(opts) {}

  ~Server() {shutdown_all();}

  /// Binds the listening socket and starts accepting; returns the bound port.
  int start()
  {
    auto [sock, port] = listen_tcp(opts_.host, opts_.port);
    listener_ = std::move(sock);
    port_ = port;
    running_ = true;
    acceptor_ = std::thread([this] {accept_loop();});
    return port_;
  }

  /// Runs the control loop on the calling thread until stop() or max_ticks.
  void run()
  {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(
      std::chrono::duration<double>(1.0 / session_.config().rate_hz));
    auto next = clock::now();
    while (running_ && (opts_.max_ticks < 0 || session_.tick_index() < opts_.max_ticks)) {
      if (opts_.lockstep) {
        wait_for_tick_command(session_.tick_index());
        if (!running_) {break;}
      }
      const auto t0 = clock::now();
      {
        std::lock_guard<std::mutex> lk(inbox_mutex_);
        for (const auto & m : inbox_) {session_.post(m);}
        inbox_.clear();
      }
      const TickOutput out = session_.tick();
      for (const auto & p : out.payloads) {
        publish(encode_frame(p));
      }
      tick_compute_.push_back(std::chrono::duration<double>(clock::now() - t0).count());
      if (opts_.realtime) {
        next += period;
        std::this_thread::sleep_until(next);
      }
    }
    session_.close_logs();
  }

  void stop()
  {
    running_ = false;
    inbox_cv_.notify_all();
  }

  /// Stops accepting, disconnects every client and joins all threads.
  void shutdown_all()
  {
    stop();
    listener_.shutdown();
    if (acceptor_.joinable()) {acceptor_.join();}
    listener_.close();
    std::list<std::shared_ptr<Client>> clients;
    {
      std::lock_guard<std::mutex> lk(clients_mutex_);
      clients.swap(clients_);
    }
    for (auto & c : clients) {
      close_client(*c);
    }
  }

  int port() const {return port_;}
  ServerStats stats() const
  {
    ServerStats s;
    s.tick_compute = tick_compute_;
    s.dropped_frames = dropped_frames_;
    s.protocol_errors = protocol_errors_;
    return s;
  }
  std::size_t client_count() const
  {
    std::lock_guard<std::mutex> lk(clients_mutex_);
    return clients_.size();
  }

private:
  struct Client
  {
    Socket sock;
    std::thread reader;
    std::thread writer;
    std::mutex m;
    std::condition_variable cv;
    std::deque<std::string> outq;
    bool closed{false};
  };

  void accept_loop()
  {
    while (running_) {
      pollfd pfd{listener_.fd(), POLLIN, 0};
      const int ready = ::poll(&pfd, 1, 100);
      if (ready <= 0) {continue;}
      const int fd = ::accept(listener_.fd(), nullptr, nullptr);
      if (fd < 0) {continue;}
      auto c = std::make_shared<Client>();
      c->sock = Socket(fd);
      set_nodelay(c->sock);
      for (const auto & p : session_.greeting()) {
        c->outq.push_back(encode_frame(p));
      }
      // Register before reading so a frame published in response to this client's first
      // command cannot miss it.
      std::lock_guard<std::mutex> lk(clients_mutex_);
      clients_.push_back(c);
      c->writer = std::thread([this, c] {write_loop(*c);});
      c->reader = std::thread([this, c] {read_loop(*c);});
    }
  }

  void read_loop(Client & c)
  {
    FrameDecoder decoder;
    std::string chunk;
    while (running_) {
      if (!c.sock.receive(chunk, 100)) {break;}
      if (chunk.empty()) {continue;}
      std::vector<std::string> payloads;
      try {
        payloads = decoder.feed(chunk);
      } catch (const ProtocolError & e) {
        enqueue(c, encode_frame(error_message(e.what())));
        ++protocol_errors_;
        break;
      }
      for (const auto & p : payloads) {
        try {
          const InboundMessage m = parse_inbound(p, session_.params());
          std::lock_guard<std::mutex> lk(inbox_mutex_);
          inbox_.push_back(m);
        } catch (const ProtocolError & e) {
          ++protocol_errors_;
          enqueue(c, encode_frame(error_message(e.what())));
        }
      }
      inbox_cv_.notify_all();
    }
    {
      std::lock_guard<std::mutex> lk(c.m);
      c.closed = true;
    }
    c.cv.notify_all();
    inbox_cv_.notify_all();
  }

  void write_loop(Client & c)
  {
    while (true) {
      std::string data;
      {
        std::unique_lock<std::mutex> lk(c.m);
        c.cv.wait(lk, [&] {return c.closed || !c.outq.empty();});
        if (c.outq.empty()) {return;}
        while (!c.outq.empty()) {
          data += c.outq.front();
          c.outq.pop_front();
        }
      }
      if (!c.sock.send_all(data)) {
        std::lock_guard<std::mutex> lk(c.m);
        c.closed = true;
        c.outq.clear();
        return;
      }
    }
  }

  void enqueue(Client & c, std::string data)
  {
    {
      std::lock_guard<std::mutex> lk(c.m);
      if (c.closed) {return;}
      if (c.outq.size() >= opts_.client_queue) {
        ++dropped_frames_;
        return;
      }
      c.outq.push_back(std::move(data));
    }
    c.cv.notify_one();
  }

  void publish(const std::string & data)
  {
    std::lock_guard<std::mutex> lk(clients_mutex_);
    for (auto it = clients_.begin(); it != clients_.end(); ) {
      Client & c = **it;
      bool closed = false;
      {
        std::lock_guard<std::mutex> ck(c.m);
        closed = c.closed;
      }
      if (closed) {
        close_client(c);
        it = clients_.erase(it);
        continue;
      }
      enqueue(c, data);
      ++it;
    }
  }

  void close_client(Client & c)
  {
    {
      std::lock_guard<std::mutex> lk(c.m);
      c.closed = true;
    }
    c.cv.notify_all();
    c.sock.shutdown();
    if (c.reader.joinable() && c.reader.get_id() != std::this_thread::get_id()) {c.reader.join();}
    if (c.writer.joinable()) {c.writer.join();}
    c.sock.close();
  }

  void wait_for_tick_command(std::int64_t tick)
  {
    std::unique_lock<std::mutex> lk(inbox_mutex_);
    inbox_cv_.wait_for(
      lk, std::chrono::duration<double>(opts_.lockstep_timeout), [&] {
        if (!running_) {return true;}
        return std::any_of(inbox_.begin(), inbox_.end(), [&](const InboundMessage & m) {
          return m.kind == InboundKind::kCommand && m.tick && *m.tick >= tick;
        });
      });
  }

  Session & session_;
  ServerOptions opts_;
  Socket listener_;
  int port_{0};
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  mutable std::mutex clients_mutex_;
  std::list<std::shared_ptr<Client>> clients_;
  std::mutex inbox_mutex_;
  std::condition_variable inbox_cv_;
  std::deque<InboundMessage> inbox_;
  std::vector<double> tick_compute_;
  std::atomic<std::uint64_t> dropped_frames_{0};
  std::atomic<std::uint64_t> protocol_errors_{0};
};

}  // namespace driftguard::teleop

#endif  // DRIFTGUARD__TELEOP__SERVER_HPP_
