#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <utility>

#include "ddac/wire.hpp"

namespace ddac::transport {

using Millis = std::chrono::milliseconds;

/// One bidirectional, ordered, framed link between the coordinator and a worker.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void send(const wire::Message& msg) = 0;
  /// Raises Timeout when nothing arrives in time and ConnectionLost when the
  /// peer has gone away.
  virtual wire::Message receive(Millis timeout) = 0;
  virtual void close() = 0;
};

/// Two connected endpoints backed by in-memory queues. Frames still go
/// through serialize/deserialize so both transports exercise the same codec.
std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> in_process_pair();

/// TCP listener on 127.0.0.1.
class Listener {
 public:
  /// Port 0 picks an ephemeral port. Raises BindFailure.
  explicit Listener(std::uint16_t port);
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  std::uint16_t port() const { return port_; }
  /// Raises Timeout if no peer connects in time.
  std::unique_ptr<Channel> accept(Millis timeout);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Connects to 127.0.0.1:port, retrying until the deadline passes.
std::unique_ptr<Channel> connect(std::uint16_t port, Millis timeout);

/// Wraps an already connected stream socket.
std::unique_ptr<Channel> adopt_socket(int fd);

}  // namespace ddac::transport
