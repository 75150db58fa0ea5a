#include "ddac/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "ddac/errors.hpp"

namespace ddac::transport {

namespace {

// Shared state of an in-process link: one queue per direction.
struct Link {
  std::mutex mutex;
  std::condition_variable ready;
  std::deque<wire::Bytes> queue[2];
  bool closed[2] = {false, false};
};

class QueueChannel final : public Channel {
 public:
  QueueChannel(std::shared_ptr<Link> link, int side) : link_(std::move(link)), side_(side) {}
  ~QueueChannel() override { close(); }

  void send(const wire::Message& msg) override {
    auto frame = wire::serialize(msg);
    std::lock_guard lock(link_->mutex);
    if (link_->closed[0] || link_->closed[1]) fail(ErrorKind::ConnectionLost, "in-process peer closed");
    link_->queue[1 - side_].push_back(std::move(frame));
    link_->ready.notify_all();
  }

  wire::Message receive(Millis timeout) override {
    std::unique_lock lock(link_->mutex);
    auto& inbox = link_->queue[side_];
    const bool got = link_->ready.wait_for(lock, timeout, [&] { return !inbox.empty() || link_->closed[1 - side_]; });
    if (!inbox.empty()) {
      auto frame = std::move(inbox.front());
      inbox.pop_front();
      lock.unlock();
      return wire::deserialize(frame);
    }
    if (!got) fail(ErrorKind::Timeout, fmt::format("no message within {} ms", timeout.count()));
    fail(ErrorKind::ConnectionLost, "in-process peer closed");
  }

  void close() override {
    std::lock_guard lock(link_->mutex);
    link_->closed[side_] = true;
    link_->ready.notify_all();
  }

 private:
  std::shared_ptr<Link> link_;
  int side_;
};

class SocketChannel final : public Channel {
 public:
  explicit SocketChannel(int fd) : fd_(fd) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~SocketChannel() override { close(); }

  void send(const wire::Message& msg) override {
    if (fd_ < 0) fail(ErrorKind::ConnectionLost, "socket already closed");
    const auto frame = wire::serialize(msg);
    std::size_t sent = 0;
    while (sent < frame.size()) {
      const auto n = ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) fail(ErrorKind::ConnectionLost, fmt::format("send failed: {}", std::strerror(errno)));
      sent += static_cast<std::size_t>(n);
    }
  }

  wire::Message receive(Millis timeout) override {
    if (fd_ < 0) fail(ErrorKind::ConnectionLost, "socket already closed");
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    wire::Bytes frame(wire::kHeaderSize);
    read_exact(frame.data(), wire::kHeaderSize, deadline, true);
    const auto length = wire::peek_length(frame);
    frame.resize(wire::kHeaderSize + length);
    read_exact(frame.data() + wire::kHeaderSize, length, deadline, false);
    return wire::deserialize(frame);
  }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

 private:
  void read_exact(std::uint8_t* out, std::size_t count, std::chrono::steady_clock::time_point deadline, bool at_boundary) {
    std::size_t got = 0;
    while (got < count) {
      const auto left = std::chrono::duration_cast<Millis>(deadline - std::chrono::steady_clock::now()).count();
      if (left <= 0) fail(ErrorKind::Timeout, "socket receive timed out");
      pollfd pfd{fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left, 1 << 30)));
      if (ready < 0 && errno == EINTR) continue;
      if (ready < 0) fail(ErrorKind::ConnectionLost, fmt::format("poll failed: {}", std::strerror(errno)));
      if (ready == 0) continue;
      const auto n = ::recv(fd_, out + got, count - got, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n == 0 && got == 0 && at_boundary) fail(ErrorKind::ConnectionLost, "peer closed the connection");
      if (n == 0) fail(ErrorKind::TruncatedFrame, "peer closed mid-frame");
      if (n < 0) fail(ErrorKind::ConnectionLost, fmt::format("recv failed: {}", std::strerror(errno)));
      got += static_cast<std::size_t>(n);
    }
  }

  int fd_;
};

sockaddr_in loopback(std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  return addr;
}

}  // namespace

std::pair<std::unique_ptr<Channel>, std::unique_ptr<Channel>> in_process_pair() {
  auto link = std::make_shared<Link>();
  return {std::make_unique<QueueChannel>(link, 0), std::make_unique<QueueChannel>(link, 1)};
}

Listener::Listener(std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd_ < 0) fail(ErrorKind::BindFailure, std::strerror(errno));
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  auto addr = loopback(port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd_, 8) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    fail(ErrorKind::BindFailure, fmt::format("port {}: {}", port, why));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Listener::~Listener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<Channel> Listener::accept(Millis timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    const auto left = std::chrono::duration_cast<Millis>(deadline - std::chrono::steady_clock::now()).count();
    if (left <= 0) fail(ErrorKind::Timeout, fmt::format("no connection on port {}", port_));
    pollfd pfd{fd_, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left, 1 << 30)));
    if (ready < 0 && errno != EINTR) fail(ErrorKind::ConnectionLost, std::strerror(errno));
    if (ready <= 0) continue;
    const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) return std::make_unique<SocketChannel>(fd);
  }
}

std::unique_ptr<Channel> connect(std::uint16_t port, Millis timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) fail(ErrorKind::ConnectionLost, std::strerror(errno));
    auto addr = loopback(port);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) return std::make_unique<SocketChannel>(fd);
    const std::string why = std::strerror(errno);
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline)
      fail(ErrorKind::Timeout, fmt::format("cannot reach worker on port {}: {}", port, why));
    std::this_thread::sleep_for(Millis(20));
  }
}

std::unique_ptr<Channel> adopt_socket(int fd) { return std::make_unique<SocketChannel>(fd); }

}  // namespace ddac::transport
