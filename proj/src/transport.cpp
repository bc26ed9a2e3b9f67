#include "vienna/transport.hpp"

#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace vienna {

namespace {

struct Queue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Bytes> frames;
};

class InProcessChannel final : public Channel {
 public:
  InProcessChannel(std::shared_ptr<Queue> in, std::shared_ptr<Queue> out) : in_(std::move(in)), out_(std::move(out)) {}

  void send(const Bytes& frame) override {
    {
      std::lock_guard lock(out_->mu);
      out_->frames.push_back(frame);
    }
    out_->cv.notify_one();
  }

  Bytes receive(std::chrono::milliseconds timeout) override {
    std::unique_lock lock(in_->mu);
    if (!in_->cv.wait_for(lock, timeout, [&] { return !in_->frames.empty(); }))
      throw TimeoutError("in-process channel: no frame within " + std::to_string(timeout.count()) + " ms");
    Bytes f = std::move(in_->frames.front());
    in_->frames.pop_front();
    return f;
  }

 private:
  std::shared_ptr<Queue> in_, out_;
};

class SocketChannel final : public Channel {
 public:
  explicit SocketChannel(int fd) : fd_(fd) {}
  ~SocketChannel() override { ::close(fd_); }

  void send(const Bytes& frame) override {
    ByteWriter w;
    w.u64(frame.size());
    write_all(w.bytes().data(), w.bytes().size());
    write_all(frame.data(), frame.size());
  }

  Bytes receive(std::chrono::milliseconds timeout) override {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::uint8_t header[8];
    read_all(header, sizeof header, deadline);
    ByteReader r(header);
    const std::uint64_t n = r.u64();
    if (n > (std::uint64_t{1} << 34)) throw FormatError("socket channel: implausible frame length");
    Bytes frame(static_cast<std::size_t>(n));
    read_all(frame.data(), frame.size(), deadline);
    return frame;
  }

 private:
  void write_all(const std::uint8_t* p, std::size_t n) {
    while (n > 0) {
      const ssize_t k = ::send(fd_, p, n, MSG_NOSIGNAL);
      if (k < 0) {
        if (errno == EINTR) continue;
        throw std::runtime_error(std::string("socket channel: send failed: ") + std::strerror(errno));
      }
      p += k;
      n -= static_cast<std::size_t>(k);
    }
  }

  void read_all(std::uint8_t* p, std::size_t n, std::chrono::steady_clock::time_point deadline) {
    while (n > 0) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw TimeoutError("socket channel: frame not received before the deadline");
      pollfd pfd{fd_, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw std::runtime_error(std::string("socket channel: poll failed: ") + std::strerror(errno));
      }
      if (ready == 0) continue;
      const ssize_t k = ::recv(fd_, p, n, 0);
      if (k == 0) throw std::runtime_error("socket channel: peer closed");
      if (k < 0) {
        if (errno == EINTR) continue;
        throw std::runtime_error(std::string("socket channel: recv failed: ") + std::strerror(errno));
      }
      p += k;
      n -= static_cast<std::size_t>(k);
    }
  }

  int fd_;
};

}  // namespace

ChannelPair make_inprocess_pair() {
  auto ab = std::make_shared<Queue>();
  auto ba = std::make_shared<Queue>();
  return {std::make_unique<InProcessChannel>(ba, ab), std::make_unique<InProcessChannel>(ab, ba)};
}

ChannelPair make_socket_pair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0)
    throw std::runtime_error(std::string("socketpair failed: ") + std::strerror(errno));
  return {std::make_unique<SocketChannel>(fds[0]), std::make_unique<SocketChannel>(fds[1])};
}

}  // namespace vienna
