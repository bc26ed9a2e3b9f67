#pragma once

// Byte-frame channels between the server and its clients.

#include "vienna/serialize.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <utility>

namespace vienna {

class TimeoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One direction-agnostic endpoint: frames sent on one end arrive at the
/// other in order.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual void send(const Bytes& frame) = 0;
  /// Blocks until a frame arrives; throws TimeoutError after `timeout`.
  virtual Bytes receive(std::chrono::milliseconds timeout) = 0;
};

struct ChannelPair {
  std::unique_ptr<Channel> a;
  std::unique_ptr<Channel> b;
};

/// Two queues guarded by a mutex.
ChannelPair make_inprocess_pair();
/// AF_UNIX socketpair with u64 length-prefixed frames.
ChannelPair make_socket_pair();

}  // namespace vienna
