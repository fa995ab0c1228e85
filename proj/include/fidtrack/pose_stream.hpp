#pragma once

// Broadcast of wire lines to local consumers over a Unix-domain socket or
// loopback TCP. Each consumer has its own queue and writer thread; a consumer
// whose queue grows past the backlog limit is disconnected so publish() never
// blocks.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fidtrack/config.hpp"

namespace fidtrack {

inline constexpr std::size_t kMaxConsumerBacklog = 1024;

struct StreamEndpoint {
  bool unix_socket = true;
  std::string path = "/tmp/fidtrack.sock";
  int port = 0;  // tcp; 0 picks a free port

  static StreamEndpoint from_config(const StreamConfig& c) {
    return {c.transport == "unix", c.path, c.port};
  }
};

class PoseStreamServer {
 public:
  struct Options {
    std::size_t max_backlog = kMaxConsumerBacklog;
    int send_buffer_bytes = 0;  // 0 keeps the OS default
  };
  struct DisconnectEvent {
    std::uint64_t consumer = 0;
    std::size_t backlog = 0;
    std::uint64_t published_before = 0;  // lines published before the one that overflowed
  };

  explicit PoseStreamServer(StreamEndpoint endpoint) : PoseStreamServer(std::move(endpoint), Options{}) {}
  PoseStreamServer(StreamEndpoint endpoint, Options options);
  ~PoseStreamServer();
  PoseStreamServer(const PoseStreamServer&) = delete;
  PoseStreamServer& operator=(const PoseStreamServer&) = delete;

  /// Binds and starts accepting. Throws Error(kBind).
  void start();
  void stop();

  /// Bound TCP port (after start), or 0 for a Unix socket.
  int port() const { return bound_port_; }
  const StreamEndpoint& endpoint() const { return endpoint_; }

  /// Queues `line` (newline included) for every connected consumer.
  void publish(const std::string& line);

  std::size_t consumer_count() const;
  /// Waits until at least n consumers are connected.
  bool wait_for_consumers(std::size_t n, std::chrono::milliseconds timeout) const;
  std::vector<DisconnectEvent> disconnects() const;
  /// Largest queue length any consumer reached while connected.
  std::size_t peak_backlog() const { return peak_backlog_.load(); }
  std::uint64_t published() const { return published_.load(); }

 private:
  struct Consumer;
  void accept_loop();
  void reap_locked();

  StreamEndpoint endpoint_;
  Options options_;
  int listen_fd_ = -1;
  int bound_port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;

  mutable std::mutex mu_;
  mutable std::condition_variable consumers_cv_;
  std::vector<std::shared_ptr<Consumer>> consumers_;
  std::vector<DisconnectEvent> disconnects_;
  std::uint64_t next_id_ = 0;
  std::atomic<std::size_t> peak_backlog_{0};
  std::atomic<std::uint64_t> published_{0};
};

/// Client side: connects to a pose stream and reads lines. Blocking.
class PoseStreamClient {
 public:
  explicit PoseStreamClient(const StreamEndpoint& endpoint);
  ~PoseStreamClient();
  PoseStreamClient(const PoseStreamClient&) = delete;
  PoseStreamClient& operator=(const PoseStreamClient&) = delete;

  /// Next line including its '\n', or nullopt at end of stream / timeout.
  std::optional<std::string> read_line(std::chrono::milliseconds timeout = std::chrono::seconds(5));
  /// Everything received until the server closes or the timeout passes.
  std::string read_all(std::chrono::milliseconds timeout = std::chrono::seconds(5));
  void set_receive_buffer(int bytes);
  void close();

 private:
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace fidtrack
