#include "fidtrack/pose_stream.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>

namespace fidtrack {

struct PoseStreamServer::Consumer {
  std::uint64_t id = 0;
  int fd = -1;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::shared_ptr<const std::string>> queue;
  bool closed = false;
  bool draining = false;
  std::atomic<bool> finished{false};
  std::thread writer;

  void close_locked() {
    if (closed) return;
    closed = true;
    ::shutdown(fd, SHUT_RDWR);
    cv.notify_all();
  }

  void run() {
    for (;;) {
      std::shared_ptr<const std::string> line;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return closed || draining || !queue.empty(); });
        if (closed || queue.empty()) break;
        line = std::move(queue.front());
        queue.pop_front();
      }
      std::size_t sent = 0;
      bool failed = false;
      while (sent < line->size()) {
        const ssize_t n = ::send(fd, line->data() + sent, line->size() - sent, MSG_NOSIGNAL);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) {
          failed = true;
          break;
        }
        sent += static_cast<std::size_t>(n);
      }
      if (failed) {
        std::lock_guard lock(mu);
        close_locked();
        break;
      }
    }
    finished = true;
  }

  ~Consumer() {
    if (fd >= 0) ::close(fd);
  }
};

namespace {

[[noreturn]] void bind_error(const std::string& what) {
  throw Error(ErrorCode::kBind, what + ": " + std::strerror(errno));
}

}  // namespace

PoseStreamServer::PoseStreamServer(StreamEndpoint endpoint, Options options)
    : endpoint_(std::move(endpoint)), options_(options) {}

PoseStreamServer::~PoseStreamServer() { stop(); }

void PoseStreamServer::start() {
  if (running_) return;
  if (endpoint_.unix_socket) {
    sockaddr_un addr{};
    if (endpoint_.path.size() >= sizeof(addr.sun_path)) throw Error(ErrorCode::kBind, "socket path too long");
    listen_fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (listen_fd_ < 0) bind_error("socket");
    addr.sun_family = AF_UNIX;
    std::strncpy(addr.sun_path, endpoint_.path.c_str(), sizeof(addr.sun_path) - 1);
    ::unlink(endpoint_.path.c_str());
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      ::close(listen_fd_);
      listen_fd_ = -1;
      bind_error("bind " + endpoint_.path);
    }
  } else {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) bind_error("socket");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(endpoint_.port));
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      ::close(listen_fd_);
      listen_fd_ = -1;
      bind_error("bind 127.0.0.1:" + std::to_string(endpoint_.port));
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    bound_port_ = ntohs(addr.sin_port);
  }
  if (::listen(listen_fd_, 16) < 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    bind_error("listen");
  }
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void PoseStreamServer::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  if (endpoint_.unix_socket) ::unlink(endpoint_.path.c_str());
  std::vector<std::shared_ptr<Consumer>> all;
  {
    std::lock_guard lock(mu_);
    all.swap(consumers_);
  }
  for (auto& c : all) {
    // Queued lines are flushed first; a consumer that stopped reading is cut off.
    {
      std::lock_guard lock(c->mu);
      c->draining = true;
      c->cv.notify_all();
    }
    for (int i = 0; i < 200 && !c->finished; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
    {
      std::lock_guard lock(c->mu);
      c->close_locked();
    }
    if (c->writer.joinable()) c->writer.join();
  }
  consumers_cv_.notify_all();
}

void PoseStreamServer::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, 50);
    if (r <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    if (options_.send_buffer_bytes > 0) {
      ::setsockopt(fd, SOL_SOCKET, SO_SNDBUF, &options_.send_buffer_bytes, sizeof options_.send_buffer_bytes);
    }
    auto c = std::make_shared<Consumer>();
    c->fd = fd;
    std::lock_guard lock(mu_);
    c->id = next_id_++;
    c->writer = std::thread([raw = c.get()] { raw->run(); });
    consumers_.push_back(std::move(c));
    consumers_cv_.notify_all();
  }
}

void PoseStreamServer::reap_locked() {
  for (auto it = consumers_.begin(); it != consumers_.end();) {
    if ((*it)->finished) {
      if ((*it)->writer.joinable()) (*it)->writer.join();
      it = consumers_.erase(it);
    } else {
      ++it;
    }
  }
}

void PoseStreamServer::publish(const std::string& line) {
  auto shared = std::make_shared<const std::string>(line);
  std::lock_guard lock(mu_);
  reap_locked();
  const std::uint64_t before = published_.load();
  for (auto& c : consumers_) {
    std::lock_guard clock(c->mu);
    if (c->closed) continue;
    c->queue.push_back(shared);
    if (c->queue.size() > options_.max_backlog) {
      disconnects_.push_back({c->id, c->queue.size(), before});
      c->queue.clear();
      c->close_locked();
      continue;
    }
    std::size_t peak = peak_backlog_.load();
    while (c->queue.size() > peak && !peak_backlog_.compare_exchange_weak(peak, c->queue.size())) {
    }
    c->cv.notify_one();
  }
  ++published_;
}

std::size_t PoseStreamServer::consumer_count() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& c : consumers_) n += c->finished ? 0 : 1;
  return n;
}

bool PoseStreamServer::wait_for_consumers(std::size_t n, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  return consumers_cv_.wait_for(lock, timeout, [&] {
    std::size_t live = 0;
    for (const auto& c : consumers_) live += c->finished ? 0 : 1;
    return live >= n;
  });
}

std::vector<PoseStreamServer::DisconnectEvent> PoseStreamServer::disconnects() const {
  std::lock_guard lock(mu_);
  return disconnects_;
}

// ---------------------------------------------------------------------------

PoseStreamClient::PoseStreamClient(const StreamEndpoint& endpoint) {
  if (endpoint.unix_socket) {
    fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    std::strncpy(addr.sun_path, endpoint.path.c_str(), sizeof(addr.sun_path) - 1);
    if (fd_ < 0 || ::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      close();
      throw Error(ErrorCode::kIo, "cannot connect to " + endpoint.path);
    }
  } else {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(endpoint.port));
    if (fd_ < 0 || ::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      close();
      throw Error(ErrorCode::kIo, "cannot connect to port " + std::to_string(endpoint.port));
    }
  }
}

PoseStreamClient::~PoseStreamClient() { close(); }

void PoseStreamClient::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void PoseStreamClient::set_receive_buffer(int bytes) {
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVBUF, &bytes, sizeof bytes);
}

std::optional<std::string> PoseStreamClient::read_line(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
      std::string line = buffer_.substr(0, pos + 1);
      buffer_.erase(0, pos + 1);
      return line;
    }
    if (fd_ < 0) return std::nullopt;
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    pollfd p{fd_, POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(left.count())) <= 0) return std::nullopt;
    char buf[65536];
    const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n <= 0) {
      close();
      continue;
    }
    buffer_.append(buf, static_cast<std::size_t>(n));
  }
}

std::string PoseStreamClient::read_all(std::chrono::milliseconds timeout) {
  std::string out;
  while (auto line = read_line(timeout)) out += *line;
  out += buffer_;
  buffer_.clear();
  return out;
}

}  // namespace fidtrack
