#pragma once

// HTTP/1.1 control API on loopback:
//   GET  /api/v1/state               engine status and per-object rates
//   GET  /api/v1/config              applied (or queued) configuration
//   PUT  /api/v1/config              validate and queue; 400 lists violations
//   POST /api/v1/background/capture  {"frames": N}; 409 when disabled
//   GET  /api/v1/stream              server-sent events, at most 10 per second
//   GET  /ui/                        static UI assets

#include <atomic>
#include <memory>
#include <string>
#include <thread>

#include "fidtrack/engine.hpp"
#include "json.hpp"

namespace fidtrack {

inline constexpr int kMaxStreamMessagesPerSecond = 10;

/// FIDTRACK_CONTROL_PORT, when set to a valid port, wins over the config value.
int resolve_control_port(int config_port);

nlohmann::json state_document(const Engine::Snapshot& s);
/// One /stream message; the preview is the last frame box-downscaled to at
/// most `preview_width` pixels wide, raw RGB24, base64.
nlohmann::json stream_message(const Engine::Snapshot& s, int preview_width = 160);

class ControlServer {
 public:
  ControlServer(Engine& engine, int port, std::string ui_dir = {});
  ~ControlServer();
  ControlServer(const ControlServer&) = delete;
  ControlServer& operator=(const ControlServer&) = delete;

  /// Binds 127.0.0.1 (port 0 picks a free one) and serves in a background thread.
  void start();
  void stop();
  int port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  Engine& engine_;
  int requested_port_;
  int port_ = 0;
  std::string ui_dir_;
  std::atomic<bool> running_{false};
  std::thread thread_;
};

}  // namespace fidtrack
