#include "fidtrack/control_api.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>

namespace fidtrack {

using nlohmann::json;

namespace {

const char* kUiPlaceholder =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>fidtrack</title></head><body>"
    "<h1>fidtrack</h1><p>The configuration UI assets are not installed. Set control.ui_dir "
    "to a built UI directory.</p><ul><li><a href=\"/api/v1/state\">/api/v1/state</a></li>"
    "<li><a href=\"/api/v1/config\">/api/v1/config</a></li><li>/api/v1/stream (server-sent "
    "events)</li></ul></body></html>\n";

json vec2(const Vec2& v) { return json::array({v.x(), v.y()}); }

}  // namespace

int resolve_control_port(int config_port) {
  if (const char* env = std::getenv("FIDTRACK_CONTROL_PORT")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 0 && v <= 65535) return static_cast<int>(v);
  }
  return config_port;
}

json state_document(const Engine::Snapshot& s) {
  json objects = json::array();
  for (int id : s.object_ids) {
    objects.push_back({{"id", id},
                       {"kind", s.kinds.at(id)},
                       {"rate", s.rates.at(id)},
                       {"frames_seen", s.frames_seen.at(id)}});
  }
  return {{"frames_processed", s.frames_processed},
          {"last_frame_index", s.diagnostics.frame_index},
          {"background",
           {{"enabled", s.background_enabled},
            {"captured", s.background_captured},
            {"capture_remaining", s.capture_remaining}}},
          {"objects", objects}};
}

json stream_message(const Engine::Snapshot& s, int preview_width) {
  json masses = json::array();
  for (const auto& m : s.diagnostics.masses) {
    masses.push_back({{"class_id", m.class_id},
                      {"bbox", {m.bbox.min_x, m.bbox.min_y, m.bbox.max_x, m.bbox.max_y}},
                      {"pixel_count", m.pixel_count},
                      {"centroid", vec2(m.centroid)},
                      {"smoothed_centroid", vec2(m.smoothed_centroid)}});
  }
  json markers = json::array();
  for (const auto& m : s.diagnostics.markers) {
    json corners = json::array();
    for (const auto& c : m.corners) corners.push_back(vec2(c));
    markers.push_back({{"id", m.id}, {"corners", corners}});
  }
  json rates = json::object();
  for (const auto& [id, r] : s.rates) rates[std::to_string(id)] = r;

  json preview = nullptr;
  if (s.last_frame && s.last_frame->width > 0) {
    const Frame& f = *s.last_frame;
    const int step = std::max(1, (f.width + preview_width - 1) / preview_width);
    const int w = f.width / step;
    const int h = f.height / step;
    std::string raw(static_cast<std::size_t>(w) * h * 3, '\0');
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int ch = 0; ch < 3; ++ch) {
          int sum = 0;
          for (int dy = 0; dy < step; ++dy)
            for (int dx = 0; dx < step; ++dx) sum += f.pixels[f.offset(x * step + dx, y * step + dy) + ch];
          raw[(static_cast<std::size_t>(y) * w + x) * 3 + ch] = static_cast<char>(sum / (step * step));
        }
      }
    }
    preview = {{"format", "rgb24"}, {"width", w}, {"height", h}, {"scale", step},
               {"data", httplib::detail::base64_encode(raw)}};
  }
  return {{"frame_index", s.diagnostics.frame_index},
          {"preview", preview},
          {"masses", masses},
          {"markers", markers},
          {"rates", rates}};
}

struct ControlServer::Impl {
  httplib::Server server;
};

ControlServer::ControlServer(Engine& engine, int port, std::string ui_dir)
    : impl_(std::make_unique<Impl>()), engine_(engine), requested_port_(port), ui_dir_(std::move(ui_dir)) {}

ControlServer::~ControlServer() { stop(); }

void ControlServer::start() {
  auto& srv = impl_->server;
  Engine& engine = engine_;

  srv.Get("/api/v1/state", [&engine](const httplib::Request&, httplib::Response& res) {
    res.set_content(state_document(engine.snapshot()).dump() + "\n", "application/json");
  });

  srv.Get("/api/v1/config", [&engine](const httplib::Request&, httplib::Response& res) {
    res.set_content(canonical_config_text(engine.config()), "application/json");
  });

  srv.Put("/api/v1/config", [&engine](const httplib::Request& req, httplib::Response& res) {
    try {
      const TrackerConfig applied = engine.submit_config(parse_config(req.body));
      res.set_content(canonical_config_text(applied), "application/json");
    } catch (const ConfigError& e) {
      res.status = 400;
      res.set_content(json{{"errors", e.violations()}}.dump(2) + "\n", "application/json");
    }
  });

  srv.Post("/api/v1/background/capture", [&engine](const httplib::Request& req, httplib::Response& res) {
    int frames = engine.config().background.capture_frames;
    if (!req.body.empty()) {
      try {
        const json j = json::parse(req.body);
        frames = j.value("frames", frames);
      } catch (const json::exception& e) {
        res.status = 400;
        res.set_content(json{{"errors", {std::string("body: ") + e.what()}}}.dump() + "\n", "application/json");
        return;
      }
    }
    if (frames < 1) {
      res.status = 400;
      res.set_content(json{{"errors", {"frames: must be >= 1"}}}.dump() + "\n", "application/json");
      return;
    }
    if (!engine.request_background_capture(frames)) {
      res.status = 409;
      res.set_content(json{{"error", "background subtraction is disabled"}}.dump() + "\n", "application/json");
      return;
    }
    res.status = 202;
    res.set_content(json{{"frames", frames}}.dump() + "\n", "application/json");
  });

  srv.Get("/api/v1/stream", [this, &engine](const httplib::Request&, httplib::Response& res) {
    res.set_header("Cache-Control", "no-cache");
    auto last_version = std::make_shared<std::uint64_t>(0);
    auto last_sent = std::make_shared<std::chrono::steady_clock::time_point>();
    res.set_chunked_content_provider(
        "text/event-stream", [this, &engine, last_version, last_sent](std::size_t, httplib::DataSink& sink) {
          using namespace std::chrono;
          const auto min_gap = milliseconds(1000 / kMaxStreamMessagesPerSecond);
          while (running_) {
            const auto now = steady_clock::now();
            if (now - *last_sent < min_gap) {
              std::this_thread::sleep_for(min_gap - (now - *last_sent));
              continue;
            }
            Engine::Snapshot s = engine.snapshot(true);
            if (s.version == *last_version) {
              std::this_thread::sleep_for(milliseconds(10));
              continue;
            }
            *last_version = s.version;
            *last_sent = steady_clock::now();
            const std::string msg = "data: " + stream_message(s).dump() + "\n\n";
            return sink.write(msg.data(), msg.size());
          }
          sink.done();
          return false;
        });
  });

  if (!ui_dir_.empty() && std::filesystem::is_directory(ui_dir_)) {
    srv.set_mount_point("/ui", ui_dir_);
  } else {
    srv.Get("/ui/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kUiPlaceholder, "text/html");
    });
  }
  srv.Get("/ui", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/ui/"); });

  if (requested_port_ == 0) {
    port_ = srv.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw Error(ErrorCode::kBind, "cannot bind control API");
  } else {
    if (!srv.bind_to_port("127.0.0.1", requested_port_)) {
      throw Error(ErrorCode::kBind, "cannot bind control API on port " + std::to_string(requested_port_));
    }
    port_ = requested_port_;
  }
  running_ = true;
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void ControlServer::stop() {
  if (!running_.exchange(false)) return;
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace fidtrack
