#include <gtest/gtest.h>

#include <cstdlib>

#include "fidtrack/control_api.hpp"
#include "scenes.hpp"

// After Eigen: resolv.h defines _res.
#include <httplib.h>

using namespace fidtrack;
using nlohmann::json;
using namespace std::chrono_literals;

namespace {

struct Harness {
  explicit Harness(TrackerConfig cfg) : engine(std::move(cfg)), server(engine, 0) {
    server.start();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", server.port());
    c.set_read_timeout(5, 0);
    return c;
  }
  Engine engine;
  ControlServer server;
};

}  // namespace

TEST(ControlApi, PortOverrideFromEnvironment) {
  ::unsetenv("FIDTRACK_CONTROL_PORT");
  EXPECT_EQ(resolve_control_port(8080), 8080);
  ::setenv("FIDTRACK_CONTROL_PORT", "9191", 1);
  EXPECT_EQ(resolve_control_port(8080), 9191);
  ::setenv("FIDTRACK_CONTROL_PORT", "notaport", 1);
  EXPECT_EQ(resolve_control_port(8080), 8080);
  ::setenv("FIDTRACK_CONTROL_PORT", "70000", 1);
  EXPECT_EQ(resolve_control_port(8080), 8080);
  ::unsetenv("FIDTRACK_CONTROL_PORT");
}

TEST(ControlApi, PutInvalidConfigListsViolations) {
  Harness h(scenes::two_objects_config());
  auto c = h.client();
  json doc = json::parse(canonical_config_text(scenes::two_objects_config()));
  doc["colored_points"]["alpha"] = 1.5;
  const auto res = c.Put("/api/v1/config", doc.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  const json body = json::parse(res->body);
  ASSERT_EQ(body["errors"].size(), 1u);
  EXPECT_NE(body["errors"][0].get<std::string>().find("alpha"), std::string::npos);
  // Nothing was queued.
  EXPECT_EQ(h.engine.config(), scenes::two_objects_config());

  const auto junk = c.Put("/api/v1/config", "{not json", "application/json");
  ASSERT_TRUE(junk);
  EXPECT_EQ(junk->status, 400);
}

TEST(ControlApi, PutThenGetRoundTrips) {
  Harness h(scenes::two_objects_config());
  auto c = h.client();
  TrackerConfig next = scenes::two_objects_config();
  next.colored.params.alpha = 0.5;
  next.binary.markers.push_back({9, 0.04});
  const std::string text = canonical_config_text(next);
  const auto put = c.Put("/api/v1/config", text, "application/json");
  ASSERT_TRUE(put);
  EXPECT_EQ(put->status, 200);
  EXPECT_EQ(put->body, text);
  const auto get = c.Get("/api/v1/config");
  ASSERT_TRUE(get);
  EXPECT_EQ(get->status, 200);
  EXPECT_EQ(get->body, text);
  EXPECT_EQ(parse_config(get->body), next);
}

TEST(ControlApi, CaptureConflictsWhenDisabled) {
  Harness h(scenes::two_objects_config());
  auto c = h.client();
  const auto res = c.Post("/api/v1/background/capture", R"({"frames":3})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 409);
}

TEST(ControlApi, CaptureAcceptedWhenEnabled) {
  TrackerConfig cfg = scenes::two_objects_config();
  cfg.background.enabled = true;
  Harness h(cfg);
  auto c = h.client();
  const auto res = c.Post("/api/v1/background/capture", R"({"frames":4})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 202);
  EXPECT_EQ(json::parse(res->body)["frames"], 4);
  const auto state = json::parse(c.Get("/api/v1/state")->body);
  EXPECT_EQ(state["background"]["capture_remaining"], 4);

  const auto bad = c.Post("/api/v1/background/capture", R"({"frames":0})", "application/json");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
}

TEST(ControlApi, StateReportsRates) {
  Harness h(scenes::two_objects_config());
  const MarkerDictionary dict = generate_dictionary(50, 4, 4, 1);
  const SceneScript s = scenes::two_objects(60);
  for (std::size_t i = 0; i < 60; ++i) h.engine.step(render_frame(s, i, dict).frame);
  auto c = h.client();
  const auto res = c.Get("/api/v1/state");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const json st = json::parse(res->body);
  EXPECT_EQ(st["frames_processed"], 60);
  EXPECT_EQ(st["last_frame_index"], 59);
  ASSERT_EQ(st["objects"].size(), 2u);
  for (const auto& o : st["objects"]) {
    EXPECT_EQ(o["rate"].get<double>(), 1.0);
    EXPECT_EQ(o["frames_seen"], 60);
  }
  EXPECT_EQ(st["objects"][0]["id"], scenes::kBinaryId);
  EXPECT_EQ(st["objects"][1]["kind"], "colored");
}

TEST(ControlApi, StreamIsRateLimited) {
  Harness h(scenes::two_objects_config());
  const MarkerDictionary dict = generate_dictionary(50, 4, 4, 1);
  const Frame f = render_frame(scenes::two_objects(1), 0, dict).frame;
  std::atomic<bool> feeding{true};
  std::thread feeder([&] {
    while (feeding) {
      h.engine.step(f);
      std::this_thread::sleep_for(5ms);
    }
  });

  std::vector<json> messages;
  const auto t0 = std::chrono::steady_clock::now();
  auto c = h.client();
  std::string pending;
  c.Get("/api/v1/stream", [&](const char* data, std::size_t len) {
    pending.append(data, len);
    for (auto pos = pending.find("\n\n"); pos != std::string::npos; pos = pending.find("\n\n")) {
      const std::string event = pending.substr(0, pos);
      pending.erase(0, pos + 2);
      if (event.rfind("data: ", 0) == 0) messages.push_back(json::parse(event.substr(6)));
    }
    return std::chrono::steady_clock::now() - t0 < 2s;
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  feeding = false;
  feeder.join();

  ASSERT_GE(messages.size(), 3u);
  EXPECT_LE(static_cast<double>(messages.size()), kMaxStreamMessagesPerSecond * secs + 1.0);
  const json& m = messages.back();
  EXPECT_EQ(m["masses"].size(), 4u);
  EXPECT_EQ(m["markers"].size(), 1u);
  EXPECT_EQ(m["rates"][std::to_string(scenes::kBinaryId)], 1.0);
  ASSERT_TRUE(m["preview"].is_object());
  EXPECT_LE(m["preview"]["width"].get<int>(), 160);
}

TEST(ControlApi, UiPlaceholderServed) {
  Harness h(scenes::two_objects_config());
  auto c = h.client();
  const auto res = c.Get("/ui/");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_NE(res->body.find("/api/v1/state"), std::string::npos);
}

TEST(ControlApi, StreamMessagePreviewDownscales) {
  Engine::Snapshot s;
  s.last_frame = Frame(320, 240, {10, 20, 30});
  const json m = stream_message(s, 160);
  EXPECT_EQ(m["preview"]["width"], 160);
  EXPECT_EQ(m["preview"]["height"], 120);
  EXPECT_EQ(m["preview"]["scale"], 2);
  EXPECT_TRUE(stream_message(Engine::Snapshot{})["preview"].is_null());
}
