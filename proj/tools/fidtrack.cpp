// fidtrack command-line front end.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "fidtrack/config.hpp"
#include "fidtrack/control_api.hpp"
#include "fidtrack/engine.hpp"
#include "fidtrack/frame_source.hpp"
#include "fidtrack/pose_stream.hpp"
#include "fidtrack/scene_io.hpp"
#include "fidtrack/size_sweep.hpp"
#include "fidtrack/wire.hpp"

using namespace fidtrack;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

/// Runs every frame of `source` through `engine`, handing each wire line to `sink`.
template <typename Sink>
std::uint64_t pump(FrameSource& source, Engine& engine, Sink&& sink, bool realtime = false) {
  std::uint64_t lines = 0;
  const auto start = std::chrono::steady_clock::now();
  while (!g_stop) {
    auto frame = source.next();
    if (!frame) break;
    if (realtime) std::this_thread::sleep_until(start + std::chrono::microseconds(frame->timestamp_us));
    auto records = engine.step(*frame);
    if (!records) continue;
    sink(encode_record(frame->frame_index, frame->timestamp_us, *records));
    ++lines;
  }
  return lines;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cmd_run(const std::string& config_path, const std::string& source_path, const std::string& out_path,
            bool no_stream, bool no_control, bool realtime, double hold_s) {
  TrackerConfig cfg = load_config(config_path);
  Engine engine(cfg);
  auto source = open_source(source_path);

  std::unique_ptr<PoseStreamServer> stream;
  if (!no_stream) {
    stream = std::make_unique<PoseStreamServer>(StreamEndpoint::from_config(cfg.stream));
    stream->start();
    if (cfg.stream.transport == "unix") {
      std::cerr << "pose stream: unix:" << cfg.stream.path << "\n";
    } else {
      std::cerr << "pose stream: tcp 127.0.0.1:" << stream->port() << "\n";
    }
  }
  std::unique_ptr<ControlServer> control;
  if (!no_control) {
    control = std::make_unique<ControlServer>(engine, resolve_control_port(cfg.control.port), cfg.control.ui_dir);
    control->start();
    std::cerr << "control api: http://127.0.0.1:" << control->port() << "/api/v1/state\n";
  }

  std::ofstream file;
  std::ostream* out = nullptr;
  if (out_path == "-") {
    out = &std::cout;
  } else if (!out_path.empty()) {
    file.open(out_path, std::ios::binary);
    if (!file) throw Error(ErrorCode::kIo, "cannot write " + out_path);
    out = &file;
  }
  const std::uint64_t lines = pump(*source, engine, [&](const std::string& line) {
    if (stream) stream->publish(line);
    if (out) *out << line;
  }, realtime);
  if (out) out->flush();
  std::cerr << "processed " << lines << " frames\n";

  const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(hold_s);
  while (!g_stop && std::chrono::steady_clock::now() < until) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  if (control) control->stop();
  if (stream) stream->stop();
  return 0;
}

int cmd_replay(const std::string& config_path, const std::string& video, const std::string& golden, bool update) {
  Engine engine(load_config(config_path));
  VideoFileSource source(video);
  std::string produced;
  pump(source, engine, [&](const std::string& line) { produced += line; });
  if (update) {
    std::ofstream out(golden, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + golden);
    out << produced;
    std::cerr << "wrote " << golden << "\n";
    return 0;
  }
  const std::string expected = read_file(golden);
  if (produced == expected) {
    std::cerr << "replay matches " << golden << "\n";
    return 0;
  }
  std::istringstream a(produced), b(expected);
  std::string la, lb;
  for (std::size_t n = 1;; ++n) {
    const bool ga = static_cast<bool>(std::getline(a, la));
    const bool gb = static_cast<bool>(std::getline(b, lb));
    if (!ga && !gb) break;
    if (!ga || !gb || la != lb) {
      std::cerr << "mismatch at line " << n << "\n  produced: " << (ga ? la : "<end>")
                << "\n  golden:   " << (gb ? lb : "<end>") << "\n";
      break;
    }
  }
  return 1;
}

int cmd_synth(const std::string& script_path, const std::string& out_path) {
  const SceneScript script = load_scene(script_path);
  const auto& d = script.dictionary;
  const MarkerDictionary dict = generate_dictionary(d.count, d.grid_n, d.d_min, d.seed);
  VideoWriter writer(out_path, script.camera.width, script.camera.height);
  for (std::size_t i = 0; i < script.frame_count; ++i) writer.write(render_frame(script, i, dict).frame);
  writer.close();
  std::cerr << "wrote " << writer.frames_written() << " frames to " << out_path << "\n";
  return 0;
}

int cmd_dict(std::size_t count, int grid, int dmin, std::uint64_t seed, const std::string& out_path) {
  const MarkerDictionary dict = generate_dictionary(count, grid, dmin, seed);
  if (out_path == "-") {
    write_dictionary(std::cout, dict);
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + out_path);
    write_dictionary(out, dict);
  }
  std::cerr << dict.size() << " codes, measured d_min " << measured_min_distance(dict) << "\n";
  return 0;
}

int cmd_bench(const std::string& config_path, const std::string& video) {
  Tracker tracker(load_config(config_path));
  VideoFileSource source(video);
  if (tracker.config().background.enabled) {
    tracker.set_background(capture_background(source, tracker.config().background.capture_frames));
  }
  const auto start = std::chrono::steady_clock::now();
  while (auto frame = source.next()) tracker.process_frame(*frame);
  const double total_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  const StageTimings& t = tracker.timings();
  const double n = t.frames ? static_cast<double>(t.frames) : 1.0;
  std::printf("stage,total_ms,per_frame_ms\n");
  std::printf("binary,%.3f,%.3f\n", t.binary_ms, t.binary_ms / n);
  std::printf("colored,%.3f,%.3f\n", t.colored_ms, t.colored_ms / n);
  std::printf("solve,%.3f,%.3f\n", t.solve_ms, t.solve_ms / n);
  std::printf("all,%.3f,%.3f\n\n", total_ms, total_ms / n);
  std::printf("object_id,frames,detected,rate\n");
  for (int id : tracker.rates().objects()) {
    std::printf("%d,%llu,%llu,%.6f\n", id, static_cast<unsigned long long>(tracker.rates().frames_seen(id)),
                static_cast<unsigned long long>(tracker.detected_total(id)), tracker.rates().rate(id));
  }
  return 0;
}

int cmd_sweep(double distance, std::vector<double> sizes_px, std::size_t frames, int supersample) {
  SweepSettings s;
  s.distance = distance;
  s.frames = frames;
  s.scene.supersample = supersample;
  s.scene.background = {255, 255, 255};
  std::vector<double> sizes;
  for (double px : sizes_px) sizes.push_back(px * distance / s.scene.camera.fx);
  std::cout << sweep_csv(size_sweep(s, sizes));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fiducial marker tracker: binary square markers and Colored Points"};
  app.require_subcommand(1);

  std::string config, source, out, video, golden, script;
  bool no_stream = false, no_control = false, realtime = false, update = false;
  double hold = 0.0;
  auto* run = app.add_subcommand("run", "Track a source and serve the pose stream and control API");
  run->add_option("--config", config, "Tracker configuration (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--source", source, "Image directory, raw video file or scene script (.json)")->required();
  run->add_option("--out", out, "Also write the NDJSON pose stream to a file ('-' for stdout)");
  run->add_flag("--no-stream", no_stream, "Do not open the pose stream socket");
  run->add_flag("--no-control", no_control, "Do not start the HTTP control API");
  run->add_flag("--realtime", realtime, "Pace frames by their timestamps");
  run->add_option("--hold", hold, "Keep servers up this many seconds after the source ends");

  auto* replay = app.add_subcommand("replay", "Replay a raw video and compare against a golden NDJSON file");
  replay->add_option("--config", config)->required()->check(CLI::ExistingFile);
  replay->add_option("--video", video)->required()->check(CLI::ExistingFile);
  replay->add_option("--golden", golden)->required();
  replay->add_flag("--update", update, "Rewrite the golden file instead of comparing");

  auto* synth = app.add_subcommand("synth", "Render a scene script to a raw video");
  synth->add_option("--script", script)->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out)->required();

  std::size_t count = 50;
  int dmin = 4, grid = 4;
  std::uint64_t seed = 1;
  auto* dict = app.add_subcommand("dict", "Generate a marker dictionary");
  dict->add_option("--count", count)->required();
  dict->add_option("--dmin", dmin)->required();
  dict->add_option("--seed", seed)->required();
  dict->add_option("--grid", grid, "Bits per side")->capture_default_str();
  dict->add_option("--out", out)->required();

  auto* bench = app.add_subcommand("bench", "Per-stage timings and detection rates as CSV");
  bench->add_option("--config", config)->required()->check(CLI::ExistingFile);
  bench->add_option("--video", video)->required()->check(CLI::ExistingFile);

  double distance = 1.0;
  std::vector<double> sizes_px{4, 6, 8, 10, 12, 16, 20, 24, 32, 48};
  std::size_t frames = 60;
  int supersample = 4;
  auto* sweep = app.add_subcommand("sweep", "Detection rate against projected marker size");
  sweep->add_option("--distance", distance)->capture_default_str();
  sweep->add_option("--sizes-px", sizes_px, "Projected marker sizes in pixels");
  sweep->add_option("--frames", frames)->capture_default_str();
  sweep->add_option("--supersample", supersample)->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  try {
    if (*run) return cmd_run(config, source, out, no_stream, no_control, realtime, hold);
    if (*replay) return cmd_replay(config, video, golden, update);
    if (*synth) return cmd_synth(script, out);
    if (*dict) return cmd_dict(count, grid, dmin, seed, out);
    if (*bench) return cmd_bench(config, video);
    if (*sweep) return cmd_sweep(distance, sizes_px, frames, supersample);
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration:\n";
    for (const auto& v : e.violations()) std::cerr << "  " << v << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
