#pragma once

// Pull-based frame suppliers and the raw video container.
//
// Raw video ("FTRK"): 16-byte little-endian header (magic "FTRK", u32 width,
// u32 height, u32 frame count) followed by packed RGB24 frames.

#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fidtrack/binary_marker.hpp"
#include "fidtrack/imaging.hpp"
#include "fidtrack/synthetic_scene.hpp"

namespace fidtrack {

inline constexpr double kDefaultFps = 30.0;

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  /// Next frame in index order, or nullopt when exhausted.
  virtual std::optional<Frame> next() = 0;
  virtual int width() const = 0;
  virtual int height() const = 0;
};

class VideoFileSource : public FrameSource {
 public:
  explicit VideoFileSource(const std::string& path, double fps = kDefaultFps);
  std::optional<Frame> next() override;
  int width() const override { return width_; }
  int height() const override { return height_; }
  std::uint32_t frame_count() const { return count_; }

 private:
  std::ifstream in_;
  int width_ = 0;
  int height_ = 0;
  std::uint32_t count_ = 0;
  std::uint32_t index_ = 0;
  double fps_;
};

/// PNG (and binary PPM) files in a directory, in lexicographic filename order.
class ImageDirectorySource : public FrameSource {
 public:
  explicit ImageDirectorySource(const std::string& dir, double fps = kDefaultFps);
  std::optional<Frame> next() override;
  int width() const override { return width_; }
  int height() const override { return height_; }

 private:
  std::vector<std::string> files_;
  std::size_t index_ = 0;
  int width_ = 0;
  int height_ = 0;
  double fps_;
};

class SyntheticSource : public FrameSource {
 public:
  SyntheticSource(SceneScript script, MarkerDictionary dict);
  std::optional<Frame> next() override;
  int width() const override { return script_.camera.width; }
  int height() const override { return script_.camera.height; }
  const SceneScript& script() const { return script_; }

 private:
  SceneScript script_;
  MarkerDictionary dict_;
  std::size_t index_ = 0;
};

/// In-memory frames, mainly for tests.
class VectorSource : public FrameSource {
 public:
  explicit VectorSource(std::vector<Frame> frames) : frames_(std::move(frames)) {}
  std::optional<Frame> next() override {
    if (index_ >= frames_.size()) return std::nullopt;
    return frames_[index_++];
  }
  int width() const override { return frames_.empty() ? 0 : frames_.front().width; }
  int height() const override { return frames_.empty() ? 0 : frames_.front().height; }

 private:
  std::vector<Frame> frames_;
  std::size_t index_ = 0;
};

/// Picks the source kind from the path: directory, *.json scene script, or raw video.
std::unique_ptr<FrameSource> open_source(const std::string& path);

/// Streams frames into a raw video file. The frame count in the header is
/// patched on close().
class VideoWriter {
 public:
  VideoWriter(const std::string& path, int width, int height);
  ~VideoWriter();
  void write(const Frame& frame);
  void close();
  std::uint32_t frames_written() const { return count_; }

 private:
  std::ofstream out_;
  int width_;
  int height_;
  std::uint32_t count_ = 0;
};

Frame read_png(const std::string& path);
void write_png(const std::string& path, const Frame& frame);
Frame read_ppm(const std::string& path);

/// Per-pixel, per-channel mean of the next n frames, rounded half up.
Frame capture_background(FrameSource& source, int n);

}  // namespace fidtrack
