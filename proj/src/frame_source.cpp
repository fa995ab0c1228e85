#include "fidtrack/frame_source.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>

#include "fidtrack/scene_io.hpp"

namespace fidtrack {

namespace fs = std::filesystem;

namespace {

std::uint32_t read_u32le(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

void write_u32le(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::int64_t timestamp_for(std::uint64_t index, double fps) {
  return static_cast<std::int64_t>(std::llround(static_cast<double>(index) * 1e6 / fps));
}

Frame read_image(const std::string& path) {
  std::string ext = fs::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".ppm" ? read_ppm(path) : read_png(path);
}

}  // namespace

// ---------------------------------------------------------------------------

VideoFileSource::VideoFileSource(const std::string& path, double fps) : in_(path, std::ios::binary), fps_(fps) {
  if (!in_) throw Error(ErrorCode::kIo, "cannot open video " + path);
  unsigned char header[16];
  if (!in_.read(reinterpret_cast<char*>(header), 16)) throw Error(ErrorCode::kParse, "short video header");
  if (std::memcmp(header, "FTRK", 4) != 0) throw Error(ErrorCode::kParse, "not an FTRK video");
  width_ = static_cast<int>(read_u32le(header + 4));
  height_ = static_cast<int>(read_u32le(header + 8));
  count_ = read_u32le(header + 12);
  if (width_ <= 0 || height_ <= 0) throw Error(ErrorCode::kParse, "video has zero size");
}

std::optional<Frame> VideoFileSource::next() {
  if (index_ >= count_) return std::nullopt;
  Frame f(width_, height_);
  if (!in_.read(reinterpret_cast<char*>(f.pixels.data()), static_cast<std::streamsize>(f.pixels.size()))) {
    throw Error(ErrorCode::kParse, "video truncated at frame " + std::to_string(index_));
  }
  f.frame_index = index_;
  f.timestamp_us = timestamp_for(index_, fps_);
  ++index_;
  return f;
}

// ---------------------------------------------------------------------------

ImageDirectorySource::ImageDirectorySource(const std::string& dir, double fps) : fps_(fps) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIo, "not a directory: " + dir);
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".ppm") files_.push_back(e.path().string());
  }
  std::sort(files_.begin(), files_.end());
  if (files_.empty()) throw Error(ErrorCode::kIo, "no .png or .ppm files in " + dir);
  const Frame first = read_image(files_.front());
  width_ = first.width;
  height_ = first.height;
}

std::optional<Frame> ImageDirectorySource::next() {
  if (index_ >= files_.size()) return std::nullopt;
  const std::string& path = files_[index_];
  Frame f = read_image(path);
  if (f.width != width_ || f.height != height_) {
    throw Error(ErrorCode::kDimensionMismatch, "image size changes within the sequence: " + path);
  }
  f.frame_index = index_;
  f.timestamp_us = timestamp_for(index_, fps_);
  ++index_;
  return f;
}

// ---------------------------------------------------------------------------

SyntheticSource::SyntheticSource(SceneScript script, MarkerDictionary dict)
    : script_(std::move(script)), dict_(std::move(dict)) {}

std::optional<Frame> SyntheticSource::next() {
  if (index_ >= script_.frame_count) return std::nullopt;
  return render_frame(script_, index_++, dict_).frame;
}

std::unique_ptr<FrameSource> open_source(const std::string& path) {
  if (fs::is_directory(path)) return std::make_unique<ImageDirectorySource>(path);
  if (fs::path(path).extension() == ".json") {
    SceneScript s = load_scene(path);
    const auto& d = s.dictionary;
    MarkerDictionary dict = generate_dictionary(d.count, d.grid_n, d.d_min, d.seed);
    return std::make_unique<SyntheticSource>(std::move(s), std::move(dict));
  }
  return std::make_unique<VideoFileSource>(path);
}

// ---------------------------------------------------------------------------

VideoWriter::VideoWriter(const std::string& path, int width, int height)
    : out_(path, std::ios::binary | std::ios::trunc), width_(width), height_(height) {
  if (!out_) throw Error(ErrorCode::kIo, "cannot write video " + path);
  if (width <= 0 || height <= 0) throw Error(ErrorCode::kInvalidArgument, "video size must be positive");
  out_.write("FTRK", 4);
  write_u32le(out_, static_cast<std::uint32_t>(width));
  write_u32le(out_, static_cast<std::uint32_t>(height));
  write_u32le(out_, 0);
}

VideoWriter::~VideoWriter() {
  try {
    close();
  } catch (...) {
  }
}

void VideoWriter::write(const Frame& frame) {
  if (!out_.is_open()) throw Error(ErrorCode::kIo, "video writer is closed");
  if (frame.width != width_ || frame.height != height_) {
    throw Error(ErrorCode::kDimensionMismatch, "frame size differs from video size");
  }
  out_.write(reinterpret_cast<const char*>(frame.pixels.data()), static_cast<std::streamsize>(frame.pixels.size()));
  ++count_;
}

void VideoWriter::close() {
  if (!out_.is_open()) return;
  out_.seekp(12);
  write_u32le(out_, count_);
  out_.close();
  if (out_.fail()) throw Error(ErrorCode::kIo, "video write failed");
}

// ---------------------------------------------------------------------------

Frame read_png(const std::string& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw Error(ErrorCode::kParse, "cannot read png " + path + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  Frame f(static_cast<int>(image.width), static_cast<int>(image.height));
  if (!png_image_finish_read(&image, nullptr, f.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorCode::kParse, "cannot decode png " + path + ": " + msg);
  }
  return f;
}

void write_png(const std::string& path, const Frame& frame) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(frame.width);
  image.height = static_cast<png_uint_32>(frame.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, frame.pixels.data(), 0, nullptr)) {
    throw Error(ErrorCode::kIo, "cannot write png " + path + ": " + image.message);
  }
}

Frame read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  auto token = [&]() {
    std::string t;
    char c;
    while (in.get(c)) {
      if (c == '#') {
        std::string skip;
        std::getline(in, skip);
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!t.empty()) break;
      } else {
        t += c;
      }
    }
    return t;
  };
  if (token() != "P6") throw Error(ErrorCode::kParse, "only binary P6 PPM is supported: " + path);
  const int w = std::stoi(token());
  const int h = std::stoi(token());
  if (std::stoi(token()) != 255) throw Error(ErrorCode::kParse, "PPM must have maxval 255: " + path);
  Frame f(w, h);
  if (!in.read(reinterpret_cast<char*>(f.pixels.data()), static_cast<std::streamsize>(f.pixels.size()))) {
    throw Error(ErrorCode::kParse, "PPM truncated: " + path);
  }
  return f;
}

// ---------------------------------------------------------------------------

Frame capture_background(FrameSource& source, int n) {
  if (n < 1) throw Error(ErrorCode::kInvalidArgument, "background needs at least one frame");
  auto first = source.next();
  if (!first) throw Error(ErrorCode::kSourceExhausted, "source ended before background capture");
  if (n == 1) return *first;
  std::vector<std::uint32_t> sums(first->pixels.begin(), first->pixels.end());
  for (int i = 1; i < n; ++i) {
    auto f = source.next();
    if (!f) throw Error(ErrorCode::kSourceExhausted, "source ended during background capture");
    require_same_size(first->width, first->height, f->width, f->height);
    for (std::size_t k = 0; k < sums.size(); ++k) sums[k] += f->pixels[k];
  }
  Frame out = *first;
  const auto un = static_cast<std::uint32_t>(n);
  for (std::size_t k = 0; k < sums.size(); ++k) {
    out.pixels[k] = static_cast<std::uint8_t>((2 * sums[k] + un) / (2 * un));
  }
  return out;
}

}  // namespace fidtrack
