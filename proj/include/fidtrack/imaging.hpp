#pragma once

// Pixel-level primitives: frames, color conversion, background differencing.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <vector>

#include "fidtrack/errors.hpp"

namespace fidtrack {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Row-major RGB8 image with stream metadata.
struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3
  std::int64_t timestamp_us = 0;
  std::uint64_t frame_index = 0;

  Frame() = default;
  Frame(int w, int h, Rgb fill = {})
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3) {
    for (std::size_t i = 0; i < pixels.size(); i += 3) {
      pixels[i] = fill.r;
      pixels[i + 1] = fill.g;
      pixels[i + 2] = fill.b;
    }
  }

  std::size_t offset(int x, int y) const { return (static_cast<std::size_t>(y) * width + x) * 3; }
  Rgb at(int x, int y) const {
    const std::size_t o = offset(x, y);
    return {pixels[o], pixels[o + 1], pixels[o + 2]};
  }
  void set(int x, int y, Rgb c) {
    const std::size_t o = offset(x, y);
    pixels[o] = c.r;
    pixels[o + 1] = c.g;
    pixels[o + 2] = c.b;
  }
  bool well_formed() const {
    return width >= 0 && height >= 0 &&
           pixels.size() == static_cast<std::size_t>(width) * height * 3;
  }
};

struct GrayFrame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayFrame() = default;
  GrayFrame(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

/// One flag per pixel; 1 = set (foreground / dark, depending on producer).
struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h, bool fill = false)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
  }
};

struct HsvPixel {
  double h = 0.0;  // degrees [0, 360)
  double s = 0.0;  // [0, 1]
  double v = 0.0;  // [0, 1]
};

/// Hexcone HSV. Gray pixels (s = 0) get the canonical hue 0.
inline HsvPixel rgb_to_hsv(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  const int mx = std::max({r, g, b});
  const int mn = std::min({r, g, b});
  const int chroma = mx - mn;
  HsvPixel out;
  out.v = mx / 255.0;
  if (mx == 0 || chroma == 0) return out;
  out.s = static_cast<double>(chroma) / mx;
  double h;
  if (mx == r) {
    h = 60.0 * static_cast<double>(static_cast<int>(g) - b) / chroma;
  } else if (mx == g) {
    h = 60.0 * (2.0 + static_cast<double>(static_cast<int>(b) - r) / chroma);
  } else {
    h = 60.0 * (4.0 + static_cast<double>(static_cast<int>(r) - g) / chroma);
  }
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  out.h = h;
  return out;
}

inline HsvPixel rgb_to_hsv(Rgb c) { return rgb_to_hsv(c.r, c.g, c.b); }

inline void require_same_size(int w1, int h1, int w2, int h2) {
  if (w1 != w2 || h1 != h2) {
    throw Error(ErrorCode::kDimensionMismatch, "image dimensions differ");
  }
}

/// Integer luma (BT.601 weights), used for the binary-marker path.
inline GrayFrame to_gray(const Frame& frame) {
  GrayFrame gray(frame.width, frame.height);
  const std::size_t n = static_cast<std::size_t>(frame.width) * frame.height;
  for (std::size_t i = 0; i < n; ++i) {
    const int r = frame.pixels[3 * i];
    const int g = frame.pixels[3 * i + 1];
    const int b = frame.pixels[3 * i + 2];
    gray.pixels[i] = static_cast<std::uint8_t>((299 * r + 587 * g + 114 * b + 500) / 1000);
  }
  return gray;
}

/// Foreground iff round(mean(|dR|, |dG|, |dB|)) > threshold.
inline BinaryMask background_mask(const Frame& current, const Frame& background,
                                  std::uint8_t threshold) {
  require_same_size(current.width, current.height, background.width, background.height);
  BinaryMask mask(current.width, current.height);
  const std::size_t n = mask.bits.size();
  for (std::size_t i = 0; i < n; ++i) {
    int sum = 0;
    for (int c = 0; c < 3; ++c) {
      sum += std::abs(static_cast<int>(current.pixels[3 * i + c]) -
                      static_cast<int>(background.pixels[3 * i + c]));
    }
    // sum / 3 never lands on .5, so (sum + 1) / 3 is round-to-nearest.
    const int diff = (sum + 1) / 3;
    mask.bits[i] = diff > threshold ? 1 : 0;
  }
  return mask;
}

/// Zeroes background pixels; foreground pixels are copied unchanged.
inline Frame apply_mask(const Frame& frame, const BinaryMask& mask) {
  require_same_size(frame.width, frame.height, mask.width, mask.height);
  Frame out = frame;
  const std::size_t n = mask.bits.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.bits[i]) {
      out.pixels[3 * i] = 0;
      out.pixels[3 * i + 1] = 0;
      out.pixels[3 * i + 2] = 0;
    }
  }
  return out;
}

}  // namespace fidtrack
