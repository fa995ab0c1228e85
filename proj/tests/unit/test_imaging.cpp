#include <gtest/gtest.h>

#include <random>

#include "fidtrack/imaging.hpp"

using namespace fidtrack;

namespace {

Frame random_frame(std::mt19937_64& rng, int w, int h) {
  Frame f(w, h);
  std::uniform_int_distribution<int> b(0, 255);
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(b(rng));
  return f;
}

}  // namespace

TEST(Hsv, Examples) {
  const HsvPixel red = rgb_to_hsv(255, 0, 0);
  EXPECT_DOUBLE_EQ(red.h, 0.0);
  EXPECT_DOUBLE_EQ(red.s, 1.0);
  EXPECT_DOUBLE_EQ(red.v, 1.0);
  const HsvPixel black = rgb_to_hsv(0, 0, 0);
  EXPECT_DOUBLE_EQ(black.h, 0.0);
  EXPECT_DOUBLE_EQ(black.s, 0.0);
  EXPECT_DOUBLE_EQ(black.v, 0.0);
  const HsvPixel gray = rgb_to_hsv(128, 128, 128);
  EXPECT_DOUBLE_EQ(gray.h, 0.0);
  EXPECT_DOUBLE_EQ(gray.s, 0.0);
  EXPECT_NEAR(gray.v, 128.0 / 255.0, 1e-12);
}

TEST(Hsv, PrimaryHues) {
  EXPECT_NEAR(rgb_to_hsv(0, 255, 0).h, 120.0, 1e-12);
  EXPECT_NEAR(rgb_to_hsv(0, 0, 255).h, 240.0, 1e-12);
  EXPECT_NEAR(rgb_to_hsv(255, 255, 0).h, 60.0, 1e-12);
  EXPECT_NEAR(rgb_to_hsv(255, 0, 128).h, 360.0 - 128.0 / 255.0 * 60.0, 1e-9);
}

TEST(Hsv, RangesHoldForAllColors) {
  for (int r = 0; r < 256; r += 5)
    for (int g = 0; g < 256; g += 5)
      for (int b = 0; b < 256; b += 5) {
        const HsvPixel p = rgb_to_hsv(r, g, b);
        ASSERT_GE(p.h, 0.0);
        ASSERT_LT(p.h, 360.0);
        ASSERT_GE(p.s, 0.0);
        ASSERT_LE(p.s, 1.0);
        ASSERT_NEAR(p.v, std::max({r, g, b}) / 255.0, 1e-12);
      }
}

TEST(Hsv, GraysHaveZeroSaturation) {
  for (int v = 0; v < 256; ++v) {
    const HsvPixel p = rgb_to_hsv(v, v, v);
    EXPECT_EQ(p.s, 0.0);
    EXPECT_EQ(p.h, 0.0);
  }
}

TEST(BackgroundMask, IdenticalFramesAreAllBackground) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const Frame f = random_frame(rng, 31, 17);
    for (int tau : {0, 1, 50, 254}) EXPECT_EQ(background_mask(f, f, tau).count(), 0u);
  }
}

TEST(BackgroundMask, SinglePixelAboveThreshold) {
  const Frame bg(8, 6, {10, 10, 10});
  Frame cur = bg;
  cur.set(3, 2, {70, 70, 70});
  const BinaryMask m = background_mask(cur, bg, 50);
  EXPECT_EQ(m.count(), 1u);
  EXPECT_TRUE(m.at(3, 2));
}

TEST(BackgroundMask, ThresholdIsStrict) {
  const Frame bg(4, 4, {100, 100, 100});
  Frame cur = bg;
  cur.set(1, 1, {150, 150, 150});
  EXPECT_EQ(background_mask(cur, bg, 50).count(), 0u);
}

TEST(BackgroundMask, UsesRoundedChannelMean) {
  const Frame bg(1, 1, {0, 0, 0});
  Frame cur = bg;
  cur.set(0, 0, {51, 50, 50});  // mean 50.33 rounds to 50
  EXPECT_EQ(background_mask(cur, bg, 50).count(), 0u);
  cur.set(0, 0, {51, 51, 50});  // mean 50.67 rounds to 51
  EXPECT_EQ(background_mask(cur, bg, 50).count(), 1u);
  cur.set(0, 0, {150, 0, 0});  // luma would differ; the mean is exactly 50
  EXPECT_EQ(background_mask(cur, bg, 50).count(), 0u);
}

TEST(BackgroundMask, DifferenceIsAbsolute) {
  const Frame bg(1, 1, {200, 200, 200});
  const Frame cur(1, 1, {100, 100, 100});
  EXPECT_EQ(background_mask(cur, bg, 50).count(), 1u);
}

TEST(BackgroundMask, RaisingThresholdNeverAddsForeground) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 20; ++i) {
    const Frame a = random_frame(rng, 23, 19);
    const Frame b = random_frame(rng, 23, 19);
    for (int t1 = 0; t1 < 255; t1 += 17) {
      const BinaryMask lo = background_mask(a, b, t1);
      const BinaryMask hi = background_mask(a, b, t1 + 13);
      for (std::size_t k = 0; k < lo.bits.size(); ++k) ASSERT_LE(hi.bits[k], lo.bits[k]);
    }
  }
}

TEST(BackgroundMask, DimensionMismatchThrows) {
  try {
    background_mask(Frame(4, 4), Frame(4, 5), 50);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(ApplyMask, AllForegroundIsIdentity) {
  std::mt19937_64 rng(3);
  const Frame f = random_frame(rng, 13, 9);
  EXPECT_EQ(apply_mask(f, BinaryMask(13, 9, true)).pixels, f.pixels);
}

TEST(ApplyMask, AllBackgroundIsBlack) {
  std::mt19937_64 rng(4);
  const Frame f = random_frame(rng, 13, 9);
  const Frame out = apply_mask(f, BinaryMask(13, 9, false));
  for (auto b : out.pixels) EXPECT_EQ(b, 0);
}

TEST(ApplyMask, CheckerboardKeepsExactlyForegroundPixels) {
  std::mt19937_64 rng(5);
  const Frame f = random_frame(rng, 16, 11);
  BinaryMask m(16, 11);
  for (int y = 0; y < 11; ++y)
    for (int x = 0; x < 16; ++x) m.set(x, y, (x + y) % 2 == 0);
  const Frame out = apply_mask(f, m);
  for (int y = 0; y < 11; ++y) {
    for (int x = 0; x < 16; ++x) {
      const Rgb expect = (x + y) % 2 == 0 ? f.at(x, y) : Rgb{0, 0, 0};
      ASSERT_EQ(out.at(x, y), expect) << x << "," << y;
    }
  }
}

TEST(ApplyMask, Idempotent) {
  std::mt19937_64 rng(6);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < 20; ++i) {
    const Frame f = random_frame(rng, 20, 14);
    BinaryMask m(20, 14);
    for (auto& b : m.bits) b = coin(rng) ? 1 : 0;
    const Frame once = apply_mask(f, m);
    EXPECT_EQ(apply_mask(once, m).pixels, once.pixels);
  }
}

TEST(ApplyMask, DimensionMismatchThrows) { EXPECT_THROW(apply_mask(Frame(3, 3), BinaryMask(3, 4)), Error); }

TEST(Gray, IntegerLuma) {
  Frame f(3, 1);
  f.set(0, 0, {255, 255, 255});
  f.set(1, 0, {255, 0, 0});
  f.set(2, 0, {0, 0, 0});
  const GrayFrame g = to_gray(f);
  EXPECT_EQ(g.at(0, 0), 255);
  EXPECT_EQ(g.at(1, 0), 76);  // (299 * 255 + 500) / 1000
  EXPECT_EQ(g.at(2, 0), 0);
}

TEST(FrameBuffer, LengthInvariant) {
  const Frame f(7, 5);
  EXPECT_EQ(f.pixels.size(), 7u * 5u * 3u);
  EXPECT_TRUE(f.well_formed());
  Frame bad = f;
  bad.pixels.pop_back();
  EXPECT_FALSE(bad.well_formed());
}
