#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "../support/oracles.hpp"
#include "fidtrack/binary_marker.hpp"
#include "fidtrack/synthetic_scene.hpp"

using namespace fidtrack;

namespace {

const MarkerDictionary& dict50() {
  static const MarkerDictionary d = generate_dictionary(50, 4, 4, 1);
  return d;
}

// Bit matrix as a plain 2D array, rotated by index arithmetic.
using Grid = std::vector<std::vector<int>>;

Grid to_grid(std::uint64_t code, int n) {
  Grid g(n, std::vector<int>(n));
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) g[r][c] = (code >> (r * n + c)) & 1;
  return g;
}

Grid rotated_cw(const Grid& g) {
  const int n = static_cast<int>(g.size());
  Grid out(n, std::vector<int>(n));
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) out[c][n - 1 - r] = g[r][c];
  return out;
}

int grid_distance(const Grid& a, const Grid& b) {
  int d = 0;
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < a.size(); ++c) d += a[r][c] != b[r][c];
  return d;
}

struct Shot {
  Frame frame;
  GrayFrame gray;
  GroundTruth truth;
};

Shot shoot(const MarkerDictionary& dict, int id, const Pose& pose, double size, int w = 240,
           int h = 240, double f = 400.0) {
  SceneScript s;
  s.camera = {f, f, w / 2.0, h / 2.0, w, h};
  s.background = {255, 255, 255};
  SceneObject o;
  o.kind = MarkerKind::kBinary;
  o.marker_id = id;
  o.marker_size = size;
  o.keyframes = {{0, pose}};
  s.objects = {o};
  auto r = render_frame(s, 0, dict);
  return {r.frame, to_gray(r.frame), r.truth.at(0)};
}

std::optional<DetectedMarker> decode_single(const GrayFrame& gray, const MarkerDictionary& dict) {
  const auto found = detect_markers(gray, dict);
  if (found.size() != 1) return std::nullopt;
  return found[0];
}

GrayFrame rotate_image_cw(const GrayFrame& g) {
  GrayFrame out(g.height, g.width);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) out.at(g.height - 1 - y, x) = g.at(x, y);
  return out;
}

Vec2 rotate_point_cw(const Vec2& p, int height) { return {height - 1 - p.y(), p.x()}; }

GrayFrame blank(int w, int h, std::uint8_t v = 255) { return GrayFrame(w, h, v); }

}  // namespace

TEST(Dictionary, SingleCodeIsValid) {
  const auto d = generate_dictionary(1, 4, 4, 5);
  ASSERT_EQ(d.size(), 1u);
  const Grid g = to_grid(d.codes[0], 4);
  Grid r = g;
  for (int k = 1; k < 4; ++k) {
    r = rotated_cw(r);
    EXPECT_GE(grid_distance(g, r), 4);
  }
}

TEST(Dictionary, Deterministic) {
  EXPECT_EQ(generate_dictionary(30, 4, 4, 99), generate_dictionary(30, 4, 4, 99));
  EXPECT_NE(generate_dictionary(30, 4, 4, 99).codes, generate_dictionary(30, 4, 4, 100).codes);
}

TEST(Dictionary, ExhaustiveRotationAwareDistance) {
  const auto& d = dict50();
  ASSERT_EQ(d.size(), 50u);
  int worst = 1 << 20;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Grid gi = to_grid(d.codes[i], 4);
    Grid self = gi;
    for (int k = 1; k < 4; ++k) {
      self = rotated_cw(self);
      worst = std::min(worst, grid_distance(gi, self));
    }
    for (std::size_t j = i + 1; j < d.size(); ++j) {
      Grid gj = to_grid(d.codes[j], 4);
      for (int k = 0; k < 4; ++k) {
        worst = std::min(worst, grid_distance(gi, gj));
        gj = rotated_cw(gj);
      }
    }
  }
  EXPECT_GE(worst, 4);
  EXPECT_EQ(measured_min_distance(d), worst);
}

TEST(Dictionary, InfeasibleRequestFails) {
  try {
    generate_dictionary(10, 2, 4, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasible);
  }
  EXPECT_THROW(generate_dictionary(0, 4, 4, 1), Error);
  EXPECT_THROW(generate_dictionary(5, 4, 0, 1), Error);
}

TEST(Dictionary, RotateCodeAgreesWithGridRotation) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const std::uint64_t code = rng() & code_mask(5);
    EXPECT_EQ(to_grid(rotate_code(code, 5), 5), rotated_cw(to_grid(code, 5)));
    EXPECT_EQ(rotate_code(code, 5, 4), code);
  }
}

TEST(Dictionary, TextRoundTrip) {
  const auto& d = dict50();
  std::ostringstream os;
  write_dictionary(os, d);
  const std::string text = os.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 50);
  EXPECT_EQ(text.substr(0, 2), "0 ");
  EXPECT_EQ(text.find('\n'), 2u + 16u);
  std::istringstream is(text);
  const auto back = read_dictionary(is);
  EXPECT_EQ(back.codes, d.codes);
  EXPECT_EQ(back.grid_n, 4);
  EXPECT_EQ(back.d_min, measured_min_distance(d));
}

TEST(Dictionary, ReadRejectsMalformed) {
  for (const char* bad : {"0 0101\n1 01\n", "1 0000000000000000\n", "0 01x1\n", "", "0 010\n"}) {
    std::istringstream is(bad);
    EXPECT_THROW(read_dictionary(is), Error) << bad;
  }
}

TEST(Binarize, UniformFrameHasNoDarkPixels) {
  for (int v : {0, 7, 128, 255}) {
    EXPECT_EQ(binarize_adaptive(blank(40, 30, static_cast<std::uint8_t>(v))).count(), 0u);
  }
}

TEST(Binarize, BlackSquareInteriorIsDark) {
  GrayFrame g = blank(60, 60);
  for (int y = 20; y < 40; ++y)
    for (int x = 20; x < 40; ++x) g.at(x, y) = 0;
  const BinaryMask m = binarize_adaptive(g, 15, 7);
  for (int y = 20; y < 40; ++y)
    for (int x = 20; x < 40; ++x) {
      // Deep interior pixels see an all-black window; only the rim must be dark.
      const bool rim = x < 27 || x > 32 || y < 27 || y > 32;
      if (rim) EXPECT_TRUE(m.at(x, y)) << x << "," << y;
    }
  EXPECT_FALSE(m.at(5, 5));
  EXPECT_FALSE(m.at(19, 30));
}

TEST(Binarize, RejectsEvenWindow) {
  EXPECT_THROW(binarize_adaptive(blank(10, 10), 14), Error);
  EXPECT_THROW(binarize_adaptive(blank(10, 10), 1), Error);
}

TEST(Binarize, GradientIlluminationAdaptiveVsGlobal) {
  const auto& d = dict50();
  const Shot s = shoot(d, 11, facing_camera(Vec3(-0.09, 0.0, 0.5)), 0.1, 320, 240, 400.0);
  // Strong left-to-right illumination ramp.
  GrayFrame g = s.gray;
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      const double light = 0.25 + 0.75 * x / (g.width - 1.0);
      g.at(x, y) = static_cast<std::uint8_t>(std::lround(g.at(x, y) * light));
    }

  std::array<int, 256> hist{};
  for (auto v : g.pixels) ++hist[v];
  const int t = detail::otsu_threshold(hist);
  BinaryMask global(g.width, g.height);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) global.set(x, y, g.at(x, y) <= t);
  const BinaryMask adaptive = binarize_adaptive(g, 15, 7);

  // Read each inner cell center through the ground-truth corners.
  const auto& c = *s.truth.corners;
  const std::array<Vec2, 4> unit{Vec2(0, 0), Vec2(6, 0), Vec2(6, 6), Vec2(0, 6)};
  const Homography h = estimate_homography(std::span<const Vec2>(unit), std::span<const Vec2>(c));
  int wrong_global = 0;
  const auto code = d.codes[11];
  for (int r = 0; r < 4; ++r)
    for (int col = 0; col < 4; ++col) {
      const Vec2 p = h.apply({col + 1.5, r + 1.5});
      const int x = static_cast<int>(std::lround(p.x())), y = static_cast<int>(std::lround(p.y()));
      if (code_bit(code, 4, r, col) == global.at(x, y)) ++wrong_global;
    }
  EXPECT_GT(wrong_global, 0);

  // The adaptive mask only has to outline the marker; cells are read later.
  bool outlined = false;
  for (const Quad& q : extract_quads(adaptive)) {
    double worst = 0.0;
    for (int k = 0; k < 4; ++k) {
      double best = 1e9;
      for (int j = 0; j < 4; ++j) best = std::min(best, (q.corners[k] - c[j]).norm());
      worst = std::max(worst, best);
    }
    outlined = outlined || worst < 1.5;
  }
  EXPECT_TRUE(outlined);
  const auto m = decode_single(g, d);
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ(m->id, 11);
}

TEST(Quads, AxisAlignedSquare) {
  BinaryMask m(80, 80);
  for (int y = 20; y < 50; ++y)
    for (int x = 25; x < 55; ++x) m.set(x, y, true);
  const auto qs = extract_quads(m);
  ASSERT_EQ(qs.size(), 1u);
  const std::array<Vec2, 4> want{Vec2(25, 20), Vec2(54, 20), Vec2(54, 49), Vec2(25, 49)};
  for (const Vec2& w : want) {
    double best = 1e9;
    for (const Vec2& c : qs[0].corners) best = std::min(best, (c - w).norm());
    EXPECT_LE(best, 1.0);
  }
  EXPECT_GT(qs[0].signed_area(), 0.0);
  EXPECT_TRUE(qs[0].convex());
}

TEST(Quads, TriangleIsRejected) {
  BinaryMask m(80, 80);
  for (int y = 10; y < 70; ++y)
    for (int x = 10; x <= 10 + (y - 10); ++x) m.set(x, y, true);
  EXPECT_TRUE(extract_quads(m).empty());
}

TEST(Quads, SmallSquareBelowMinArea) {
  BinaryMask m(40, 40);
  for (int y = 10; y < 18; ++y)
    for (int x = 10; x < 18; ++x) m.set(x, y, true);
  EXPECT_TRUE(extract_quads(m).empty());
}

TEST(Quads, ThreeRenderedMarkersMatchProjection) {
  const auto& d = dict50();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> z(0.45, 0.6);
  for (int trial = 0; trial < 10; ++trial) {
    SceneScript s;
    s.camera = {500, 500, 320, 240, 640, 480};
    s.background = {255, 255, 255};
    const std::array<double, 3> xs{-0.35, 0.0, 0.35};
    for (int i = 0; i < 3; ++i) {
      SceneObject o;
      o.object_id = i;
      o.marker_id = 3 * trial + i;
      o.marker_size = 0.09;
      const double depth = z(rng);
      o.keyframes = {{0, {oracle::random_tilted_rotation(rng, 40.0), Vec3(xs[i] * depth, 0.0, depth)}}};
      s.objects.push_back(o);
    }
    const auto r = render_frame(s, 0, d);
    const GrayFrame g = to_gray(r.frame);
    const auto qs = extract_quads(binarize_adaptive(g));
    ASSERT_EQ(qs.size(), 3u) << "trial " << trial;
    for (const auto& t : r.truth) {
      ASSERT_TRUE(t.corners.has_value());
      const Vec2 center = 0.25 * ((*t.corners)[0] + (*t.corners)[1] + (*t.corners)[2] + (*t.corners)[3]);
      const Quad* match = nullptr;
      for (const auto& q : qs)
        if (q.contains(center)) match = &q;
      ASSERT_NE(match, nullptr);
      for (const Vec2& want : *t.corners) {
        double best = 1e9;
        for (const Vec2& c : match->corners) best = std::min(best, (c - want).norm());
        EXPECT_LE(best, 1.5) << "trial " << trial << " object " << t.object_id;
      }
    }
  }
}

TEST(Decode, FrontalMarker) {
  const Shot s = shoot(dict50(), 7, facing_camera(Vec3(0, 0, 0.5)), 0.1);
  const auto m = decode_single(s.gray, dict50());
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ(m->id, 7);
  EXPECT_EQ(m->rotation_applied, 0);
  EXPECT_EQ(m->hamming, 0);
  for (int i = 0; i < 4; ++i) EXPECT_LT((m->corners[i] - (*s.truth.corners)[i]).norm(), 0.75);
}

TEST(Decode, RotatedImageShiftsRotation) {
  const Shot s = shoot(dict50(), 7, facing_camera(Vec3(0.01, -0.02, 0.5)), 0.1);
  const auto base = decode_single(s.gray, dict50());
  ASSERT_TRUE(base.has_value());
  GrayFrame g = s.gray;
  std::array<Vec2, 4> tl_track = base->corners;
  int step = -1;
  for (int k = 1; k < 4; ++k) {
    const int h = g.height;
    g = rotate_image_cw(g);
    for (auto& p : tl_track) p = rotate_point_cw(p, h);
    const auto m = decode_single(g, dict50());
    ASSERT_TRUE(m.has_value()) << k;
    EXPECT_EQ(m->id, 7);
    EXPECT_EQ(m->hamming, 0);
    const int shift = ((m->rotation_applied - base->rotation_applied) % 4 + 4) % 4;
    if (step < 0) {
      step = shift;
      EXPECT_TRUE(step == 1 || step == 3);
    }
    EXPECT_EQ(shift, (step * k) % 4);
    // Marker-frame corners follow the image rotation.
    for (int i = 0; i < 4; ++i) EXPECT_LT((m->corners[i] - tl_track[i]).norm(), 0.5) << k << " " << i;
  }
}

TEST(Decode, WhiteRegionFailsBorderCheck) {
  GrayFrame g = blank(100, 100);
  const Quad q = canonical_quad({Vec2(20, 20), Vec2(80, 20), Vec2(80, 80), Vec2(20, 80)});
  const auto r = decode(g, q, dict50());
  EXPECT_TRUE(std::holds_alternative<NoMatch>(r));
  // With contrast but a broken border.
  for (int y = 20; y < 80; ++y)
    for (int x = 20; x < 50; ++x) g.at(x, y) = 0;
  const auto r2 = decode(g, q, dict50());
  ASSERT_TRUE(std::holds_alternative<NoMatch>(r2));
  EXPECT_EQ(std::get<NoMatch>(r2).reason, NoMatchReason::kBorder);
}

TEST(Decode, RenderDecodeIdentityOverDictionary) {
  const auto& d = dict50();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> z(0.3, 0.6), off(-0.03, 0.03);
  for (int id = 0; id < 50; ++id) {
    const double depth = z(rng);
    const Pose p{oracle::random_tilted_rotation(rng, 60.0), Vec3(off(rng), off(rng), depth)};
    const Shot s = shoot(d, id, p, 0.1, 320, 240, 400.0);
    const auto m = decode_single(s.gray, d);
    ASSERT_TRUE(m.has_value()) << "id " << id;
    EXPECT_EQ(m->id, id);
    EXPECT_EQ(m->hamming, 0);
  }
}

TEST(Decode, SingleBitFlipsAreCorrected) {
  const auto& d = dict50();
  for (int id : {0, 13, 49}) {
    for (int bit = 0; bit < 16; ++bit) {
      MarkerDictionary corrupted = d;
      corrupted.codes[id] ^= std::uint64_t{1} << bit;
      const Shot s = shoot(corrupted, id, facing_camera(Vec3(0, 0, 0.5)), 0.1);
      const auto m = decode_single(s.gray, d);
      ASSERT_TRUE(m.has_value()) << id << " bit " << bit;
      EXPECT_EQ(m->id, id);
      EXPECT_EQ(m->hamming, 1);
    }
  }
}

TEST(Decode, FlipsTowardAnotherCodeNeverSilentlyMisdecode) {
  const auto& d = dict50();
  std::mt19937_64 rng(12);
  int checked = 0;
  for (std::size_t i = 0; i < d.size() && checked < 40; ++i) {
    for (std::size_t j = 0; j < d.size() && checked < 40; ++j) {
      if (i == j) continue;
      // Closest rotation of j as seen in i's frame.
      std::uint64_t target = 0;
      int dist = 99;
      for (int r = 0; r < 4; ++r) {
        const auto rot = rotate_code(d.codes[j], 4, r);
        if (hamming(d.codes[i], rot) < dist) {
          dist = hamming(d.codes[i], rot);
          target = rot;
        }
      }
      if (dist != d.d_min) continue;
      std::vector<int> differing;
      for (int b = 0; b < 16; ++b)
        if (((d.codes[i] ^ target) >> b) & 1) differing.push_back(b);
      std::shuffle(differing.begin(), differing.end(), rng);
      for (int flips : {d.d_min - d.max_correction() - 1, d.d_min - d.max_correction()}) {
        MarkerDictionary corrupted = d;
        for (int k = 0; k < flips; ++k) corrupted.codes[i] ^= std::uint64_t{1} << differing[k];
        const Shot s = shoot(corrupted, static_cast<int>(i), facing_camera(Vec3(0, 0, 0.5)), 0.1);
        const auto found = detect_markers(s.gray, d);
        for (const auto& m : found) {
          if (flips < d.d_min - d.max_correction()) {
            EXPECT_EQ(m.id, static_cast<int>(i)) << i << "->" << j;
          } else {
            EXPECT_TRUE(m.id == static_cast<int>(i) || m.id == static_cast<int>(j)) << i << "->" << j;
          }
        }
      }
      ++checked;
    }
  }
  EXPECT_EQ(checked, 40);
}
