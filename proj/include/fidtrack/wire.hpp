#pragma once

// Pose stream wire format: one canonical JSON object per processed frame,
// newline terminated.
//
//   {"v":1,"ts_us":..,"frame":..,"objects":[{"id":..,"kind":"binary"|"colored",
//    "t":[x,y,z],"q":[w,x,y,z],"err_px":..,"ambiguous":true|false},...]}
//
// t and q carry 6 decimals, err_px 3. Negative zero prints as zero.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "fidtrack/errors.hpp"
#include "fidtrack/geometry.hpp"
#include "json.hpp"

namespace fidtrack {

inline constexpr int kWireVersion = 1;

/// One resolved object in one frame, as produced by the engine.
struct DetectionRecord {
  std::uint64_t frame_index = 0;
  std::int64_t timestamp_us = 0;
  int object_id = 0;
  std::string kind = "binary";  // "binary" | "colored"
  Pose pose;
  double rms_error = 0.0;
  bool ambiguous = false;
};

struct WireObject {
  int id = 0;
  std::string kind;
  std::array<double, 3> t{};
  std::array<double, 4> q{1.0, 0.0, 0.0, 0.0};
  double err_px = 0.0;
  bool ambiguous = false;
};

struct WireRecord {
  int v = kWireVersion;
  std::int64_t ts_us = 0;
  std::uint64_t frame = 0;
  std::vector<WireObject> objects;
};

inline WireObject to_wire(const DetectionRecord& r) {
  WireObject o;
  o.id = r.object_id;
  o.kind = r.kind;
  o.t = {r.pose.translation.x(), r.pose.translation.y(), r.pose.translation.z()};
  const Quaternion q = matrix_to_quaternion(r.pose.rotation);
  o.q = {q.w, q.x, q.y, q.z};
  o.err_px = r.rms_error;
  o.ambiguous = r.ambiguous;
  return o;
}

/// Records must share one frame; an empty list needs the frame/timestamp given.
inline WireRecord to_wire(std::uint64_t frame, std::int64_t ts_us,
                          const std::vector<DetectionRecord>& records) {
  WireRecord w;
  w.ts_us = ts_us;
  w.frame = frame;
  for (const auto& r : records) {
    if (r.frame_index != frame) throw Error(ErrorCode::kInvalidArgument, "records span several frames");
    w.objects.push_back(to_wire(r));
  }
  return w;
}

namespace detail {

inline void append_fixed(std::string& out, double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string_view s(buf);
  if (s.front() == '-' && s.find_first_not_of("-0.") == std::string_view::npos) s.remove_prefix(1);
  out.append(s);
}

}  // namespace detail

inline std::string encode_record(const WireRecord& rec) {
  std::string out;
  out.reserve(64 + rec.objects.size() * 160);
  out += "{\"v\":" + std::to_string(rec.v) + ",\"ts_us\":" + std::to_string(rec.ts_us) +
         ",\"frame\":" + std::to_string(rec.frame) + ",\"objects\":[";
  for (std::size_t i = 0; i < rec.objects.size(); ++i) {
    const WireObject& o = rec.objects[i];
    if (i) out += ',';
    out += "{\"id\":" + std::to_string(o.id) + ",\"kind\":\"" + o.kind + "\",\"t\":[";
    for (int k = 0; k < 3; ++k) {
      if (k) out += ',';
      detail::append_fixed(out, o.t[k], 6);
    }
    out += "],\"q\":[";
    for (int k = 0; k < 4; ++k) {
      if (k) out += ',';
      detail::append_fixed(out, o.q[k], 6);
    }
    out += "],\"err_px\":";
    detail::append_fixed(out, o.err_px, 3);
    out += ",\"ambiguous\":";
    out += o.ambiguous ? "true" : "false";
    out += '}';
  }
  out += "]}\n";
  return out;
}

inline std::string encode_record(std::uint64_t frame, std::int64_t ts_us,
                                 const std::vector<DetectionRecord>& records) {
  return encode_record(to_wire(frame, ts_us, records));
}

/// Strict parse of one line (trailing newline optional). Checks key order,
/// the kind enum and |q| = 1 within 1e-6.
inline WireRecord parse_record(std::string_view line) {
  using json = nlohmann::ordered_json;
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
  auto expect_keys = [](const json& obj, std::initializer_list<const char*> keys) {
    if (!obj.is_object() || obj.size() != keys.size()) throw Error(ErrorCode::kParse, "unexpected key set");
    auto it = obj.begin();
    for (const char* k : keys) {
      if (it.key() != k) throw Error(ErrorCode::kParse, std::string("expected key ") + k);
      ++it;
    }
  };
  try {
    expect_keys(j, {"v", "ts_us", "frame", "objects"});
    WireRecord rec;
    rec.v = j["v"].get<int>();
    if (rec.v != kWireVersion) throw Error(ErrorCode::kParse, "unsupported version");
    rec.ts_us = j["ts_us"].get<std::int64_t>();
    rec.frame = j["frame"].get<std::uint64_t>();
    for (const auto& o : j["objects"]) {
      expect_keys(o, {"id", "kind", "t", "q", "err_px", "ambiguous"});
      WireObject w;
      w.id = o["id"].get<int>();
      w.kind = o["kind"].get<std::string>();
      if (w.kind != "binary" && w.kind != "colored") throw Error(ErrorCode::kParse, "bad kind");
      if (o["t"].size() != 3 || o["q"].size() != 4) throw Error(ErrorCode::kParse, "bad vector length");
      for (int k = 0; k < 3; ++k) w.t[k] = o["t"][k].get<double>();
      for (int k = 0; k < 4; ++k) w.q[k] = o["q"][k].get<double>();
      const double qn = std::sqrt(w.q[0] * w.q[0] + w.q[1] * w.q[1] + w.q[2] * w.q[2] + w.q[3] * w.q[3]);
      if (std::abs(qn - 1.0) > 1e-6) throw Error(ErrorCode::kParse, "quaternion is not unit norm");
      w.err_px = o["err_px"].get<double>();
      w.ambiguous = o["ambiguous"].get<bool>();
      rec.objects.push_back(std::move(w));
    }
    return rec;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, e.what());
  }
}

}  // namespace fidtrack
