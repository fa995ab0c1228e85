#include "fidtrack/scene_io.hpp"

#include <fstream>
#include <sstream>

namespace fidtrack {

using nlohmann::json;

namespace {

Rgb rgb_from(const json& j) {
  const auto v = j.get<std::vector<int>>();
  if (v.size() != 3) throw Error(ErrorCode::kParse, "color must be [r, g, b]");
  for (int c : v) {
    if (c < 0 || c > 255) throw Error(ErrorCode::kParse, "color channel outside [0, 255]");
  }
  return {static_cast<std::uint8_t>(v[0]), static_cast<std::uint8_t>(v[1]), static_cast<std::uint8_t>(v[2])};
}

json rgb_to(Rgb c) { return json::array({c.r, c.g, c.b}); }

Vec3 vec3_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw Error(ErrorCode::kParse, "expected a 3-vector");
  return {v[0], v[1], v[2]};
}

json vec3_to(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

}  // namespace

SceneScript scene_from_json(const json& j) {
  try {
    if (j.value("schema", std::string()) != kSceneSchema) {
      throw Error(ErrorCode::kParse, std::string("scene schema must be \"") + kSceneSchema + "\"");
    }
    SceneScript s;
    if (j.contains("camera")) {
      const json& c = j["camera"];
      s.camera.fx = c.value("fx", s.camera.fx);
      s.camera.fy = c.value("fy", s.camera.fy);
      s.camera.cx = c.value("cx", s.camera.cx);
      s.camera.cy = c.value("cy", s.camera.cy);
      s.camera.width = c.value("width", s.camera.width);
      s.camera.height = c.value("height", s.camera.height);
      if (c.contains("distortion")) {
        const json& d = c["distortion"];
        s.distortion = {d.value("k1", 0.0), d.value("k2", 0.0), d.value("k3", 0.0), d.value("p1", 0.0),
                        d.value("p2", 0.0)};
      }
    }
    if (!s.camera.valid()) throw Error(ErrorCode::kParse, "invalid scene camera");
    if (j.contains("background")) s.background = rgb_from(j["background"]);
    s.noise_sigma = j.value("noise_sigma", 0.0);
    s.noise_seed = j.value("noise_seed", std::uint64_t{0});
    s.frame_count = j.value("frame_count", std::size_t{1});
    s.fps = j.value("fps", 30.0);
    s.supersample = j.value("supersample", 1);
    if (s.frame_count < 1 || !(s.fps > 0.0) || s.supersample < 1 || s.noise_sigma < 0.0) {
      throw Error(ErrorCode::kParse, "frame_count, fps and supersample must be positive");
    }
    for (const auto& cc : j.value("class_colors", json::array())) {
      s.class_colors[cc.at("class_id").get<int>()] = rgb_from(cc.at("rgb"));
    }
    if (j.contains("dictionary")) {
      const json& d = j["dictionary"];
      s.dictionary = {d.value("count", std::size_t{50}), d.value("grid_n", 4), d.value("d_min", 4),
                      d.value("seed", std::uint64_t{1})};
    }
    for (const auto& o : j.value("objects", json::array())) {
      SceneObject obj;
      const std::string kind = o.at("kind").get<std::string>();
      if (kind == "binary") {
        obj.kind = MarkerKind::kBinary;
        obj.marker_id = o.at("marker_id").get<int>();
      } else if (kind == "colored") {
        obj.kind = MarkerKind::kColored;
        const auto cls = o.at("corner_classes").get<std::vector<int>>();
        if (cls.size() != 4) throw Error(ErrorCode::kParse, "corner_classes needs 4 ids (TL, TR, BR, BL)");
        std::copy(cls.begin(), cls.end(), obj.corner_classes.begin());
      } else {
        throw Error(ErrorCode::kParse, "object kind must be binary or colored");
      }
      obj.object_id = o.at("object_id").get<int>();
      obj.marker_size = o.at("marker_size").get<double>();
      if (!(obj.marker_size > 0.0)) throw Error(ErrorCode::kParse, "marker_size must be > 0");
      obj.first_frame = o.value("first_frame", std::size_t{0});
      obj.last_frame = o.value("last_frame", static_cast<std::size_t>(-1));
      for (const auto& k : o.at("keyframes")) {
        Keyframe kf;
        kf.frame = k.at("frame").get<std::size_t>();
        kf.pose.translation = vec3_from(k.at("t"));
        kf.pose.rotation = axis_angle_to_matrix({vec3_from(k.at("axis_angle"))});
        if (!(kf.pose.translation.z() > 0.0)) throw Error(ErrorCode::kParse, "keyframe pose must have z > 0");
        if (!obj.keyframes.empty() && kf.frame <= obj.keyframes.back().frame) {
          throw Error(ErrorCode::kParse, "keyframes must have increasing frame numbers");
        }
        obj.keyframes.push_back(kf);
      }
      if (obj.keyframes.empty()) throw Error(ErrorCode::kParse, "object needs at least one keyframe");
      s.objects.push_back(std::move(obj));
    }
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("scene script: ") + e.what());
  }
}

json scene_to_json(const SceneScript& s) {
  json j;
  j["schema"] = kSceneSchema;
  j["camera"] = {{"fx", s.camera.fx},
                 {"fy", s.camera.fy},
                 {"cx", s.camera.cx},
                 {"cy", s.camera.cy},
                 {"width", s.camera.width},
                 {"height", s.camera.height},
                 {"distortion",
                  {{"k1", s.distortion.k1},
                   {"k2", s.distortion.k2},
                   {"k3", s.distortion.k3},
                   {"p1", s.distortion.p1},
                   {"p2", s.distortion.p2}}}};
  j["background"] = rgb_to(s.background);
  j["noise_sigma"] = s.noise_sigma;
  j["noise_seed"] = s.noise_seed;
  j["frame_count"] = s.frame_count;
  j["fps"] = s.fps;
  j["supersample"] = s.supersample;
  json colors = json::array();
  for (const auto& [id, c] : s.class_colors) colors.push_back({{"class_id", id}, {"rgb", rgb_to(c)}});
  j["class_colors"] = colors;
  j["dictionary"] = {{"count", s.dictionary.count},
                     {"grid_n", s.dictionary.grid_n},
                     {"d_min", s.dictionary.d_min},
                     {"seed", s.dictionary.seed}};
  json objects = json::array();
  for (const auto& o : s.objects) {
    json jo;
    jo["kind"] = to_string(o.kind);
    jo["object_id"] = o.object_id;
    if (o.kind == MarkerKind::kBinary) {
      jo["marker_id"] = o.marker_id;
    } else {
      jo["corner_classes"] = o.corner_classes;
    }
    jo["marker_size"] = o.marker_size;
    jo["first_frame"] = o.first_frame;
    if (o.last_frame != static_cast<std::size_t>(-1)) jo["last_frame"] = o.last_frame;
    json kfs = json::array();
    for (const auto& k : o.keyframes) {
      kfs.push_back({{"frame", k.frame},
                     {"t", vec3_to(k.pose.translation)},
                     {"axis_angle", vec3_to(matrix_to_axis_angle(k.pose.rotation).vector)}});
    }
    jo["keyframes"] = kfs;
    objects.push_back(jo);
  }
  j["objects"] = objects;
  return j;
}

SceneScript load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open scene " + path);
  try {
    return scene_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("scene script: ") + e.what());
  }
}

void save_scene(const std::string& path, const SceneScript& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write scene " + path);
  out << scene_to_json(s).dump(2) << '\n';
}

}  // namespace fidtrack
