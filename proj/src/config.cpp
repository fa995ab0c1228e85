#include "fidtrack/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace fidtrack {

using nlohmann::json;

std::vector<int> TrackerConfig::object_ids() const {
  std::vector<int> ids;
  for (const auto& m : binary.markers) ids.push_back(m.id);
  for (const auto& t : colored.topologies) ids.push_back(t.object_id);
  return ids;
}

bool operator==(const TrackerConfig& a, const TrackerConfig& b) {
  return config_to_json(a) == config_to_json(b);
}

namespace {

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : "; ") + s;
  return out;
}

// Reads typed fields out of one JSON object, collecting problems instead of
// stopping at the first.
class Reader {
 public:
  Reader(const json& obj, std::string path, std::vector<std::string>& errors)
      : obj_(obj), path_(std::move(path)), errors_(errors) {
    if (!obj_.is_object()) errors_.push_back(path_ + ": expected an object");
  }
  ~Reader() {
    if (!obj_.is_object()) return;
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) errors_.push_back(at(it.key()) + ": unknown key");
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return;
    try {
      out = obj_.at(key).get<T>();
    } catch (const json::exception&) {
      errors_.push_back(at(key) + ": wrong type");
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return nullptr;
    return &obj_.at(key);
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  const json& obj_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

void read_camera(const json& j, TrackerConfig& cfg, std::vector<std::string>& errors) {
  Reader r(j, "camera", errors);
  r.get("fx", cfg.camera.fx);
  r.get("fy", cfg.camera.fy);
  r.get("cx", cfg.camera.cx);
  r.get("cy", cfg.camera.cy);
  r.get("width", cfg.camera.width);
  r.get("height", cfg.camera.height);
  if (const json* d = r.child("distortion")) {
    Reader rd(*d, "camera.distortion", errors);
    rd.get("k1", cfg.distortion.k1);
    rd.get("k2", cfg.distortion.k2);
    rd.get("k3", cfg.distortion.k3);
    rd.get("p1", cfg.distortion.p1);
    rd.get("p2", cfg.distortion.p2);
  }
}

void read_colored(const json& j, TrackerConfig& cfg, std::vector<std::string>& errors) {
  Reader r(j, "colored_points", errors);
  auto& p = cfg.colored.params;
  r.get("dist_cutoff", p.dist_cutoff);
  r.get("min_pixels", p.min_pixels);
  r.get("alpha", p.alpha);
  r.get("match_radius", p.match_radius);
  if (const json* classes = r.child("classes")) {
    if (!classes->is_array()) {
      errors.push_back("colored_points.classes: expected an array");
    } else {
      for (std::size_t i = 0; i < classes->size(); ++i) {
        const std::string path = "colored_points.classes[" + std::to_string(i) + "]";
        Reader rc((*classes)[i], path, errors);
        ColorClass c;
        rc.get("id", c.id);
        rc.get("name", c.name);
        rc.get("h_lo", c.range.h_lo);
        rc.get("h_hi", c.range.h_hi);
        rc.get("s_lo", c.range.s_lo);
        rc.get("s_hi", c.range.s_hi);
        rc.get("v_lo", c.range.v_lo);
        rc.get("v_hi", c.range.v_hi);
        cfg.colored.classes.push_back(c);
      }
    }
  }
  if (const json* topos = r.child("topologies")) {
    if (!topos->is_array()) {
      errors.push_back("colored_points.topologies: expected an array");
    } else {
      for (std::size_t i = 0; i < topos->size(); ++i) {
        const std::string path = "colored_points.topologies[" + std::to_string(i) + "]";
        Reader rt((*topos)[i], path, errors);
        ObjectTopology t;
        rt.get("object_id", t.object_id);
        rt.get("marker_size", t.marker_size);
        std::vector<std::vector<int>> lines;
        rt.get("lines", lines);
        if (lines.size() != 2 || lines[0].size() != 2 || lines[1].size() != 2) {
          errors.push_back(path + ".lines: expected two pairs of class ids");
        } else {
          t.lines = {{{lines[0][0], lines[0][1]}, {lines[1][0], lines[1][1]}}};
        }
        cfg.colored.topologies.push_back(t);
      }
    }
  }
}

void read_binary(const json& j, TrackerConfig& cfg, std::vector<std::string>& errors) {
  Reader r(j, "binary", errors);
  auto& b = cfg.binary;
  if (const json* d = r.child("dictionary")) {
    Reader rd(*d, "binary.dictionary", errors);
    rd.get("count", b.dictionary.count);
    rd.get("grid_n", b.dictionary.grid_n);
    rd.get("d_min", b.dictionary.d_min);
    rd.get("seed", b.dictionary.seed);
  }
  r.get("dictionary_file", b.dictionary_file);
  r.get("adaptive_window", b.adaptive_window);
  r.get("adaptive_offset", b.adaptive_offset);
  r.get("min_quad_area", b.min_quad_area);
  if (const json* markers = r.child("markers")) {
    if (!markers->is_array()) {
      errors.push_back("binary.markers: expected an array");
    } else {
      for (std::size_t i = 0; i < markers->size(); ++i) {
        Reader rm((*markers)[i], "binary.markers[" + std::to_string(i) + "]", errors);
        BinaryMarkerEntry m;
        rm.get("id", m.id);
        rm.get("marker_size", m.marker_size);
        b.markers.push_back(m);
      }
    }
  }
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> violations)
    : Error(ErrorCode::kInvalidArgument, "invalid configuration: " + join(violations)),
      violations_(std::move(violations)) {}

std::vector<std::string> validate(const TrackerConfig& cfg) {
  std::vector<std::string> v;
  const auto& k = cfg.camera;
  if (!(k.fx > 0.0)) v.push_back("camera.fx: must be > 0");
  if (!(k.fy > 0.0)) v.push_back("camera.fy: must be > 0");
  if (k.width <= 0 || k.height <= 0) v.push_back("camera.width/height: must be > 0");
  if (!(k.cx >= 0.0 && k.cx < k.width)) v.push_back("camera.cx: must satisfy 0 <= cx < width");
  if (!(k.cy >= 0.0 && k.cy < k.height)) v.push_back("camera.cy: must satisfy 0 <= cy < height");
  if (!cfg.distortion.finite()) v.push_back("camera.distortion: coefficients must be finite");

  if (cfg.background.tau < 0 || cfg.background.tau > 255) v.push_back("background.tau: must be in [0, 255]");
  if (cfg.background.capture_frames < 1) v.push_back("background.capture_frames: must be >= 1");

  const auto& p = cfg.colored.params;
  if (!(p.dist_cutoff > 0.0)) v.push_back("colored_points.dist_cutoff: must be > 0");
  if (p.min_pixels < 1) v.push_back("colored_points.min_pixels: must be >= 1");
  if (!(p.alpha > 0.0 && p.alpha <= 1.0)) v.push_back("colored_points.alpha: must satisfy 0 < alpha <= 1");
  if (!(p.match_radius >= 0.0)) v.push_back("colored_points.match_radius: must be >= 0");

  std::set<int> class_ids;
  for (std::size_t i = 0; i < cfg.colored.classes.size(); ++i) {
    const auto& c = cfg.colored.classes[i];
    const std::string path = "colored_points.classes[" + std::to_string(i) + "]";
    if (!class_ids.insert(c.id).second) v.push_back(path + ".id: duplicate class id " + std::to_string(c.id));
    if (!c.range.valid()) v.push_back(path + ": HSV bounds out of range or lo > hi");
  }
  std::set<int> object_ids;
  for (std::size_t i = 0; i < cfg.colored.topologies.size(); ++i) {
    const auto& t = cfg.colored.topologies[i];
    const std::string path = "colored_points.topologies[" + std::to_string(i) + "]";
    if (!(t.marker_size > 0.0)) v.push_back(path + ".marker_size: must be > 0");
    auto slots = t.corner_classes();
    std::set<int> distinct(slots.begin(), slots.end());
    if (distinct.size() != 4) v.push_back(path + ".lines: the four slots must be distinct");
    for (int s : slots) {
      if (!class_ids.count(s)) v.push_back(path + ".lines: unknown class id " + std::to_string(s));
    }
    if (!object_ids.insert(t.object_id).second) {
      v.push_back(path + ".object_id: duplicate object id " + std::to_string(t.object_id));
    }
  }

  const auto& b = cfg.binary;
  if (b.dictionary_file.empty()) {
    if (b.dictionary.count < 1) v.push_back("binary.dictionary.count: must be >= 1");
    if (b.dictionary.grid_n < 2 || b.dictionary.grid_n > 8) v.push_back("binary.dictionary.grid_n: must be in [2, 8]");
    if (b.dictionary.d_min < 1) v.push_back("binary.dictionary.d_min: must be >= 1");
  }
  if (b.adaptive_window < 3 || b.adaptive_window % 2 == 0) v.push_back("binary.adaptive_window: must be odd and >= 3");
  if (!(b.min_quad_area > 0.0)) v.push_back("binary.min_quad_area: must be > 0");
  for (std::size_t i = 0; i < b.markers.size(); ++i) {
    const auto& m = b.markers[i];
    const std::string path = "binary.markers[" + std::to_string(i) + "]";
    if (!(m.marker_size > 0.0)) v.push_back(path + ".marker_size: must be > 0");
    if (m.id < 0 || (b.dictionary_file.empty() && static_cast<std::size_t>(m.id) >= b.dictionary.count)) {
      v.push_back(path + ".id: outside the dictionary");
    }
    if (!object_ids.insert(m.id).second) v.push_back(path + ".id: duplicate object id " + std::to_string(m.id));
  }

  if (cfg.stream.transport != "unix" && cfg.stream.transport != "tcp") v.push_back("stream.transport: must be \"unix\" or \"tcp\"");
  if (cfg.stream.transport == "unix" && cfg.stream.path.empty()) v.push_back("stream.path: required for unix transport");
  if (cfg.stream.port < 0 || cfg.stream.port > 65535) v.push_back("stream.port: must be in [0, 65535]");
  if (cfg.control.port < 0 || cfg.control.port > 65535) v.push_back("control.port: must be in [0, 65535]");
  return v;
}

TrackerConfig config_from_json(const json& j) {
  std::vector<std::string> errors;
  TrackerConfig cfg;
  {
    Reader r(j, "", errors);
    std::string schema;
    r.get("schema", schema);
    if (schema != kConfigSchema) errors.push_back(std::string("schema: expected \"") + kConfigSchema + "\"");
    if (const json* c = r.child("camera")) read_camera(*c, cfg, errors);
    if (const json* b = r.child("background")) {
      Reader rb(*b, "background", errors);
      rb.get("enabled", cfg.background.enabled);
      rb.get("tau", cfg.background.tau);
      rb.get("capture_frames", cfg.background.capture_frames);
    }
    if (const json* c = r.child("colored_points")) read_colored(*c, cfg, errors);
    if (const json* b = r.child("binary")) read_binary(*b, cfg, errors);
    if (const json* s = r.child("stream")) {
      Reader rs(*s, "stream", errors);
      rs.get("transport", cfg.stream.transport);
      rs.get("path", cfg.stream.path);
      rs.get("port", cfg.stream.port);
    }
    if (const json* c = r.child("control")) {
      Reader rc(*c, "control", errors);
      rc.get("port", cfg.control.port);
      rc.get("ui_dir", cfg.control.ui_dir);
    }
  }
  if (errors.empty()) errors = validate(cfg);
  if (!errors.empty()) throw ConfigError(errors);
  return cfg;
}

TrackerConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError({std::string("document: ") + e.what()});
  }
  return config_from_json(j);
}

TrackerConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

json config_to_json(const TrackerConfig& cfg) {
  json j;
  j["schema"] = kConfigSchema;
  j["camera"] = {{"fx", cfg.camera.fx},       {"fy", cfg.camera.fy},
                 {"cx", cfg.camera.cx},       {"cy", cfg.camera.cy},
                 {"width", cfg.camera.width}, {"height", cfg.camera.height},
                 {"distortion",
                  {{"k1", cfg.distortion.k1},
                   {"k2", cfg.distortion.k2},
                   {"k3", cfg.distortion.k3},
                   {"p1", cfg.distortion.p1},
                   {"p2", cfg.distortion.p2}}}};
  j["background"] = {{"enabled", cfg.background.enabled},
                     {"tau", cfg.background.tau},
                     {"capture_frames", cfg.background.capture_frames}};
  json classes = json::array();
  for (const auto& c : cfg.colored.classes) {
    classes.push_back({{"id", c.id},
                       {"name", c.name},
                       {"h_lo", c.range.h_lo},
                       {"h_hi", c.range.h_hi},
                       {"s_lo", c.range.s_lo},
                       {"s_hi", c.range.s_hi},
                       {"v_lo", c.range.v_lo},
                       {"v_hi", c.range.v_hi}});
  }
  json topos = json::array();
  for (const auto& t : cfg.colored.topologies) {
    topos.push_back({{"object_id", t.object_id},
                     {"lines", {{t.lines[0][0], t.lines[0][1]}, {t.lines[1][0], t.lines[1][1]}}},
                     {"marker_size", t.marker_size}});
  }
  const auto& p = cfg.colored.params;
  j["colored_points"] = {{"dist_cutoff", p.dist_cutoff}, {"min_pixels", p.min_pixels},
                         {"alpha", p.alpha},             {"match_radius", p.match_radius},
                         {"classes", classes},           {"topologies", topos}};
  json markers = json::array();
  for (const auto& m : cfg.binary.markers) markers.push_back({{"id", m.id}, {"marker_size", m.marker_size}});
  const auto& b = cfg.binary;
  j["binary"] = {{"dictionary",
                  {{"count", b.dictionary.count},
                   {"grid_n", b.dictionary.grid_n},
                   {"d_min", b.dictionary.d_min},
                   {"seed", b.dictionary.seed}}},
                 {"dictionary_file", b.dictionary_file},
                 {"adaptive_window", b.adaptive_window},
                 {"adaptive_offset", b.adaptive_offset},
                 {"min_quad_area", b.min_quad_area},
                 {"markers", markers}};
  j["stream"] = {{"transport", cfg.stream.transport}, {"path", cfg.stream.path}, {"port", cfg.stream.port}};
  j["control"] = {{"port", cfg.control.port}, {"ui_dir", cfg.control.ui_dir}};
  return j;
}

std::string canonical_config_text(const TrackerConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

void save_config(const std::string& path, const TrackerConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write config " + path);
  out << canonical_config_text(cfg);
}

MarkerDictionary load_dictionary(const BinaryConfig& cfg) {
  if (!cfg.dictionary_file.empty()) {
    std::ifstream in(cfg.dictionary_file);
    if (!in) throw Error(ErrorCode::kIo, "cannot open dictionary " + cfg.dictionary_file);
    return read_dictionary(in);
  }
  const auto& d = cfg.dictionary;
  return generate_dictionary(d.count, d.grid_n, d.d_min, d.seed);
}

}  // namespace fidtrack
