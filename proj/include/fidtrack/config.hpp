#pragma once

// Tracker configuration document ("fidtrack-config/1", JSON).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fidtrack/binary_marker.hpp"
#include "fidtrack/colored_points.hpp"
#include "fidtrack/errors.hpp"
#include "fidtrack/geometry.hpp"
#include "fidtrack/synthetic_scene.hpp"
#include "json.hpp"

namespace fidtrack {

inline constexpr const char* kConfigSchema = "fidtrack-config/1";

struct BackgroundConfig {
  bool enabled = false;
  int tau = 50;
  int capture_frames = 1;

  friend bool operator==(const BackgroundConfig&, const BackgroundConfig&) = default;
};

struct BinaryMarkerEntry {
  int id = 0;  // dictionary id, also the object id on the wire
  double marker_size = 0.05;

  friend bool operator==(const BinaryMarkerEntry&, const BinaryMarkerEntry&) = default;
};

struct BinaryConfig {
  DictionarySpec dictionary;
  std::string dictionary_file;  // when set, overrides `dictionary`
  int adaptive_window = 15;
  double adaptive_offset = 7.0;
  double min_quad_area = 100.0;
  std::vector<BinaryMarkerEntry> markers;

  friend bool operator==(const BinaryConfig&, const BinaryConfig&) = default;
};

struct ColoredConfig {
  ColoredPointsConfig params;
  std::vector<ColorClass> classes;
  std::vector<ObjectTopology> topologies;

  friend bool operator==(const ColoredConfig&, const ColoredConfig&) = default;
};

struct StreamConfig {
  std::string transport = "unix";  // "unix" | "tcp"
  std::string path = "/tmp/fidtrack.sock";
  int port = 7700;

  friend bool operator==(const StreamConfig&, const StreamConfig&) = default;
};

struct ControlConfig {
  int port = 7701;
  std::string ui_dir;

  friend bool operator==(const ControlConfig&, const ControlConfig&) = default;
};

struct TrackerConfig {
  CameraIntrinsics camera{800.0, 800.0, 320.0, 240.0, 640, 480};
  DistortionCoeffs distortion;
  BackgroundConfig background;
  ColoredConfig colored;
  BinaryConfig binary;
  StreamConfig stream;
  ControlConfig control;

  /// Every object id the tracker reports: binary ids then topology ids.
  std::vector<int> object_ids() const;
};

bool operator==(const TrackerConfig& a, const TrackerConfig& b);

/// Thrown when a document fails to parse or validate; violations() lists each
/// problem as "<path>: <message>".
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  std::vector<std::string> violations_;
};

/// Invariant check; empty result means valid.
std::vector<std::string> validate(const TrackerConfig& cfg);

/// Parses and validates. Missing keys take defaults; unknown keys are violations.
TrackerConfig config_from_json(const nlohmann::json& j);
TrackerConfig parse_config(const std::string& text);
TrackerConfig load_config(const std::string& path);

nlohmann::json config_to_json(const TrackerConfig& cfg);
/// Sorted keys, two-space indent, trailing newline.
std::string canonical_config_text(const TrackerConfig& cfg);
void save_config(const std::string& path, const TrackerConfig& cfg);

/// Dictionary named by the config: read from file when given, else generated.
MarkerDictionary load_dictionary(const BinaryConfig& cfg);

}  // namespace fidtrack
