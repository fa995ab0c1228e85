#pragma once

// Scene script documents ("fidtrack-scene/1", JSON).

#include <string>

#include "fidtrack/synthetic_scene.hpp"
#include "json.hpp"

namespace fidtrack {

inline constexpr const char* kSceneSchema = "fidtrack-scene/1";

SceneScript scene_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const SceneScript& s);
SceneScript load_scene(const std::string& path);
void save_scene(const std::string& path, const SceneScript& s);

}  // namespace fidtrack
