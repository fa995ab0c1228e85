#pragma once

// Detection rate against marker size at a fixed distance: a binary marker is
// rendered through the full pipeline for a number of frames per size, drifting
// slightly in position and in-plane angle so that sub-pixel phase varies.

#include <string>
#include <vector>

#include "fidtrack/synthetic_scene.hpp"

namespace fidtrack {

struct SweepSettings {
  SceneScript scene;  // camera, background, noise, supersample; objects are ignored
  double distance = 1.0;
  std::size_t frames = 60;
  int marker_id = 0;
  double drift_px = 2.0;      // lateral drift over the run, pixels at the marker
  double spin_deg = 30.0;     // in-plane rotation over the run
};

struct SweepPoint {
  double marker_size = 0.0;
  double projected_px = 0.0;  // fx * size / distance
  std::size_t frames = 0;
  std::size_t detected = 0;
  double rate = 0.0;
};

std::vector<SweepPoint> size_sweep(const SweepSettings& settings, const std::vector<double>& sizes);

/// "marker_size,projected_px,frames,detected,rate" with a header line.
std::string sweep_csv(const std::vector<SweepPoint>& points);

}  // namespace fidtrack
