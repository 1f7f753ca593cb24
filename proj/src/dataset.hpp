#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geo.hpp"
#include "planner.hpp"
#include "scene.hpp"

namespace gridplan {

struct Sample {
  PlanGraph plan;
  std::vector<uint8_t> scene_classes;  // crop, L*L row-major class codes
  GridSpec crop_spec;
  Trajectory gt;          // ego frame, H waypoints at `spacing` meters
  Pose2D ego_map_pose;    // ego pose in the grid's map frame (2 cm class)
  GeoPoint ego_global;    // rough global fix (1 m class)
  int64_t timestamp = 0;  // Unix epoch seconds
  std::vector<double> imu;  // carried but never consumed
  int32_t grid_index = -1;  // index into Dataset::grids, -1 if detached
  std::string aux;          // opaque importer payload

  SceneCrop scene() const;  // palette-encoded crop tensor
};

struct DatasetConfig {
  int horizon = 10;       // H
  int past = 20;          // P
  int future = 20;        // F
  double spacing = 3.0;   // meters between gt waypoints
  GridSpec crop = GridSpec{};  // L, D, L_max of the scene crop
  PlanVariant variant = PlanVariant::STPF;
};

struct Dataset {
  DatasetConfig config;
  std::string split = "train";
  std::string provenance;
  std::vector<Sample> samples;
  std::vector<SemanticGrid> grids;
};

struct SynthOptions {
  DatasetConfig config;
  double lane_offset = 1.75;      // meters right of the centerline
  double pos_noise = 0.5;         // sigma, meters
  double heading_noise_deg = 2.0; // sigma, degrees
  double max_match_dist = 30.0;
  int64_t base_timestamp = 1700000000;
};

struct SynthStats {
  int generated = 0;
  int skipped = 0;  // routes too short / off-road trajectories
};

// Deterministic per seed. Each scenario contributes `samples_per_scenario`
// samples (skipped attempts are reported, not retried forever).
Dataset generate_synthetic(const std::vector<ScenarioSpec>& scenarios,
                           int samples_per_scenario, uint64_t seed,
                           const SynthOptions& opt, SynthStats* stats = nullptr);

// TNDS binary container, CRC32-checked, bit-exact round trip.
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

// Loads a directory in the published sample-per-file layout
// (<root>/<split>/*.json, see README). Unknown fields ride along in aux.
Dataset import_published(const std::string& root, const std::string& split);

// --- scenario presets ------------------------------------------------------

ScenarioSpec straight_scenario(double length = 200.0, double width = 7.0);
// Four arms meeting at the origin, with crosswalks and either signals or
// stop signs at the mouth of each arm.
ScenarioSpec four_way_scenario(double arm = 110.0, double width = 7.0,
                               bool signals = true);
ScenarioSpec three_way_scenario(double arm = 110.0, double width = 7.0);
ScenarioSpec u_turn_scenario(double leg = 90.0, double gap = 14.0,
                             double width = 7.0);
ScenarioSpec sharp_turn_scenario(double leg = 100.0, double width = 7.0);

}  // namespace gridplan
