#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "geo.hpp"
#include "osm.hpp"

namespace gridplan {

enum class SemClass : uint8_t {
  Unknown = 0,
  Road = 1,
  LaneMarking = 2,
  Crosswalk = 3,
  Sidewalk = 4,
  Vegetation = 5,
};

inline constexpr int kNumSemClasses = 6;

// Fixed 3-channel palette, bit-exact.
//   Unknown=(0,0,0) Road=(0.5,0.5,0.5) LaneMarking=(1,1,0)
//   Crosswalk=(1,0,1) Sidewalk=(0,1,0) Vegetation=(0,0.5,0)
extern const double kClassPalette[kNumSemClasses][3];

struct GridSpec {
  double resolution = 2.0;   // D, pixels per meter
  double horizon = 100.0;    // L_max, meters
  int side = 400;            // L, must equal 2 * D * L_max

  void validate() const;
  static GridSpec from_resolution(double d, double l_max);
};

// Row r maps to y, column c maps to x: cell (r,c) center is at
// origin + ((c + 0.5)/D, (r + 0.5)/D) rotated by origin.heading.
struct SemanticGrid {
  int width = 0;
  int height = 0;
  double resolution = 2.0;  // pixels per meter
  Pose2D origin;            // map-frame pose of cell (0,0)'s corner
  std::vector<uint8_t> classes;  // row-major, height * width

  uint8_t at(int r, int c) const { return classes[size_t(r) * width + c]; }
  uint8_t& at(int r, int c) { return classes[size_t(r) * width + c]; }
  // Nearest-cell class at a map-frame point; Unknown outside the grid.
  SemClass class_at(LocalPoint map_pt) const;
};

struct SceneCrop {
  GridSpec spec;
  std::vector<double> tensor;  // L x L x 3, row-major, channels innermost

  double at(int r, int c, int ch) const {
    return tensor[(size_t(r) * spec.side + c) * 3 + ch];
  }
};

// Ego-centric class crop: output cell (r,c) samples the map at the ego-frame
// cell center (x, y) = ((L/2 - r - 0.5)/D, (L/2 - c - 0.5)/D), so the ego sits
// at the crop center heading toward the image top. Out-of-map cells are
// Unknown.
std::vector<uint8_t> crop_classes(const SemanticGrid& map, const Pose2D& ego,
                                  const GridSpec& spec);

// Palette encoding of an L x L class array into L x L x 3 reals.
std::vector<double> encode_classes(const std::vector<uint8_t>& classes,
                                   int side);
std::vector<uint8_t> decode_classes(const std::vector<double>& tensor,
                                    int side);

SceneCrop crop_ego(const SemanticGrid& map, const Pose2D& ego,
                   const GridSpec& spec);

// --- synthetic scenarios -----------------------------------------------

struct RoadSegment {
  std::vector<LocalPoint> centerline;
  double width = 7.0;  // meters
};

struct CrosswalkBand {
  LocalPoint center;
  double heading = 0.0;  // direction across the road
  double length = 12.0;  // along `heading`
  double width = 3.0;    // across `heading`
};

struct ScenarioSpec {
  std::string name;
  double extent = 120.0;       // map covers [-extent, extent]^2 meters
  double resolution = 2.0;     // map raster pixels per meter
  double node_spacing = 5.0;   // graph node spacing along centerlines
  double node_jitter = 0.0;    // stddev of graph-node position jitter, meters
  GeoPoint origin;             // WGS84 anchor of the map frame
  std::vector<RoadSegment> segments;
  std::vector<CrosswalkBand> crosswalks;
  std::vector<LocalPoint> stop_signs;
  std::vector<LocalPoint> signals;
};

std::string scenario_to_json(const ScenarioSpec& s);
ScenarioSpec scenario_from_json(const std::string& text);

// Deterministic rasterization plus a paired road graph with nodes every
// node_spacing meters along each centerline (coincident endpoints merged).
// Stop/signal/crosswalk markers attach to the nearest graph node within 5 m.
std::pair<SemanticGrid, RoadGraph> synthesize_map(const ScenarioSpec& spec,
                                                  uint64_t seed);

// SGRD binary container.
void save_grid(const SemanticGrid& g, const std::string& path);
SemanticGrid load_grid(const std::string& path);
void write_grid(const SemanticGrid& g, std::string& out);
SemanticGrid read_grid(const std::string& data, size_t& pos);

}  // namespace gridplan
