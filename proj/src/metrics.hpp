#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dataset.hpp"
#include "geo.hpp"
#include "scene.hpp"

namespace gridplan {

// Mean Euclidean distance over the first k waypoint pairs. Full: k = H;
// half: k = H / 2. Both trajectories must have equal nonzero length, k <= H.
double ade(const Trajectory& pred, const Trajectory& gt, size_t k);

// Euclidean distance between the final waypoints.
double fde(const Trajectory& pred, const Trajectory& gt);

// Maximum Euclidean distance over waypoint pairs.
double mde(const Trajectory& pred, const Trajectory& gt);

// Drivable-area compliance: true unless any of the first k waypoints lands on
// Sidewalk or Vegetation. Unknown and out-of-grid cells are neutral. `pred`
// must be expressed in the grid's map frame.
bool dac(const Trajectory& pred, const SemanticGrid& grid, size_t k);

// Same rule evaluated against an ego-frame crop (pred in the ego frame).
bool dac_crop(const Trajectory& pred, const std::vector<uint8_t>& classes,
              const GridSpec& spec, size_t k);

struct MetricsReport {
  double ade_full = 0.0;
  double ade_half = 0.0;
  double fde = 0.0;
  double mde = 0.0;  // mean over samples of the per-sample maximum
  double dac_full = 0.0;  // fraction of compliant samples
  double dac_half = 0.0;
  int n = 0;
};

class CvaeModel;  // defined in cvae.hpp

// Argmax-mode inference over every sample, metric means over the dataset.
// DAC uses the sample's map grid when available, else its scene crop.
MetricsReport evaluate(CvaeModel& model, const Dataset& data);

std::string report_csv(const MetricsReport& r);
// Aligned text table, one row per labelled report, Table-1 column order.
std::string report_table(
    const std::vector<std::pair<std::string, MetricsReport>>& rows);

}  // namespace gridplan
