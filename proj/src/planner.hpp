#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "geo.hpp"
#include "osm.hpp"

namespace gridplan {

struct Route {
  std::vector<int64_t> node_ids;
  double cumulative_cost = 0.0;
};

enum class PlanVariant : uint8_t { PF = 0, STPF = 1, STCPF = 2 };

std::string to_string(PlanVariant v);
PlanVariant plan_variant_from_string(const std::string& s);

// Feature codes for the third plan-graph column.
enum PlanFeature : int {
  kFeaturePadding = 0,
  kFeaturePast = 1,
  kFeatureFuture = 2,
  kFeatureStopOrSignal = 3,
  kFeatureCrossing = 4,
};

struct PlanNodeRow {
  double px = 0.0;  // meters, ego frame
  double py = 0.0;
  double f = 0.0;   // feature code as a real scalar
};

struct PlanGraph {
  std::vector<PlanNodeRow> rows;  // exactly past_count + future_count rows
  PlanVariant variant = PlanVariant::STPF;
  int past_count = 20;
  int future_count = 20;
};

class NoRouteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OffRouteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dijkstra over edge weights; equal-cost paths break ties toward the smaller
// predecessor id so routes are bit-stable.
Route shortest_route(const RoadGraph& g, int64_t src, int64_t dst);

// Route node positions projected about `origin` with wgs84_to_local.
std::vector<LocalPoint> route_local_points(const Route& route,
                                           const RoadGraph& g,
                                           const GeoPoint& origin);

// Index of the route point nearest to `gps`; ties pick the smaller index.
// Throws OffRouteError when the nearest point is farther than max_dist.
size_t match_waypoint(const std::vector<LocalPoint>& route_points,
                      LocalPoint gps, double max_dist = 30.0);

// Heading of the route segment leaving route_points[idx]; the last index
// falls back to the segment arriving at it.
double estimate_heading(const std::vector<LocalPoint>& route_points,
                        size_t idx);

// Builds the (P+F)x3 ego-frame plan matrix anchored at route_points[idx]
// with the given heading. Rows 0..P-1 are the P route nodes before idx
// (padding at the start when the route is short), rows P..P+F-1 are nodes
// idx..idx+F-1 (padding at the end). Element overrides follow the variant.
PlanGraph build_plan_graph(const Route& route, const RoadGraph& g,
                           const std::vector<LocalPoint>& route_points,
                           size_t idx, double heading, PlanVariant variant,
                           int past_count = 20, int future_count = 20);

// `{"variant": "STPF", "rows": [[px, py, f], ...]}`, 9 significant digits.
std::string plan_graph_to_json(const PlanGraph& pg);
PlanGraph plan_graph_from_json(const std::string& text);

}  // namespace gridplan
