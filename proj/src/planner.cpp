#include "planner.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <queue>

#include "json.hpp"

namespace gridplan {

std::string to_string(PlanVariant v) {
  switch (v) {
    case PlanVariant::PF: return "PF";
    case PlanVariant::STPF: return "STPF";
    case PlanVariant::STCPF: return "STCPF";
  }
  return "?";
}

PlanVariant plan_variant_from_string(const std::string& s) {
  if (s == "PF") return PlanVariant::PF;
  if (s == "STPF") return PlanVariant::STPF;
  if (s == "STCPF") return PlanVariant::STCPF;
  throw std::invalid_argument("unknown plan variant '" + s + "'");
}

Route shortest_route(const RoadGraph& g, int64_t src, int64_t dst) {
  if (!g.has_node(src))
    throw std::domain_error("unknown node id " + std::to_string(src));
  if (!g.has_node(dst))
    throw std::domain_error("unknown node id " + std::to_string(dst));
  if (src == dst) return Route{{src}, 0.0};

  std::map<int64_t, double> dist;
  std::map<int64_t, int64_t> prev;
  using Entry = std::pair<double, int64_t>;  // (cost, node) — id breaks ties
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> pq;
  dist[src] = 0.0;
  pq.emplace(0.0, src);
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    auto it = dist.find(u);
    if (it == dist.end() || d > it->second) continue;
    if (u == dst) break;
    auto adj = g.adjacency.find(u);
    if (adj == g.adjacency.end()) continue;
    for (const auto& [v, w] : adj->second) {
      double nd = d + w;
      auto dit = dist.find(v);
      if (dit == dist.end() || nd < dit->second) {
        dist[v] = nd;
        prev[v] = u;
        pq.emplace(nd, v);
      } else if (nd == dit->second && u < prev[v]) {
        prev[v] = u;  // deterministic tie-break
      }
    }
  }
  auto dit = dist.find(dst);
  if (dit == dist.end())
    throw NoRouteError("no route from " + std::to_string(src) + " to " +
                       std::to_string(dst));
  Route r;
  r.cumulative_cost = dit->second;
  for (int64_t at = dst;; at = prev.at(at)) {
    r.node_ids.push_back(at);
    if (at == src) break;
  }
  std::reverse(r.node_ids.begin(), r.node_ids.end());
  return r;
}

std::vector<LocalPoint> route_local_points(const Route& route,
                                           const RoadGraph& g,
                                           const GeoPoint& origin) {
  std::vector<LocalPoint> pts;
  pts.reserve(route.node_ids.size());
  for (int64_t id : route.node_ids)
    pts.push_back(wgs84_to_local(origin, g.nodes.at(id).location));
  return pts;
}

size_t match_waypoint(const std::vector<LocalPoint>& route_points,
                      LocalPoint gps, double max_dist) {
  if (route_points.empty())
    throw std::invalid_argument("match_waypoint: empty route");
  size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < route_points.size(); ++i) {
    double d = std::hypot(route_points[i].x - gps.x, route_points[i].y - gps.y);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  if (best_d > max_dist)
    throw OffRouteError("nearest route node is " + std::to_string(best_d) +
                        " m away (max " + std::to_string(max_dist) + ")");
  return best;
}

double estimate_heading(const std::vector<LocalPoint>& route_points,
                        size_t idx) {
  if (route_points.size() < 2)
    throw std::invalid_argument("estimate_heading: degenerate route");
  if (idx >= route_points.size())
    throw std::invalid_argument("estimate_heading: index out of range");
  size_t a = idx, b = idx + 1;
  if (b >= route_points.size()) {
    a = idx - 1;
    b = idx;
  }
  return std::atan2(route_points[b].y - route_points[a].y,
                    route_points[b].x - route_points[a].x);
}

namespace {

// Effective element of a route node: its own OSM element; additionally,
// off-route crossing nodes attach to the nearest route node within 5 m.
std::vector<PointElement> route_elements(const Route& route,
                                         const RoadGraph& g) {
  std::vector<PointElement> elems(route.node_ids.size(), PointElement::None);
  std::map<int64_t, size_t> on_route;
  for (size_t i = 0; i < route.node_ids.size(); ++i) {
    elems[i] = g.nodes.at(route.node_ids[i]).element;
    on_route[route.node_ids[i]] = i;
  }
  const GeoPoint anchor = g.nodes.at(route.node_ids[0]).location;
  std::vector<LocalPoint> rpts;
  rpts.reserve(route.node_ids.size());
  for (int64_t id : route.node_ids)
    rpts.push_back(wgs84_to_local(anchor, g.nodes.at(id).location));
  for (const auto& [id, n] : g.nodes) {
    if (n.element != PointElement::Crossing || on_route.count(id)) continue;
    LocalPoint p = wgs84_to_local(anchor, n.location);
    size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < rpts.size(); ++i) {
      double d = std::hypot(rpts[i].x - p.x, rpts[i].y - p.y);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    if (best_d <= 5.0 && elems[best] == PointElement::None)
      elems[best] = PointElement::Crossing;
  }
  return elems;
}

double feature_code(PointElement e, int base, PlanVariant variant) {
  switch (e) {
    case PointElement::StopSign:
    case PointElement::TrafficSignal:
      if (variant != PlanVariant::PF) return kFeatureStopOrSignal;
      break;
    case PointElement::Crossing:
      if (variant == PlanVariant::STCPF) return kFeatureCrossing;
      break;
    default:
      break;
  }
  return base;
}

}  // namespace

PlanGraph build_plan_graph(const Route& route, const RoadGraph& g,
                           const std::vector<LocalPoint>& route_points,
                           size_t idx, double heading, PlanVariant variant,
                           int past_count, int future_count) {
  if (route_points.size() != route.node_ids.size())
    throw std::invalid_argument("route_points/route size mismatch");
  if (idx >= route_points.size())
    throw std::invalid_argument("build_plan_graph: index out of range");

  PlanGraph pg;
  pg.variant = variant;
  pg.past_count = past_count;
  pg.future_count = future_count;
  pg.rows.assign(static_cast<size_t>(past_count + future_count),
                 PlanNodeRow{0.0, 0.0, kFeaturePadding});

  const Pose2D frame{route_points[idx], heading};
  const auto elems = route_elements(route, g);

  for (int i = 0; i < past_count; ++i) {
    long j = static_cast<long>(idx) - past_count + i;
    if (j < 0) continue;  // padding stays at the outer (early) end
    LocalPoint p = to_ego_frame(frame, route_points[static_cast<size_t>(j)]);
    pg.rows[static_cast<size_t>(i)] = {
        p.x, p.y,
        feature_code(elems[static_cast<size_t>(j)], kFeaturePast, variant)};
  }
  for (int i = 0; i < future_count; ++i) {
    size_t j = idx + static_cast<size_t>(i);
    if (j >= route_points.size()) break;  // padding at the outer (late) end
    LocalPoint p = to_ego_frame(frame, route_points[j]);
    pg.rows[static_cast<size_t>(past_count + i)] = {
        p.x, p.y, feature_code(elems[j], kFeatureFuture, variant)};
  }
  return pg;
}

std::string plan_graph_to_json(const PlanGraph& pg) {
  std::string out = "{\"variant\": \"" + to_string(pg.variant) +
                    "\", \"past\": " + std::to_string(pg.past_count) +
                    ", \"future\": " + std::to_string(pg.future_count) +
                    ", \"rows\": [";
  char buf[96];
  for (size_t i = 0; i < pg.rows.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "[%.9g, %.9g, %.9g]", pg.rows[i].px,
                  pg.rows[i].py, pg.rows[i].f);
    out += buf;
    if (i + 1 < pg.rows.size()) out += ", ";
  }
  out += "]}";
  return out;
}

PlanGraph plan_graph_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  PlanGraph pg;
  pg.variant = plan_variant_from_string(j.at("variant").get<std::string>());
  pg.past_count = j.value("past", 20);
  pg.future_count = j.value("future", 20);
  for (const auto& row : j.at("rows"))
    pg.rows.push_back({row.at(0).get<double>(), row.at(1).get<double>(),
                       row.at(2).get<double>()});
  if (pg.rows.size() !=
      static_cast<size_t>(pg.past_count + pg.future_count))
    throw std::invalid_argument("plan graph row count mismatch");
  return pg;
}

}  // namespace gridplan
