#include "geo.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace gridplan {

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;
}

InsufficientArcLength::InsufficientArcLength(double available, double required)
    : std::runtime_error("insufficient arc length: have " +
                         std::to_string(available) + " m, need " +
                         std::to_string(required) + " m"),
      available_(available),
      required_(required) {}

double normalize_angle(double rad) {
  double a = std::fmod(rad, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  if (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
  return a;
}

LocalPoint wgs84_to_local(const GeoPoint& origin, const GeoPoint& p) {
  if (std::abs(origin.lat) > 90.0 || std::abs(p.lat) > 90.0)
    throw std::domain_error("latitude out of [-90, 90]");
  const double x = (p.lon - origin.lon) * kDegToRad * kEarthRadiusM *
                   std::cos(origin.lat * kDegToRad);
  const double y = (p.lat - origin.lat) * kDegToRad * kEarthRadiusM;
  return {x, y};
}

GeoPoint local_to_wgs84(const GeoPoint& origin, const LocalPoint& p) {
  if (std::abs(origin.lat) > 90.0)
    throw std::domain_error("latitude out of [-90, 90]");
  GeoPoint g;
  g.lat = origin.lat + p.y / (kDegToRad * kEarthRadiusM);
  g.lon = origin.lon +
          p.x / (kDegToRad * kEarthRadiusM * std::cos(origin.lat * kDegToRad));
  return g;
}

double haversine_m(const GeoPoint& a, const GeoPoint& b) {
  const double lat1 = a.lat * kDegToRad;
  const double lat2 = b.lat * kDegToRad;
  const double dlat = (b.lat - a.lat) * kDegToRad;
  const double dlon = (b.lon - a.lon) * kDegToRad;
  const double s = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1) * std::cos(lat2) * std::sin(dlon / 2) *
                       std::sin(dlon / 2);
  return 2.0 * kMeanEarthRadiusM * std::asin(std::sqrt(s));
}

LocalPoint to_ego_frame(const Pose2D& ego, const LocalPoint& p) {
  const double c = std::cos(ego.heading);
  const double s = std::sin(ego.heading);
  const double dx = p.x - ego.position.x;
  const double dy = p.y - ego.position.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

std::vector<LocalPoint> to_ego_frame(const Pose2D& ego,
                                     const std::vector<LocalPoint>& pts) {
  std::vector<LocalPoint> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(to_ego_frame(ego, p));
  return out;
}

LocalPoint from_ego_frame(const Pose2D& ego, const LocalPoint& p) {
  const double c = std::cos(ego.heading);
  const double s = std::sin(ego.heading);
  return {c * p.x - s * p.y + ego.position.x,
          s * p.x + c * p.y + ego.position.y};
}

std::vector<LocalPoint> from_ego_frame(const Pose2D& ego,
                                       const std::vector<LocalPoint>& pts) {
  std::vector<LocalPoint> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(from_ego_frame(ego, p));
  return out;
}

double polyline_length(const std::vector<LocalPoint>& pts) {
  double len = 0.0;
  for (size_t i = 1; i < pts.size(); ++i)
    len += std::hypot(pts[i].x - pts[i - 1].x, pts[i].y - pts[i - 1].y);
  return len;
}

Trajectory interpolate_trajectory(const std::vector<LocalPoint>& raw,
                                  double spacing, int count) {
  if (raw.size() < 2)
    throw std::invalid_argument("interpolate_trajectory: need >= 2 points");
  if (spacing <= 0.0 || count <= 0)
    throw std::invalid_argument("interpolate_trajectory: bad spacing/count");
  const double total = polyline_length(raw);
  const double required = spacing * count;
  if (total + 1e-9 < required) throw InsufficientArcLength(total, required);

  Trajectory out;
  out.waypoints.reserve(count);
  size_t seg = 0;                 // current segment index raw[seg] -> raw[seg+1]
  double seg_start_arc = 0.0;     // arc length at raw[seg]
  double seg_len = std::hypot(raw[1].x - raw[0].x, raw[1].y - raw[0].y);
  for (int k = 1; k <= count; ++k) {
    const double target = spacing * k;
    while (seg + 2 < raw.size() && seg_start_arc + seg_len < target - 1e-12) {
      seg_start_arc += seg_len;
      ++seg;
      seg_len = std::hypot(raw[seg + 1].x - raw[seg].x,
                           raw[seg + 1].y - raw[seg].y);
    }
    const double t =
        seg_len > 0.0 ? (target - seg_start_arc) / seg_len : 0.0;
    out.waypoints.push_back({raw[seg].x + t * (raw[seg + 1].x - raw[seg].x),
                             raw[seg].y + t * (raw[seg + 1].y - raw[seg].y)});
  }
  return out;
}

}  // namespace gridplan
