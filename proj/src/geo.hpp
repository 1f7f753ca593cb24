#pragma once

#include <stdexcept>
#include <vector>

namespace gridplan {

// WGS84 equatorial radius, used by the local projection.
inline constexpr double kEarthRadiusM = 6378137.0;
// Mean earth radius, used for great-circle edge weights.
inline constexpr double kMeanEarthRadiusM = 6371000.0;

struct GeoPoint {
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180]
};

struct LocalPoint {
  double x = 0.0;  // meters, east / forward
  double y = 0.0;  // meters, north / left
};

// heading: radians CCW, 0 = +x, normalized to (-pi, pi]
struct Pose2D {
  LocalPoint position;
  double heading = 0.0;
};

struct Trajectory {
  std::vector<LocalPoint> waypoints;
};

class InsufficientArcLength : public std::runtime_error {
 public:
  InsufficientArcLength(double available, double required);
  double available() const { return available_; }
  double required() const { return required_; }

 private:
  double available_;
  double required_;
};

// Normalizes an angle to (-pi, pi].
double normalize_angle(double rad);

// Equirectangular projection about `origin`. Throws std::domain_error on
// out-of-range latitude.
LocalPoint wgs84_to_local(const GeoPoint& origin, const GeoPoint& p);
GeoPoint local_to_wgs84(const GeoPoint& origin, const LocalPoint& p);

// Great-circle distance in meters.
double haversine_m(const GeoPoint& a, const GeoPoint& b);

// Translates by -ego.position, then rotates by -ego.heading; the ego pose
// maps to the origin facing +x.
std::vector<LocalPoint> to_ego_frame(const Pose2D& ego,
                                     const std::vector<LocalPoint>& pts);
LocalPoint to_ego_frame(const Pose2D& ego, const LocalPoint& p);

// Inverse of to_ego_frame.
std::vector<LocalPoint> from_ego_frame(const Pose2D& ego,
                                       const std::vector<LocalPoint>& pts);
LocalPoint from_ego_frame(const Pose2D& ego, const LocalPoint& p);

double polyline_length(const std::vector<LocalPoint>& pts);

// Resamples `raw` at arc lengths spacing, 2*spacing, ..., count*spacing along
// the piecewise-linear curve. The origin is not part of the output. Throws
// InsufficientArcLength when the curve is too short.
Trajectory interpolate_trajectory(const std::vector<LocalPoint>& raw,
                                  double spacing, int count);

}  // namespace gridplan
