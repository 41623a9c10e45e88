#pragma once

#include <cmath>
#include <numbers>

namespace cityfm {

// Meters per degree of latitude; longitude is additionally scaled by
// cos(latitude). Adequate at city scale.
inline constexpr double kMetersPerDegree = 111320.0;

struct GeoPoint {
  double lat = 0.0;  // WGS84 degrees, [-90, 90]
  double lon = 0.0;  // WGS84 degrees, [-180, 180]

  bool operator==(const GeoPoint&) const = default;
};

inline bool geo_point_valid(const GeoPoint& p) {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 &&
         p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
}

struct XY {
  double x = 0.0;  // meters east of anchor
  double y = 0.0;  // meters north of anchor
};

// Local equirectangular projection anchored at a reference point.
class LocalProjection {
 public:
  explicit LocalProjection(GeoPoint anchor)
      : anchor_(anchor),
        cos_lat0_(std::cos(anchor.lat * std::numbers::pi / 180.0)) {}

  XY project(GeoPoint p) const {
    return {(p.lon - anchor_.lon) * kMetersPerDegree * cos_lat0_,
            (p.lat - anchor_.lat) * kMetersPerDegree};
  }

  GeoPoint unproject(XY q) const {
    return {anchor_.lat + q.y / kMetersPerDegree,
            anchor_.lon + q.x / (kMetersPerDegree * cos_lat0_)};
  }

  GeoPoint anchor() const { return anchor_; }

 private:
  GeoPoint anchor_;
  double cos_lat0_;
};

}  // namespace cityfm
