#include "cityfm/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <utility>

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include "cityfm/kernels.hpp"
#include "cityfm/util.hpp"

namespace cityfm {

std::int64_t RasterGrid::set_count() const {
  return std::count(bits.begin(), bits.end(), std::uint8_t{1});
}

GeoPoint centroid(const std::vector<GeoPoint>& ring) {
  if (ring.empty()) throw Error("centroid: empty ring");
  std::set<std::pair<double, double>> seen;
  double lat = 0, lon = 0;
  int n = 0;
  for (const GeoPoint& p : ring) {
    if (!seen.insert({p.lat, p.lon}).second) continue;
    lat += p.lat;
    lon += p.lon;
    ++n;
  }
  return {lat / n, lon / n};
}

namespace {

double cross(const XY& o, const XY& a, const XY& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool on_segment(const XY& a, const XY& b, const XY& p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
         std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

bool segments_cross(const XY& a, const XY& b, const XY& c, const XY& d) {
  const double d1 = cross(c, d, a);
  const double d2 = cross(c, d, b);
  const double d3 = cross(a, b, c);
  const double d4 = cross(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) &&
      ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  if (d1 == 0 && on_segment(c, d, a)) return true;
  if (d2 == 0 && on_segment(c, d, b)) return true;
  if (d3 == 0 && on_segment(a, b, c)) return true;
  if (d4 == 0 && on_segment(a, b, d)) return true;
  return false;
}

std::vector<XY> project_ring(const std::vector<GeoPoint>& ring) {
  const LocalProjection proj(centroid(ring));
  std::vector<XY> out;
  out.reserve(ring.size());
  for (const GeoPoint& p : ring) out.push_back(proj.project(p));
  return out;
}

void check_closed(const std::vector<GeoPoint>& ring) {
  if (ring.size() < 4) throw Error("ring needs at least 4 points");
  if (!(ring.front() == ring.back())) throw Error("ring is not closed");
}

double shoelace_abs(const std::vector<XY>& pts) {
  double twice = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    twice += pts[i].x * pts[i + 1].y - pts[i + 1].x * pts[i].y;
  }
  return std::abs(twice) * 0.5;
}

}  // namespace

bool ring_self_intersects(const std::vector<GeoPoint>& ring) {
  check_closed(ring);
  const std::vector<XY> p = project_ring(ring);
  const std::size_t n = p.size() - 1;  // edge count
  for (std::size_t i = 0; i + 1 < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (segments_cross(p[i], p[i + 1], p[j], p[j + 1])) return true;
    }
  }
  return false;
}

double surface_area_m2(const std::vector<GeoPoint>& ring, bool* unreliable) {
  check_closed(ring);
  if (unreliable) *unreliable = ring_self_intersects(ring);
  return shoelace_abs(project_ring(ring));
}

RasterGrid rasterize(const std::vector<GeoPoint>& ring, int grid_size) {
  check_closed(ring);
  if (grid_size < 2) throw Error("rasterize: grid size too small");
  const std::vector<XY> p = project_ring(ring);
  if (shoelace_abs(p) == 0.0) throw Error("rasterize: zero-area ring");

  double min_x = p[0].x, max_x = p[0].x, min_y = p[0].y, max_y = p[0].y;
  for (const XY& q : p) {
    min_x = std::min(min_x, q.x);
    max_x = std::max(max_x, q.x);
    min_y = std::min(min_y, q.y);
    max_y = std::max(max_y, q.y);
  }
  const double w = max_x - min_x;
  const double h = max_y - min_y;
  const double scale = 0.9 * grid_size / std::max(w, h);
  const double off_x = (grid_size - w * scale) * 0.5;
  const double off_y = (grid_size - h * scale) * 0.5;

  std::vector<double> xs(p.size()), ys(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    xs[i] = (p[i].x - min_x) * scale + off_x;
    // north up: larger y lands on a smaller row index
    ys[i] = (max_y - p[i].y) * scale + off_y;
  }

  RasterGrid grid;
  grid.width = grid.height = grid_size;
  grid.bits.assign(static_cast<std::size_t>(grid_size) * grid_size, 0);
  kernels::raster_fill(xs, ys, grid.bits.data(), grid_size);
  return grid;
}

std::string raster_to_pgm(const RasterGrid& grid) {
  std::string out = "P5\n" + std::to_string(grid.width) + " " +
                    std::to_string(grid.height) + "\n255\n";
  out.reserve(out.size() + grid.bits.size());
  for (std::uint8_t b : grid.bits) out += static_cast<char>(b ? 255 : 0);
  return out;
}

// ---------------------------------------------------------------------------
// Road assignment

namespace {

double point_to_segment(double px, double py, const XY& a, const XY& b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = ((px - a.x) * dx + (py - a.y) * dy) / len2;
    t = std::clamp(t, 0.0, 1.0);
  }
  const double ex = a.x + t * dx - px;
  const double ey = a.y + t * dy - py;
  return std::sqrt(ex * ex + ey * ey);
}

}  // namespace

double point_to_polyline_m(GeoPoint point, const std::vector<GeoPoint>& polyline) {
  if (polyline.size() < 2) throw Error("point_to_polyline_m: polyline needs two points");
  const LocalProjection proj(point);
  double best = std::numeric_limits<double>::infinity();
  XY prev = proj.project(polyline[0]);
  for (std::size_t i = 1; i < polyline.size(); ++i) {
    const XY cur = proj.project(polyline[i]);
    best = std::min(best, point_to_segment(0.0, 0.0, prev, cur));
    prev = cur;
  }
  return best;
}

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

using BPoint = bg::model::point<double, 2, bg::cs::cartesian>;  // (lon, lat)
using BBox = bg::model::box<BPoint>;
using RTreeValue = std::pair<BBox, std::uint32_t>;

struct RoadIndex::Impl {
  struct Segment {
    EntityId way_id;
    GeoPoint a, b;
  };
  std::vector<EntityId> ids;
  std::vector<Segment> segments;
  bgi::rtree<RTreeValue, bgi::rstar<16>> tree;
};

RoadIndex::RoadIndex(const Corpus& corpus) : impl_(std::make_unique<Impl>()) {
  std::vector<RTreeValue> values;
  for (const auto& [id, e] : corpus.entities) {
    if (!e.is_road()) continue;
    impl_->ids.push_back(id);
    for (std::size_t i = 0; i + 1 < e.node_refs.size(); ++i) {
      const GeoPoint a = corpus.at(e.node_refs[i]).position;
      const GeoPoint b = corpus.at(e.node_refs[i + 1]).position;
      const BBox box(BPoint(std::min(a.lon, b.lon), std::min(a.lat, b.lat)),
                     BPoint(std::max(a.lon, b.lon), std::max(a.lat, b.lat)));
      values.emplace_back(box, static_cast<std::uint32_t>(impl_->segments.size()));
      impl_->segments.push_back({id, a, b});
    }
  }
  impl_->tree = bgi::rtree<RTreeValue, bgi::rstar<16>>(values.begin(), values.end());
}

RoadIndex::~RoadIndex() = default;
RoadIndex::RoadIndex(RoadIndex&&) noexcept = default;
RoadIndex& RoadIndex::operator=(RoadIndex&&) noexcept = default;

std::size_t RoadIndex::road_count() const { return impl_->ids.size(); }
const std::vector<EntityId>& RoadIndex::road_ids() const { return impl_->ids; }

std::optional<EntityId> RoadIndex::nearest_road_segment(GeoPoint point, double radius_m) const {
  if (impl_->segments.empty()) return std::nullopt;
  // The box query is only a candidate filter; inflate it so no segment within
  // radius_m can slip past latitude-dependent longitude scaling.
  const double dlat = 1.5 * radius_m / kMetersPerDegree;
  const double cos_lat = std::max(std::abs(std::cos(point.lat * std::numbers::pi / 180.0)), 1e-6);
  const double dlon = 1.5 * radius_m / (kMetersPerDegree * cos_lat);
  const BBox query(BPoint(point.lon - dlon, point.lat - dlat),
                   BPoint(point.lon + dlon, point.lat + dlat));

  const LocalProjection proj(point);
  double best = std::numeric_limits<double>::infinity();
  EntityId best_id = 0;
  bool found = false;
  for (auto it = impl_->tree.qbegin(bgi::intersects(query)); it != impl_->tree.qend(); ++it) {
    const Impl::Segment& s = impl_->segments[it->second];
    const double d = point_to_segment(0.0, 0.0, proj.project(s.a), proj.project(s.b));
    if (d > radius_m) continue;
    if (!found || d < best || (d == best && s.way_id < best_id)) {
      best = d;
      best_id = s.way_id;
      found = true;
    }
  }
  if (!found) return std::nullopt;
  return best_id;
}

std::optional<EntityId> nearest_road_segment_brute(const Corpus& corpus, GeoPoint point,
                                                   double radius_m) {
  double best = std::numeric_limits<double>::infinity();
  EntityId best_id = 0;
  bool found = false;
  for (const auto& [id, e] : corpus.entities) {
    if (!e.is_road()) continue;
    std::vector<GeoPoint> line;
    line.reserve(e.node_refs.size());
    for (EntityId ref : e.node_refs) line.push_back(corpus.at(ref).position);
    const double d = point_to_polyline_m(point, line);
    if (d > radius_m) continue;
    if (!found || d < best) {  // map order is ascending, ties keep the smaller id
      best = d;
      best_id = id;
      found = true;
    }
  }
  if (!found) return std::nullopt;
  return best_id;
}

std::vector<ContextGroup> build_context_groups(const Corpus& corpus, double radius_m) {
  const RoadIndex index(corpus);
  std::map<EntityId, std::vector<EntityId>> members;
  for (EntityId road : index.road_ids()) members[road] = {};

  for (const auto& [id, e] : corpus.entities) {
    const bool assignable =
        e.has_tags() && (e.kind == EntityKind::Node || e.is_closed_way());
    if (!assignable) continue;
    const GeoPoint anchor = entity_anchor(corpus, e);
    if (const auto road = index.nearest_road_segment(anchor, radius_m)) {
      members[*road].push_back(id);
    }
  }

  std::vector<ContextGroup> groups;
  groups.reserve(members.size());
  for (auto& [road, ids] : members) {
    groups.push_back({road, std::move(ids), true});
  }
  return groups;
}

}  // namespace cityfm
