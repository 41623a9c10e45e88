#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cityfm/corpus.hpp"
#include "cityfm/geo.hpp"

namespace cityfm {

// Binary occupancy grid produced by rasterize(). Row-major, top row first.
struct RasterGrid {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1 per pixel

  std::uint8_t at(int row, int col) const { return bits[static_cast<std::size_t>(row) * width + col]; }
  std::int64_t set_count() const;
};

// Shoelace area of a closed ring (first == last, >= 4 points) in square
// meters, computed on a local equirectangular projection anchored at the ring
// centroid. Self-intersecting rings still get the absolute shoelace value;
// *unreliable is set when a pair of non-adjacent edges crosses.
double surface_area_m2(const std::vector<GeoPoint>& ring, bool* unreliable = nullptr);

bool ring_self_intersects(const std::vector<GeoPoint>& ring);

// Arithmetic mean of distinct vertices.
GeoPoint centroid(const std::vector<GeoPoint>& ring);

// Projects the ring, scales it (aspect preserved) so the bounding box spans
// 90% of the grid, centers it, and fills the interior with the even-odd rule
// sampled at pixel centers. Throws on zero-area rings.
RasterGrid rasterize(const std::vector<GeoPoint>& ring, int grid_size);

// Debug export, PGM P5 with 0/255 pixels.
std::string raster_to_pgm(const RasterGrid& grid);

// Spatial index over the road polylines of a corpus (open ways tagged
// "highway"). Immutable once built; queries are safe to run concurrently.
class RoadIndex {
 public:
  explicit RoadIndex(const Corpus& corpus);
  ~RoadIndex();
  RoadIndex(RoadIndex&&) noexcept;
  RoadIndex& operator=(RoadIndex&&) noexcept;

  std::size_t road_count() const;
  const std::vector<EntityId>& road_ids() const;

  // Id of the road polyline with minimum projected point-to-segment distance,
  // if that distance is <= radius_m. Ties broken by smaller id.
  std::optional<EntityId> nearest_road_segment(GeoPoint point, double radius_m) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Exhaustive-scan counterpart of RoadIndex::nearest_road_segment, kept as the
// testing oracle.
std::optional<EntityId> nearest_road_segment_brute(const Corpus& corpus, GeoPoint point,
                                                   double radius_m);

// Distance in meters from a point to a polyline, both projected into a local
// equirectangular plane anchored at the point.
double point_to_polyline_m(GeoPoint point, const std::vector<GeoPoint>& polyline);

// One group per road segment. member_ids are the tagged nodes and tagged
// closed ways whose anchor lies within the assignment radius of the segment,
// sorted ascending. Every group also implicitly holds the synthetic empty
// node (id -1), recorded by the flag rather than the id list so that the
// "no entity in two groups" invariant stays checkable.
struct ContextGroup {
  EntityId segment_id = 0;
  std::vector<EntityId> member_ids;
  bool includes_empty_node = true;
};

std::vector<ContextGroup> build_context_groups(const Corpus& corpus, double radius_m);

}  // namespace cityfm
