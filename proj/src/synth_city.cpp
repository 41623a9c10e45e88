#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cityfm/downstream.hpp"
#include "cityfm/util.hpp"
#include "json.hpp"

namespace cityfm {

namespace {

using ordered_json = nlohmann::ordered_json;

// 9 x 9 intersection grid, 140 m pitch, anchored in central Singapore.
constexpr int kGridN = 9;
constexpr double kSpacingM = 140.0;
constexpr double kSpanM = (kGridN - 1) * kSpacingM;
constexpr GeoPoint kAnchor{1.30, 103.80};
constexpr int kMaxSegments = 2 * kGridN * (kGridN - 1);

constexpr EntityId kIntersectionBase = 1000;
constexpr EntityId kRoadBase = 5000;
constexpr EntityId kRouteBase = 9000;
constexpr EntityId kPoiBase = 20000;
constexpr EntityId kBuildingBase = 30000;
constexpr EntityId kCornerNodeBase = 40000;

struct Segment {
  int ar, ac, br, bc;       // intersection grid coords of the endpoints
  const char* highway;      // primary on the central cross, secondary on the
                            // perimeter, residential elsewhere
};

const char* road_class(int rc) {
  if (rc == kGridN / 2) return "primary";
  if (rc == 0 || rc == kGridN - 1) return "secondary";
  return "residential";
}

// Canonical segment order: horizontals row-major, then verticals row-major.
std::vector<Segment> grid_segments() {
  std::vector<Segment> segs;
  segs.reserve(kMaxSegments);
  for (int r = 0; r < kGridN; ++r) {
    for (int c = 0; c + 1 < kGridN; ++c) segs.push_back({r, c, r, c + 1, road_class(r)});
  }
  for (int r = 0; r + 1 < kGridN; ++r) {
    for (int c = 0; c < kGridN; ++c) segs.push_back({r, c, r + 1, c, road_class(c)});
  }
  return segs;
}

int horizontal_index(int row, int col) { return row * (kGridN - 1) + col; }
int vertical_index(int row, int col) { return kGridN * (kGridN - 1) + row * kGridN + col; }

EntityId intersection_id(int row, int col) { return kIntersectionBase + row * kGridN + col; }

XY segment_a(const Segment& s) { return {s.ac * kSpacingM, s.ar * kSpacingM}; }
XY segment_b(const Segment& s) { return {s.bc * kSpacingM, s.br * kSpacingM}; }

// Five vertical district strips, each with an exclusive themed category set.
struct Category {
  const char* key;
  const char* value;
};

constexpr Category kDistricts[5][5] = {
    {{"amenity", "restaurant"},
     {"amenity", "cafe"},
     {"amenity", "fast_food"},
     {"amenity", "bar"},
     {"amenity", "pub"}},
    {{"amenity", "school"},
     {"amenity", "university"},
     {"amenity", "college"},
     {"amenity", "kindergarten"},
     {"amenity", "library"}},
    {{"shop", "supermarket"},
     {"shop", "convenience"},
     {"shop", "bakery"},
     {"shop", "clothes"},
     {"shop", "butcher"}},
    {{"amenity", "bank"},
     {"amenity", "pharmacy"},
     {"amenity", "clinic"},
     {"amenity", "dentist"},
     {"amenity", "doctors"}},
    {{"leisure", "park"},
     {"leisure", "playground"},
     {"leisure", "pitch"},
     {"leisure", "garden"},
     {"leisure", "nature_reserve"}}};

int district_of_x(double x) {
  const int d = static_cast<int>(x / (kSpanM / 5.0));
  return std::clamp(d, 0, 4);
}

// Building classes: imbalanced like a real land-use mix, with a unique
// (shape family, footprint area bucket) pair per class so the visual
// embedding carries the label.
enum class ShapeFamily { Compact, Elongated, Lshape };

struct ClassSpec {
  const char* name;
  double prob;
  ShapeFamily family;
  double area_lo;
  double area_hi;
};

constexpr ClassSpec kClasses[8] = {
    {"residential", 0.671, ShapeFamily::Compact, 80, 200},
    {"industrial", 0.162, ShapeFamily::Elongated, 600, 1200},
    {"commercial", 0.081, ShapeFamily::Compact, 250, 500},
    {"commercial_residential", 0.025, ShapeFamily::Lshape, 250, 500},
    {"educational", 0.022, ShapeFamily::Lshape, 600, 1200},
    {"civic", 0.019, ShapeFamily::Compact, 600, 1200},
    {"sports", 0.012, ShapeFamily::Elongated, 1500, 2600},
    {"transport", 0.008, ShapeFamily::Elongated, 80, 200}};

int sample_class(Rng& rng) {
  const double u = rng.uniform();
  double cum = 0;
  for (int k = 0; k < 8; ++k) {
    cum += kClasses[k].prob;
    if (u < cum) return k;
  }
  return 7;
}

// Footprint centered at the origin, counterclockwise, not yet closed.
// L-shapes are a square of side a with a 0.55a corner notch, so the area is
// 0.6975 a^2.
std::vector<XY> footprint(ShapeFamily family, double area, double aspect, bool rotate90) {
  std::vector<XY> pts;
  if (family == ShapeFamily::Lshape) {
    const double a = std::sqrt(area / 0.6975);
    pts = {{0, 0}, {a, 0}, {a, 0.45 * a}, {0.45 * a, 0.45 * a}, {0.45 * a, a}, {0, a}};
    for (XY& p : pts) {
      p.x -= a / 2;
      p.y -= a / 2;
    }
  } else {
    const double l = std::sqrt(area * aspect);
    const double w = std::sqrt(area / aspect);
    pts = {{-l / 2, -w / 2}, {l / 2, -w / 2}, {l / 2, w / 2}, {-l / 2, w / 2}};
  }
  if (rotate90) {
    for (XY& p : pts) p = {-p.y, p.x};
  }
  return pts;
}

std::string four_digits(int i) {
  std::string s = std::to_string(1000 + i % 9000);
  return s;
}

Tag pii_tag(int i) {
  switch (i % 7) {
    case 0: return {"phone", "+65 6555 " + four_digits(i)};
    case 1: return {"website", "https://example.com/site" + std::to_string(i)};
    case 2: return {"email", "user" + std::to_string(i) + "@example.com"};
    case 3: return {"addr:street", std::to_string(i) + " orchard road"};
    case 4: return {"contact:facebook", "facebook.com/page" + std::to_string(i)};
    case 5: return {"note", "see https://example.com/u" + std::to_string(i)};
    default: return {"description", "+65 6777 " + four_digits(i)};
  }
}

}  // namespace

SynthCity synth_city(std::uint64_t seed, int n_roads, int n_pois, int n_buildings, int n_regions,
                     int pii_count) {
  if (n_roads < 1 || n_roads > kMaxSegments) {
    throw Error("synth_city: n_roads must be in [1, " + std::to_string(kMaxSegments) + "]");
  }
  if (n_pois < 0 || n_buildings < 0 || pii_count < 0) {
    throw Error("synth_city: counts must be non-negative");
  }
  if (pii_count > 0 && n_pois == 0) throw Error("synth_city: pii tags need pois to attach to");
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_regions))));
  if (side < 1 || side * side != n_regions) {
    throw Error("synth_city: n_regions must be a positive square number");
  }

  Rng rng(seed);
  const LocalProjection proj(kAnchor);
  const std::vector<Segment> segs = grid_segments();
  std::vector<Entity> raw;

  // intersections
  for (int r = 0; r < kGridN; ++r) {
    for (int c = 0; c < kGridN; ++c) {
      Entity e;
      e.id = intersection_id(r, c);
      e.kind = EntityKind::Node;
      e.position = proj.unproject({c * kSpacingM, r * kSpacingM});
      raw.push_back(std::move(e));
    }
  }

  // road segments
  for (int i = 0; i < n_roads; ++i) {
    const Segment& s = segs[i];
    Entity e;
    e.id = kRoadBase + i;
    e.kind = EntityKind::Way;
    e.node_refs = {intersection_id(s.ar, s.ac), intersection_id(s.br, s.bc)};
    e.tags.push_back({"highway", s.highway});
    if (std::string_view(s.highway) == "primary") {
      e.tags.push_back({"lanes", "4"});
      e.tags.push_back({"maxspeed", "40"});
    } else if (std::string_view(s.highway) == "secondary") {
      e.tags.push_back({"lanes", "2"});
    }
    raw.push_back(std::move(e));
  }

  // bus routes over the primary cross; nested member sets give link weights
  // 1, 2/3, 1/3 on the cross and 0 elsewhere
  const int mid = kGridN / 2;
  std::vector<std::vector<int>> routes(3);
  for (int c = 0; c + 1 < kGridN; ++c) routes[0].push_back(horizontal_index(mid, c));
  for (int r = 0; r + 1 < kGridN; ++r) routes[0].push_back(vertical_index(r, mid));
  for (int c = 0; c + 1 < kGridN; ++c) routes[1].push_back(horizontal_index(mid, c));
  for (int c = 2; c <= 5 && c + 1 < kGridN; ++c) routes[2].push_back(horizontal_index(mid, c));
  for (int r = 0; r < 3; ++r) {
    Entity e;
    e.id = kRouteBase + r;
    e.kind = EntityKind::Relation;
    for (int idx : routes[r]) e.members.push_back({kRoadBase + idx, ""});
    e.tags.push_back({"type", "route"});
    e.tags.push_back({"route", "bus"});
    e.tags.push_back({"ref", "r" + std::to_string(r + 1)});
    raw.push_back(std::move(e));
  }

  // pois: on a uniformly random kept segment, category themed by the
  // district strip of the segment midpoint
  std::vector<int> poi_count(n_roads, 0);
  std::vector<std::size_t> poi_raw_index;
  for (int i = 0; i < n_pois; ++i) {
    const int si = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_roads)));
    const double t = rng.uniform(0.25, 0.75);
    const double sign = rng.below(2) == 0 ? 1.0 : -1.0;
    const double off = rng.uniform(8.0, 18.0);
    const int cat = static_cast<int>(rng.below(5));

    const XY a = segment_a(segs[si]);
    const XY b = segment_b(segs[si]);
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len = std::hypot(dx, dy);
    const XY pos = {a.x + t * dx - sign * off * dy / len, a.y + t * dy + sign * off * dx / len};
    const int district = district_of_x((a.x + b.x) / 2);

    Entity e;
    e.id = kPoiBase + i;
    e.kind = EntityKind::Node;
    e.position = proj.unproject(pos);
    const Category& category = kDistricts[district][cat];
    e.tags.push_back({category.key, category.value});
    poi_raw_index.push_back(raw.size());
    raw.push_back(std::move(e));
    ++poi_count[si];
  }

  // buildings: one per draw, centered in a random grid cell with jitter that
  // keeps the footprint inside the cell
  EntityId next_corner = kCornerNodeBase;
  std::vector<int> bclass(n_buildings);
  std::vector<XY> bcenter(n_buildings);
  std::string building_labels_csv = "way_id,class\n";
  for (int i = 0; i < n_buildings; ++i) {
    const int k = sample_class(rng);
    const ClassSpec& spec = kClasses[k];
    const int cell = static_cast<int>(rng.below((kGridN - 1) * (kGridN - 1)));
    const int cr = cell / (kGridN - 1);
    const int cc = cell % (kGridN - 1);
    const double area = rng.uniform(spec.area_lo, spec.area_hi);
    double aspect = 1.0;
    if (spec.family == ShapeFamily::Compact) aspect = rng.uniform(0.85, 1.18);
    if (spec.family == ShapeFamily::Elongated) aspect = rng.uniform(3.2, 4.5);
    const bool rot = rng.below(2) == 1;
    std::vector<XY> pts = footprint(spec.family, area, aspect, rot);

    double min_x = pts[0].x, max_x = pts[0].x, min_y = pts[0].y, max_y = pts[0].y;
    for (const XY& p : pts) {
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
    const double half = kSpacingM / 2;
    const double mx = std::max(0.0, half - (max_x - min_x) / 2 - 12.0);
    const double my = std::max(0.0, half - (max_y - min_y) / 2 - 12.0);
    const double jx = rng.uniform(-mx, mx);
    const double jy = rng.uniform(-my, my);
    const bool tagged = rng.uniform() < 0.25;

    const XY center = {cc * kSpacingM + half + jx, cr * kSpacingM + half + jy};
    bclass[i] = k;
    bcenter[i] = center;

    Entity way;
    way.id = kBuildingBase + i;
    way.kind = EntityKind::Way;
    for (const XY& p : pts) {
      Entity corner;
      corner.id = next_corner++;
      corner.kind = EntityKind::Node;
      corner.position = proj.unproject({center.x + p.x, center.y + p.y});
      way.node_refs.push_back(corner.id);
      raw.push_back(std::move(corner));
    }
    way.node_refs.push_back(way.node_refs.front());
    if (tagged) way.tags.push_back({"building", spec.name});
    raw.push_back(std::move(way));
    building_labels_csv +=
        std::to_string(kBuildingBase + i) + "," + std::string(spec.name) + "\n";
  }

  // traffic speeds: class base minus congestion from bus service and poi
  // pressure, plus observation noise
  std::vector<int> route_count(n_roads, 0);
  for (const auto& route : routes) {
    for (int idx : route) {
      if (idx < n_roads) ++route_count[idx];
    }
  }
  const int max_route = n_roads > 0 ? *std::max_element(route_count.begin(), route_count.end()) : 0;
  int max_poi = 0;
  for (int c : poi_count) max_poi = std::max(max_poi, c);
  std::string speeds_csv = "segment_id,speed_mph\n";
  for (int i = 0; i < n_roads; ++i) {
    double base = 24.0;
    if (std::string_view(segs[i].highway) == "primary") base = 34.0;
    if (std::string_view(segs[i].highway) == "secondary") base = 28.0;
    const double link_norm = max_route > 0 ? static_cast<double>(route_count[i]) / max_route : 0.0;
    const double poi_norm = max_poi > 0 ? static_cast<double>(poi_count[i]) / max_poi : 0.0;
    const double speed =
        std::clamp(base - 8.0 * link_norm - 5.0 * poi_norm + 0.8 * rng.normal(), 5.0, 45.0);
    speeds_csv += std::to_string(kRoadBase + i) + "," + fmt_double(speed) + "\n";
  }

  // region tiles: density tracks the residential share of the building
  // stock, which a mean-pooled region embedding can carry
  const double tile = kSpanM / side;
  std::vector<int> res_count(static_cast<std::size_t>(n_regions), 0);
  std::vector<int> all_count(static_cast<std::size_t>(n_regions), 0);
  for (int i = 0; i < n_buildings; ++i) {
    const int ix = std::clamp(static_cast<int>(bcenter[i].x / tile), 0, side - 1);
    const int iy = std::clamp(static_cast<int>(bcenter[i].y / tile), 0, side - 1);
    const std::size_t region = static_cast<std::size_t>(iy) * side + ix;
    ++all_count[region];
    if (std::string_view(kClasses[bclass[i]].name) == "residential") ++res_count[region];
  }
  std::string region_density_csv = "region_id,wkt_polygon,density_kppl\n";
  for (int iy = 0; iy < side; ++iy) {
    for (int ix = 0; ix < side; ++ix) {
      const double x0 = ix * tile, x1 = (ix + 1) * tile;
      const double y0 = iy * tile, y1 = (iy + 1) * tile;
      const std::vector<GeoPoint> ring = {proj.unproject({x0, y0}), proj.unproject({x1, y0}),
                                          proj.unproject({x1, y1}), proj.unproject({x0, y1}),
                                          proj.unproject({x0, y0})};
      const std::size_t region = static_cast<std::size_t>(iy) * side + ix;
      const double share =
          all_count[region] > 0 ? static_cast<double>(res_count[region]) / all_count[region] : 0.0;
      const double density = 2.0 + 10.0 * share + 0.2 * rng.normal();
      region_density_csv += std::to_string(iy * side + ix) + "," + csv_field(wkt_polygon(ring)) +
                            "," + fmt_double(density) + "\n";
    }
  }

  // co-location ground truth: within-district categories co-occur, across
  // districts they never do
  ordered_json queries = ordered_json::array();
  for (int d = 0; d < 5; ++d) {
    for (int k = 0; k < 5; ++k) {
      ordered_json q;
      q["query"] = std::string(kDistricts[d][k].key) + ": " + kDistricts[d][k].value;
      ordered_json co = ordered_json::array();
      for (int k2 = 0; k2 < 5; ++k2) {
        if (k2 == k) continue;
        co.push_back(std::string(kDistricts[d][k2].key) + ": " + kDistricts[d][k2].value);
      }
      ordered_json never = ordered_json::array();
      for (int d2 = 0; d2 < 5; ++d2) {
        if (d2 == d) continue;
        for (int k2 = 0; k2 < 5; ++k2) {
          never.push_back(std::string(kDistricts[d2][k2].key) + ": " + kDistricts[d2][k2].value);
        }
      }
      q["colocated"] = std::move(co);
      q["never"] = std::move(never);
      queries.push_back(std::move(q));
    }
  }
  ordered_json colocation;
  colocation["queries"] = std::move(queries);

  // personal-data tags for scrub testing, rotating over seven detector paths
  for (int i = 0; i < pii_count; ++i) {
    raw[poi_raw_index[static_cast<std::size_t>(i % n_pois)]].tags.push_back(pii_tag(i));
  }

  SynthCity city;
  city.corpus = detail::finalize_corpus(std::move(raw));
  city.tables.speeds_csv = std::move(speeds_csv);
  city.tables.building_labels_csv = std::move(building_labels_csv);
  city.tables.region_density_csv = std::move(region_density_csv);
  city.tables.colocation_json = colocation.dump(2) + "\n";
  return city;
}

}  // namespace cityfm
