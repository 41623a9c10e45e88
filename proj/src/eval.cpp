#include <algorithm>
#include <cmath>

#include "cityfm/downstream.hpp"
#include "cityfm/util.hpp"

namespace cityfm {

namespace {

void require_header(const std::vector<std::vector<std::string>>& rows,
                    const std::vector<std::string>& expected, const std::string& what) {
  if (rows.empty() || rows[0] != expected) {
    std::string want;
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (i) want += ",";
      want += expected[i];
    }
    throw Error(what + ": expected header '" + want + "'");
  }
  if (rows.size() < 2) throw Error(what + ": no data rows");
}

std::int64_t to_id(const std::string& field, const std::string& what, std::size_t row) {
  try {
    std::size_t used = 0;
    const std::int64_t v = std::stoll(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw Error(what + " row " + std::to_string(row) + ": bad id '" + field + "'");
  }
}

double to_value(const std::string& field, const std::string& what, std::size_t row) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (used != field.size() || !std::isfinite(v)) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw Error(what + " row " + std::to_string(row) + ": bad value '" + field + "'");
  }
}

struct Dataset {
  std::vector<EntityId> ids;
  std::vector<double> x;
  int n = 0;
  int p = 0;
  std::vector<double> y;
  std::vector<std::string> labels;

  void push(const std::vector<double>& features) {
    if (n == 0) {
      p = static_cast<int>(features.size());
    } else if (static_cast<int>(features.size()) != p) {
      throw Error("feature dimension changed mid-table");
    }
    x.insert(x.end(), features.begin(), features.end());
    ++n;
  }
};

// [h | context | loc] rows for every segment in the speed table.
Dataset speed_dataset(Embedder& embedder, const Corpus& corpus, const std::string& speeds_csv) {
  const auto rows = parse_csv(speeds_csv);
  require_header(rows, {"segment_id", "speed_mph"}, "speeds table");
  Dataset d;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2) throw Error("speeds table row " + std::to_string(r) + ": need 2 fields");
    const EntityId id = to_id(rows[r][0], "speeds table", r);
    const Entity& e = corpus.at(id);
    if (!e.is_road()) throw Error("speeds table: entity " + std::to_string(id) + " is not a road");
    std::vector<double> feat = embedder.text_of(id);
    const auto ctx = embedder.road_context(id);
    feat.insert(feat.end(), ctx.begin(), ctx.end());
    const auto loc = embedder.location_code(entity_anchor(corpus, e));
    feat.insert(feat.end(), loc.begin(), loc.end());
    d.push(feat);
    d.ids.push_back(id);
    d.y.push_back(to_value(rows[r][1], "speeds table", r));
  }
  return d;
}

}  // namespace

MetricReport eval_speed(Embedder& embedder, const Corpus& corpus, const std::string& speeds_csv,
                        std::uint64_t base_seed, std::vector<EntityId>* used_ids,
                        std::vector<double>* targets) {
  const Dataset d = speed_dataset(embedder, corpus, speeds_csv);
  if (used_ids) *used_ids = d.ids;
  if (targets) *targets = d.y;
  return run_probe_protocol(ProbeKind::Ridge, d.x, d.n, d.p, d.y, {}, base_seed);
}

MetricReport eval_speed_shuffled(Embedder& embedder, const Corpus& corpus,
                                 const std::string& speeds_csv, std::uint64_t base_seed,
                                 std::uint64_t shuffle_seed) {
  Dataset d = speed_dataset(embedder, corpus, speeds_csv);
  Rng rng(shuffle_seed);
  rng.shuffle(d.y);
  return run_probe_protocol(ProbeKind::Ridge, d.x, d.n, d.p, d.y, {}, base_seed);
}

MetricReport eval_buildings(Embedder& embedder, const Corpus& corpus,
                            const std::string& labels_csv, std::uint64_t base_seed) {
  const auto rows = parse_csv(labels_csv);
  require_header(rows, {"way_id", "class"}, "building labels");
  Dataset d;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2) throw Error("building labels row " + std::to_string(r) + ": need 2 fields");
    const EntityId id = to_id(rows[r][0], "building labels", r);
    if (rows[r][1].empty()) throw Error("building labels row " + std::to_string(r) + ": empty class");
    const Entity& e = corpus.at(id);
    if (!e.is_closed_way()) {
      throw Error("building labels: entity " + std::to_string(id) + " is not a closed way");
    }
    const auto v = embedder.visual_of(id);
    if (!v) throw Error("building labels: entity " + std::to_string(id) + " has zero area");
    std::vector<double> feat = *v;
    const auto ctx = embedder.context_of(id);
    feat.insert(feat.end(), ctx.begin(), ctx.end());
    const auto loc = embedder.location_code(entity_anchor(corpus, e));
    feat.insert(feat.end(), loc.begin(), loc.end());
    d.push(feat);
    d.labels.push_back(rows[r][1]);
  }
  return run_probe_protocol(ProbeKind::Logistic, d.x, d.n, d.p, {}, d.labels, base_seed);
}

MetricReport eval_regions(Embedder& embedder, const Corpus& corpus, const std::string& regions_csv,
                          std::uint64_t base_seed) {
  (void)corpus;  // regions are defined by the table, not corpus membership
  const auto rows = parse_csv(regions_csv);
  require_header(rows, {"region_id", "wkt_polygon", "density_kppl"}, "region table");
  Dataset d;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 3) throw Error("region table row " + std::to_string(r) + ": need 3 fields");
    const auto ring = parse_wkt_polygon(rows[r][1]);
    d.push(embedder.embed_region(ring));
    d.y.push_back(to_value(rows[r][2], "region table", r));
  }
  return run_probe_protocol(ProbeKind::Ridge, d.x, d.n, d.p, d.y, {}, base_seed);
}

}  // namespace cityfm
