#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "cityfm/corpus.hpp"
#include "cityfm/downstream.hpp"
#include "cityfm/geometry.hpp"
#include "cityfm/loc_encoding.hpp"
#include "cityfm/pretrain.hpp"
#include "cityfm/util.hpp"
#include "test_support.hpp"

using namespace cityfm;
using testsupport::TempDir;

namespace {

// One small trained bundle shared by the embedder tests. Training a couple of
// steps keeps the parameters away from their random init without costing time.
struct Bundle {
  SynthCity city;
  PretrainOutput out;
  TrainingConfig cfg;

  Bundle()
      : city(synth_city(41, 24, 80, 60, 16, 0)), out(make(city)), cfg(make_cfg()) {}

  static TrainingConfig make_cfg() {
    TrainingConfig cfg;
    cfg.max_steps = 2;
    cfg.batch_size = 8;
    cfg.embed_dim = 16;
    cfg.loc_d = 16;
    cfg.grid_size = 16;
    cfg.plateau_window = 0;
    return cfg;
  }
  static PretrainOutput make(const SynthCity& city) { return pretrain(city.corpus, make_cfg()); }
};

Bundle& bundle() {
  static Bundle b;
  return b;
}

Embedder make_embedder() {
  Bundle& b = bundle();
  return Embedder(b.out.model, b.out.vocab, b.cfg, b.city.corpus);
}

}  // namespace

TEST_CASE("point_in_ring even-odd semantics") {
  const std::vector<GeoPoint> square = {{0, 0}, {0, 1}, {1, 1}, {1, 0}, {0, 0}};
  CHECK(point_in_ring({0.5, 0.5}, square));
  CHECK_FALSE(point_in_ring({1.5, 0.5}, square));
  CHECK_FALSE(point_in_ring({-0.1, 0.5}, square));

  // concave L: the notch at the top right is outside
  const std::vector<GeoPoint> ell = {{0, 0}, {0, 2}, {1, 2}, {1, 1}, {2, 1}, {2, 0}, {0, 0}};
  CHECK(point_in_ring({0.5, 0.5}, ell));
  CHECK(point_in_ring({0.5, 1.5}, ell));
  CHECK(point_in_ring({1.5, 0.5}, ell));
  CHECK_FALSE(point_in_ring({1.5, 1.5}, ell));

  CHECK_THROWS_AS(point_in_ring({0, 0}, {{0, 0}, {0, 1}, {1, 1}}), Error);
  CHECK_THROWS_AS(point_in_ring({0, 0}, {{0, 0}, {0, 1}, {1, 1}, {1, 0}}), Error);
}

TEST_CASE("wkt polygon round trip") {
  const std::vector<GeoPoint> ring = {
      {1.3, 103.8}, {1.3, 103.81}, {1.3105, 103.8025}, {1.3, 103.8}};
  const std::string wkt = wkt_polygon(ring);
  CHECK(wkt.rfind("POLYGON ((", 0) == 0);
  CHECK(parse_wkt_polygon(wkt) == ring);  // fmt_double is exact, so bitwise

  CHECK_THROWS_AS(parse_wkt_polygon("POLYGON ((1 2, 3 4))"), Error);        // too short
  CHECK_THROWS_AS(parse_wkt_polygon("POLYGON ((1 2, 3 4, 5 6, 7 8))"), Error);  // open
  CHECK_THROWS_AS(parse_wkt_polygon("LINESTRING (1 2, 3 4)"), Error);
  CHECK_THROWS_AS(parse_wkt_polygon("POLYGON ((a b, c d, e f, a b))"), Error);
}

TEST_CASE("embed_entity block layout per entity kind") {
  Embedder emb = make_embedder();
  const Corpus& corpus = emb.corpus();
  const int D = 16, L = 2 * 16;

  EntityId poi = 0, road = 0, building = 0, relation = 0, plain_node = 0;
  for (const auto& [id, e] : corpus.entities) {
    if (!poi && e.kind == EntityKind::Node && e.has_tags()) poi = id;
    if (!road && e.is_road()) road = id;
    if (!building && e.is_closed_way() && e.has_tags()) building = id;
    if (!relation && e.kind == EntityKind::Relation) relation = id;
    if (!plain_node && e.kind == EntityKind::Node && !e.has_tags()) plain_node = id;
  }
  REQUIRE(poi != 0);
  REQUIRE(road != 0);
  REQUIRE(building != 0);
  REQUIRE(relation != 0);
  REQUIRE(plain_node != 0);

  const EmbeddingRecord pr = emb.embed_entity(poi);
  CHECK(pr.has_text);
  CHECK_FALSE(pr.has_visual);
  CHECK(pr.has_location);
  CHECK(pr.vec.size() == static_cast<std::size_t>(D + L));

  const EmbeddingRecord rr = emb.embed_entity(road);
  CHECK(rr.has_text);  // synthetic roads carry highway tags
  CHECK(rr.vec.size() == static_cast<std::size_t>(D + L));

  const EmbeddingRecord br = emb.embed_entity(building);
  CHECK(br.has_text);
  CHECK(br.has_visual);
  CHECK(br.vec.size() == static_cast<std::size_t>(2 * D + L));

  CHECK_THROWS_AS(emb.embed_entity(relation), Error);
  CHECK_THROWS_AS(emb.embed_entity(plain_node), Error);
  CHECK_THROWS_AS(emb.embed_entity(987654321), Error);
}

TEST_CASE("text and location blocks match their building blocks") {
  Embedder emb = make_embedder();
  Bundle& b = bundle();
  const Corpus& corpus = emb.corpus();

  EntityId poi = 0;
  for (const auto& [id, e] : corpus.entities) {
    if (e.kind == EntityKind::Node && e.has_tags()) {
      poi = id;
      break;
    }
  }
  REQUIRE(poi != 0);

  const auto direct =
      text_encode(b.out.model, tokenize(serialize_tags(corpus.at(poi)), b.out.vocab));
  CHECK(emb.text_of(poi) == direct);

  const auto loc = emb.location_code(corpus.at(poi).position);
  CHECK(loc == encode_location(corpus.at(poi).position, 16, b.cfg.loc_lambda));

  const EmbeddingRecord rec = emb.embed_entity(poi);
  for (int i = 0; i < 16; ++i) CHECK(rec.vec[i] == direct[i]);
  for (std::size_t i = 0; i < loc.size(); ++i) CHECK(rec.vec[16 + i] == loc[i]);
}

TEST_CASE("context averages group members plus the empty node") {
  Embedder emb = make_embedder();
  Bundle& b = bundle();
  const Corpus& corpus = emb.corpus();
  const auto groups = build_context_groups(corpus, b.cfg.context_radius_m);

  // pick a group with at least two members so exclusion is visible
  const ContextGroup* pick = nullptr;
  for (const auto& g : groups) {
    if (g.member_ids.size() >= 2) pick = &g;
  }
  REQUIRE(pick != nullptr);

  const EntityId self = pick->member_ids.front();
  const auto got = emb.context_of(self);

  std::vector<double> want(16, 0.0);
  int n = 0;
  for (EntityId m : pick->member_ids) {
    if (m == self) continue;
    const auto& h = emb.text_of(m);
    for (int i = 0; i < 16; ++i) want[i] += h[i];
    ++n;
  }
  const auto empty = text_encode(b.out.model, tokenize(serialize_tags(empty_node()), b.out.vocab));
  for (int i = 0; i < 16; ++i) want[i] += empty[i];
  ++n;
  for (int i = 0; i < 16; ++i) want[i] /= n;
  for (int i = 0; i < 16; ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

  // an entity with no road nearby collapses to the empty-node embedding
  std::vector<Entity> raw;
  Entity far;
  far.id = 1;
  far.kind = EntityKind::Node;
  far.position = {10.0, 10.0};
  far.tags = {{"amenity", "cafe"}};
  raw.push_back(far);
  Entity other = far;
  other.id = 2;
  other.position = {10.001, 10.0};
  raw.push_back(other);
  const Corpus lonely = detail::finalize_corpus(std::move(raw));
  Embedder emb2(b.out.model, b.out.vocab, b.cfg, lonely);
  CHECK(emb2.context_of(1) == empty);

  // road_context rejects ids that are not roads
  CHECK_THROWS_AS(emb.road_context(pick->member_ids.front()), Error);
  CHECK_NOTHROW(emb.road_context(pick->segment_id));
}

TEST_CASE("visual embedding fuses shape and area, zero area yields nullopt") {
  Embedder emb = make_embedder();
  Bundle& b = bundle();
  const Corpus& corpus = emb.corpus();

  EntityId building = 0;
  for (const auto& [id, e] : corpus.entities) {
    if (e.is_closed_way()) {
      building = id;
      break;
    }
  }
  REQUIRE(building != 0);

  const auto got = emb.visual_of(building);
  REQUIRE(got.has_value());
  const auto ring = way_ring(corpus, corpus.at(building));
  const auto s = vision_encode(b.out.model, rasterize(ring, 16));
  const auto a =
      area_encode(b.out.model, surface_area_m2(ring), b.out.model.config().area_norm);
  CHECK(*got == fuse_visual(b.out.model, s, a));

  // degenerate ring: all four corners on one point
  std::vector<Entity> raw;
  for (int i = 0; i < 2; ++i) {
    Entity n;
    n.id = 1 + i;
    n.kind = EntityKind::Node;
    n.position = {1.0, 103.0};
    raw.push_back(n);
  }
  Entity flat;
  flat.id = 10;
  flat.kind = EntityKind::Way;
  flat.node_refs = {1, 2, 1, 2, 1};
  flat.tags = {{"building", "yes"}};
  raw.push_back(flat);
  Entity anchor_node;
  anchor_node.id = 20;
  anchor_node.kind = EntityKind::Node;
  anchor_node.position = {1.0, 103.0};
  anchor_node.tags = {{"amenity", "cafe"}};
  raw.push_back(anchor_node);
  const Corpus degenerate = detail::finalize_corpus(std::move(raw));
  Embedder emb2(b.out.model, b.out.vocab, b.cfg, degenerate);
  CHECK_FALSE(emb2.visual_of(10).has_value());
}

TEST_CASE("embed_region averages contained entities") {
  Embedder emb = make_embedder();
  const Corpus& corpus = emb.corpus();

  // ring around the whole city
  const std::vector<GeoPoint> ring = {
      {1.29, 103.79}, {1.29, 103.82}, {1.32, 103.82}, {1.32, 103.79}, {1.29, 103.79}};
  bool text_empty = true, visual_empty = true;
  const auto vec = emb.embed_region(ring, &text_empty, &visual_empty);
  CHECK(vec.size() == 16u + 16u + 32u);
  CHECK_FALSE(text_empty);
  CHECK_FALSE(visual_empty);

  // independent recomputation of the text block
  std::vector<double> want(16, 0.0);
  int n = 0;
  for (const auto& [id, e] : corpus.entities) {
    if (!e.has_tags()) continue;
    if (!(e.kind == EntityKind::Node || e.kind == EntityKind::Way)) continue;
    if (!point_in_ring(entity_anchor(corpus, e), ring)) continue;
    const auto& h = emb.text_of(id);
    for (int i = 0; i < 16; ++i) want[i] += h[i];
    ++n;
  }
  REQUIRE(n > 0);
  for (int i = 0; i < 16; ++i) {
    CHECK(vec[i] == doctest::Approx(want[i] / n).epsilon(1e-9));
  }

  // location block sits at the ring centroid
  const auto loc = encode_location(centroid(ring), 16, 100.0);
  for (std::size_t i = 0; i < loc.size(); ++i) CHECK(vec[32 + i] == loc[i]);

  // a ring far from everything keeps both flags set and zero blocks
  const std::vector<GeoPoint> empty_ring = {
      {50.0, 10.0}, {50.0, 10.01}, {50.01, 10.01}, {50.01, 10.0}, {50.0, 10.0}};
  text_empty = visual_empty = false;
  const auto zero = emb.embed_region(empty_ring, &text_empty, &visual_empty);
  CHECK(text_empty);
  CHECK(visual_empty);
  for (int i = 0; i < 32; ++i) CHECK(zero[i] == 0.0);

  CHECK_THROWS_AS(emb.embed_region({{0, 0}, {0, 1}, {1, 1}}), Error);
}

TEST_CASE("embedding exports agree with each other") {
  Embedder emb = make_embedder();
  const std::string jsonl = export_embeddings_jsonl(emb);

  Embedder emb2 = make_embedder();
  std::string payload, manifest;
  export_embeddings_binary(emb2, &payload, &manifest);

  // line count == row count, ids ascending, vectors identical
  std::vector<std::string> lines;
  for (std::size_t at = 0; at < jsonl.size();) {
    const std::size_t nl = jsonl.find('\n', at);
    lines.push_back(jsonl.substr(at, nl - at));
    at = nl + 1;
  }
  const auto man = nlohmann::json::parse(manifest);
  CHECK(man.at("dtype") == "f64le");
  REQUIRE(man.at("rows").size() == lines.size());

  std::int64_t prev_id = -1;
  std::size_t offset_doubles = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto row = nlohmann::json::parse(lines[i]);
    const std::int64_t id = row.at("id").get<std::int64_t>();
    CHECK(id > prev_id);
    prev_id = id;

    const auto& mrow = man.at("rows").at(i);
    CHECK(mrow.at("id").get<std::int64_t>() == id);
    // offsets and lengths both count doubles, not bytes
    CHECK(mrow.at("offset").get<std::size_t>() == offset_doubles);
    const std::size_t len = mrow.at("length").get<std::size_t>();
    CHECK(len == row.at("vector").size());

    // binary payload stores the same doubles
    for (std::size_t k = 0; k < len; ++k) {
      double v = 0;
      std::memcpy(&v, payload.data() + (offset_doubles + k) * sizeof(double), sizeof(double));
      CHECK(v == row.at("vector").at(k).get<double>());
    }
    offset_doubles += len;
  }
  CHECK(payload.size() == offset_doubles * sizeof(double));
}

TEST_CASE("ridge probe recovers a noiseless linear map") {
  Rng rng(1);
  const int n = 200, p = 6;
  std::vector<double> x(n * p), y(n);
  for (double& v : x) v = rng.normal();
  for (int i = 0; i < n; ++i) {
    double s = 1.5;
    for (int j = 0; j < p; ++j) s += (j + 1) * 0.3 * x[i * p + j];
    y[i] = s;
  }
  const MetricReport rep = run_probe_protocol(ProbeKind::Ridge, x, n, p, y, {}, 7);
  CHECK(rep.runs == 10);
  CHECK_FALSE(rep.classification);
  CHECK(rep.r2_mean >= 0.99);
  CHECK(rep.rmse_mean < 0.1);
}

TEST_CASE("regression metrics match hand-computed values") {
  ProbeModel model;
  model.kind = ProbeKind::Ridge;
  model.feat_mean = {0.0};
  model.feat_std = {1.0};
  model.w = {2.0};
  model.intercept = 1.0;

  const std::vector<double> x{0, 1, 2, 3};
  const std::vector<double> y{1, 2, 6, 7};  // predictions are 1, 3, 5, 7
  const ProbeMetrics m = evaluate_probe(model, x, 4, 1, y, {}, {0, 1, 2, 3});
  CHECK_FALSE(m.classification);
  CHECK(m.mae == doctest::Approx(0.5));
  CHECK(m.rmse == doctest::Approx(std::sqrt(0.5)));
  CHECK(m.r2 == doctest::Approx(1.0 - 2.0 / 26.0));
  REQUIRE(m.has_mape);
  CHECK(m.mape == doctest::Approx((0.0 + 0.5 + 1.0 / 6.0 + 0.0) / 4.0));

  // a zero target disables mape
  const std::vector<double> y0{0, 2, 6, 7};
  CHECK_FALSE(evaluate_probe(model, x, 4, 1, y0, {}, {0, 1, 2, 3}).has_mape);

  // rmse >= mae >= 0 and r2 <= 1 hold for random data too
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> xr(40), yr(40);
    for (double& v : xr) v = rng.normal();
    for (double& v : yr) v = rng.normal();
    const ProbeMetrics mm = evaluate_probe(model, xr, 40, 1, yr, {}, {0, 5, 10, 15, 20, 25});
    CHECK(mm.rmse >= mm.mae);
    CHECK(mm.mae >= 0.0);
    CHECK(mm.r2 <= 1.0);
  }
}

TEST_CASE("classification metrics match a hand-built confusion") {
  ProbeModel model;
  model.kind = ProbeKind::Logistic;
  model.feat_mean = {0.0};
  model.feat_std = {1.0};
  model.classes = {"a", "b"};
  model.logit_w = {0.0, 1.0,   // class a: bias 0, weight 1
                   0.0, -1.0};  // class b

  const std::vector<double> x{1, -1, 1, -1};  // predictions: a, b, a, b
  const std::vector<std::string> labels{"a", "a", "b", "b"};
  const ProbeMetrics m = evaluate_probe(model, x, 4, 1, {}, labels, {0, 1, 2, 3});
  CHECK(m.classification);
  CHECK(m.accuracy == doctest::Approx(0.5));
  CHECK(m.macro_f1 == doctest::Approx(0.5));
  CHECK(m.weighted_f1 == doctest::Approx(0.5));
  REQUIRE(m.class_f1.count("a") == 1);
  CHECK(m.class_f1.at("a") == doctest::Approx(0.5));
  CHECK(m.class_f1.at("b") == doctest::Approx(0.5));
}

TEST_CASE("logistic probe separates a linearly separable toy set") {
  Rng rng(3);
  const int n = 120, p = 2;
  std::vector<double> x(n * p);
  std::vector<std::string> labels(n);
  for (int i = 0; i < n; ++i) {
    const bool left = i % 2 == 0;
    x[i * p] = (left ? -2.0 : 2.0) + 0.3 * rng.normal();
    x[i * p + 1] = rng.normal();
    labels[i] = left ? "west" : "east";
  }
  const MetricReport rep = run_probe_protocol(ProbeKind::Logistic, x, n, p, {}, labels, 11);
  CHECK(rep.classification);
  CHECK(rep.accuracy_mean >= 0.95);
  CHECK(rep.macro_f1_mean >= 0.95);
  CHECK(rep.class_f1_mean.count("west") == 1);
  CHECK(rep.class_f1_mean.count("east") == 1);
}

TEST_CASE("shuffled labels collapse the probes to chance") {
  Rng rng(4);
  const int n = 240, p = 8;
  std::vector<double> x(n * p), y(n);
  for (double& v : x) v = rng.normal();
  for (int i = 0; i < n; ++i) y[i] = x[i * p] * 2.0 + 0.1 * rng.normal();

  // regression: shuffling targets kills r2
  auto y_shuf = y;
  rng.shuffle(y_shuf);
  const MetricReport reg = run_probe_protocol(ProbeKind::Ridge, x, n, p, y_shuf, {}, 5);
  CHECK(reg.r2_mean <= 0.05);

  // classification: shuffled imbalanced labels fall back to the majority rate
  std::vector<std::string> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = i % 4 == 0 ? "rare" : "common";  // 75% majority
  rng.shuffle(labels);
  const MetricReport cls = run_probe_protocol(ProbeKind::Logistic, x, n, p, {}, labels, 6);
  CHECK(std::abs(cls.accuracy_mean - 0.75) <= 0.05);
}

TEST_CASE("probe input validation") {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{1, 2, 3, 4};
  CHECK_THROWS_AS(fit_probe(ProbeKind::Ridge, x, 4, 1, y, {}, {0, 1}, {2, 3}), Error);  // n < 10
  const std::vector<double> xbig(100, 0.5);
  std::vector<double> ybig(100);
  for (int i = 0; i < 100; ++i) ybig[i] = i;
  CHECK_THROWS_AS(
      fit_probe(ProbeKind::Ridge, xbig, 100, 1, ybig, {}, {0, 1, 2, 150}, {5, 6, 7}), Error);
}

TEST_CASE("metric report csv shapes") {
  MetricReport rep;
  rep.classification = true;
  rep.runs = 10;
  rep.accuracy_mean = 0.9;
  rep.accuracy_std = 0.01;
  rep.class_f1_mean["shopfront"] = 0.75;
  const std::string csv = metric_report_csv(rep);
  CHECK(csv.rfind("metric,mean,std\n", 0) == 0);
  CHECK(csv.find("runs,10,\n") != std::string::npos);
  CHECK(csv.find("accuracy,0.9,0.01\n") != std::string::npos);
  CHECK(csv.find("f1:shopfront,0.75,\n") != std::string::npos);

  MetricReport reg;
  reg.runs = 3;
  reg.rmse_mean = 1.5;
  const std::string rcsv = metric_report_csv(reg);
  CHECK(rcsv.find("rmse,1.5,0\n") != std::string::npos);
  CHECK(rcsv.find("accuracy") == std::string::npos);
}

TEST_CASE("cosine and cosine_table") {
  CHECK(cosine({1, 0}, {0, 1}) == doctest::Approx(0.0));
  CHECK(cosine({2, 0}, {5, 0}) == doctest::Approx(1.0));
  CHECK(cosine({1, 1}, {-1, -1}) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(cosine({1, 0}, {1}), Error);
  CHECK_THROWS_AS(cosine({0, 0}, {1, 0}), Error);

  Bundle& b = bundle();
  const std::vector<Tag> query{{"amenity", "restaurant"}};
  const std::vector<std::vector<Tag>> candidates{
      {{"amenity", "cafe"}},
      {{"shop", "butcher"}},
      {{"leisure", "park"}},
  };
  const auto rows = cosine_table(b.out.model, b.out.vocab, query, candidates);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].label == "amenity: restaurant");
  CHECK(rows[0].cosine == doctest::Approx(1.0));
  for (std::size_t i = 2; i < rows.size(); ++i) {
    CHECK(rows[i - 1].cosine >= rows[i].cosine);  // descending after the self row
  }

  const auto top1 = cosine_table(b.out.model, b.out.vocab, query, candidates, 1);
  REQUIRE(top1.size() == 2);  // self row plus one candidate
  CHECK(top1[1].label == rows[1].label);
}

TEST_CASE("task evaluations run end to end on the synthetic tables") {
  Embedder emb = make_embedder();
  Bundle& b = bundle();

  std::vector<EntityId> used;
  std::vector<double> targets;
  const MetricReport speed =
      eval_speed(emb, b.city.corpus, b.city.tables.speeds_csv, 7, &used, &targets);
  CHECK(speed.runs == 10);
  CHECK_FALSE(speed.classification);
  CHECK(used.size() == targets.size());
  CHECK(used.size() == 24);  // one row per road
  CHECK(std::isfinite(speed.r2_mean));

  const MetricReport shuffled =
      eval_speed_shuffled(emb, b.city.corpus, b.city.tables.speeds_csv, 7, 99);
  CHECK(std::isfinite(shuffled.r2_mean));
  CHECK(shuffled.r2_mean != speed.r2_mean);

  const MetricReport build =
      eval_buildings(emb, b.city.corpus, b.city.tables.building_labels_csv, 7);
  CHECK(build.classification);
  CHECK(build.accuracy_mean >= 0.0);
  CHECK(build.accuracy_mean <= 1.0);
  CHECK(build.macro_f1_mean <= 1.0);

  const MetricReport region =
      eval_regions(emb, b.city.corpus, b.city.tables.region_density_csv, 7);
  CHECK_FALSE(region.classification);
  CHECK(std::isfinite(region.rmse_mean));

  // header validation
  const std::string bad = "wrong,header\n1,2\n";
  CHECK_THROWS_AS(eval_speed(emb, b.city.corpus, bad, 7), Error);
  CHECK_THROWS_AS(eval_buildings(emb, b.city.corpus, bad, 7), Error);
  CHECK_THROWS_AS(eval_regions(emb, b.city.corpus, bad, 7), Error);

  // references to unknown entities are refused
  CHECK_THROWS_AS(
      eval_speed(emb, b.city.corpus, "segment_id,speed_mph\n424242,33.0\n5001,30\n", 7), Error);
}

TEST_CASE("synth_city is deterministic and validates its arguments") {
  const SynthCity a = synth_city(50, 24, 60, 50, 4, 5);
  const SynthCity b = synth_city(50, 24, 60, 50, 4, 5);
  CHECK(a.corpus == b.corpus);
  CHECK(a.tables.speeds_csv == b.tables.speeds_csv);
  CHECK(a.tables.building_labels_csv == b.tables.building_labels_csv);
  CHECK(a.tables.region_density_csv == b.tables.region_density_csv);
  CHECK(a.tables.colocation_json == b.tables.colocation_json);

  const SynthCity c = synth_city(51, 24, 60, 50, 4, 5);
  CHECK(c.corpus != a.corpus);

  CHECK_THROWS_AS(synth_city(1, 0), Error);
  CHECK_THROWS_AS(synth_city(1, 145), Error);
  CHECK_THROWS_AS(synth_city(1, 24, -1), Error);
  CHECK_THROWS_AS(synth_city(1, 24, 10, 10, 5), Error);   // 5 is not a square
  CHECK_THROWS_AS(synth_city(1, 24, 0, 10, 4, 3), Error);  // pii needs pois
}

TEST_CASE("synth_city tables and corpus line up") {
  const SynthCity city = synth_city(52, 30, 90, 70, 9, 0);

  int roads = 0, pois = 0, buildings = 0, relations = 0;
  for (const auto& [id, e] : city.corpus.entities) {
    if (e.is_road()) ++roads;
    if (e.kind == EntityKind::Node && id >= 20000 && id < 30000) ++pois;
    if (e.is_closed_way()) ++buildings;
    if (e.kind == EntityKind::Relation) ++relations;
  }
  CHECK(roads == 30);
  CHECK(pois == 90);
  CHECK(buildings == 70);
  CHECK(relations == 3);

  const auto speeds = parse_csv(city.tables.speeds_csv);
  REQUIRE(speeds.size() == 31u);  // header + one row per road
  CHECK(speeds[0] == std::vector<std::string>{"segment_id", "speed_mph"});
  for (std::size_t i = 1; i < speeds.size(); ++i) {
    const double mph = std::stod(speeds[i][1]);
    CHECK(mph >= 5.0);
    CHECK(mph <= 45.0);
  }

  const auto labels = parse_csv(city.tables.building_labels_csv);
  REQUIRE(labels.size() == 71u);
  CHECK(labels[0] == std::vector<std::string>{"way_id", "class"});

  const auto regions = parse_csv(city.tables.region_density_csv);
  REQUIRE(regions.size() == 10u);
  CHECK(regions[0] ==
        std::vector<std::string>{"region_id", "wkt_polygon", "density_kppl"});
  for (std::size_t i = 1; i < regions.size(); ++i) {
    const auto ring = parse_wkt_polygon(regions[i][1]);
    CHECK(ring.size() >= 4u);
    CHECK(std::stod(regions[i][2]) > 0.0);
  }

  const auto coloc = nlohmann::json::parse(city.tables.colocation_json);
  REQUIRE(coloc.at("queries").size() == 25u);
  for (const auto& q : coloc.at("queries")) {
    CHECK(q.at("colocated").size() == 4u);
    CHECK(q.at("never").size() == 20u);
  }
}
