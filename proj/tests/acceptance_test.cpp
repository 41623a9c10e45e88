// Acceptance gate: one line per criterion, all criteria always evaluated,
// exit 1 when any fails. Criteria 6-8 share two full pipeline runs driven
// through the public CLI with --threads 1.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cityfm/cli.hpp"
#include "cityfm/corpus.hpp"
#include "cityfm/downstream.hpp"
#include "cityfm/geometry.hpp"
#include "cityfm/loc_encoding.hpp"
#include "cityfm/pretrain.hpp"
#include "cityfm/util.hpp"
#include "test_support.hpp"

using namespace cityfm;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, pattern);
  std::vsnprintf(buf, sizeof buf, pattern, ap);
  va_end(ap);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void cli_must(std::vector<std::string> args) {
  const std::string name = args.empty() ? "<none>" : args[0];
  const int code = cli::run(std::move(args));
  if (code != 0) throw Error(name + " exited with code " + std::to_string(code));
}

// Finite-difference relative error with a floor on the denominator so that
// near-zero components degrade to an absolute check instead of blowing up.
double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

std::vector<double> normal_vec(Rng& rng, int n, double scale) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// ---------------------------------------------------------------------------
// criterion 1: finite-difference gradients of the three losses

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const double h = 1e-5;
  Rng rng(2024);

  // diagonal-pair objectives, 128 anchor + 128 context components each
  const int b = 16, dim = 8;
  double max_pair = 0;
  int pair_params = 0;
  for (int variant = 0; variant < 2; ++variant) {
    std::vector<double> anchors = normal_vec(rng, b * dim, 0.8);
    std::vector<double> contexts = normal_vec(rng, b * dim, 0.8);
    const auto loss_of = [&](const std::vector<double>& a, const std::vector<double>& c) {
      return variant == 0 ? nce_text_loss(a, c, b, dim, 0.5).loss
                          : nce_vision_loss(a, c, b, dim, 0.5).loss;
    };
    const PairNceResult res = variant == 0 ? nce_text_loss(anchors, contexts, b, dim, 0.5)
                                           : nce_vision_loss(anchors, contexts, b, dim, 0.5);
    for (int side = 0; side < 2; ++side) {
      std::vector<double>& x = side == 0 ? anchors : contexts;
      const std::vector<double>& g = side == 0 ? res.danchors : res.dcontexts;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = loss_of(anchors, contexts);
        x[i] = keep - h;
        const double down = loss_of(anchors, contexts);
        x[i] = keep;
        max_pair = std::max(max_pair, rel_err(g[i], (up - down) / (2 * h)));
        ++pair_params;
      }
    }
  }

  // road objective; reseeding keeps the negative draws identical per eval
  const int r = 16, rdim = 16;
  std::vector<std::vector<int>> sims(r);
  for (int i = 0; i < 12; ++i) sims[static_cast<std::size_t>(i)] = {(i + 1) % r, (i + 5) % r};
  std::vector<double> emb = normal_vec(rng, r * rdim, 0.5);
  const auto road_loss = [&]() {
    Rng draw(123);
    return nce_road_loss(emb, r, rdim, sims, 4, 0.7, draw);
  };
  const RoadNceResult road = road_loss();
  double max_road = 0;
  int road_params = 0;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    const double keep = emb[i];
    emb[i] = keep + h;
    const double up = road_loss().loss;
    emb[i] = keep - h;
    const double down = road_loss().loss;
    emb[i] = keep;
    max_road = std::max(max_road, rel_err(road.demb[i], (up - down) / (2 * h)));
    ++road_params;
  }

  const double elapsed = seconds_since(t0);
  const bool ok = max_pair <= 1e-4 && max_road <= 1e-4 && pair_params / 2 >= 200 &&
                  road_params >= 200 && elapsed < 60.0;
  return {ok, fmt("max rel err pair %.2e road %.2e over %d+%d params, %.1f s", max_pair, max_road,
                  pair_params, road_params, elapsed)};
}

// ---------------------------------------------------------------------------
// criterion 2: closed-form loss identities

Outcome criterion_identities() {
  Rng rng(11);
  double worst = 0;
  for (const int b : {1, 2, 3, 5, 17, 64}) {
    const std::vector<double> arow = normal_vec(rng, 6, 1.0);
    const std::vector<double> crow = normal_vec(rng, 6, 1.0);
    std::vector<double> anchors, contexts;
    for (int i = 0; i < b; ++i) {
      anchors.insert(anchors.end(), arow.begin(), arow.end());
      contexts.insert(contexts.end(), crow.begin(), crow.end());
    }
    const double want = std::log(static_cast<double>(b));
    worst = std::max(worst, std::abs(nce_text_loss(anchors, contexts, b, 6, 0.5).loss - want));
    worst = std::max(worst, std::abs(nce_vision_loss(anchors, contexts, b, 6, 0.5).loss - want));
  }

  // batch of one scores zero even without uniform rows
  const PairNceResult single =
      nce_text_loss(normal_vec(rng, 4, 1.0), normal_vec(rng, 4, 1.0), 1, 4, 0.5);
  worst = std::max(worst, std::abs(single.loss));

  Rng draw(3);
  const RoadNceResult road =
      nce_road_loss(normal_vec(rng, 20, 1.0), 5, 4, {{}, {}, {}, {}, {}}, 8, 0.5, draw);
  bool road_zero = road.loss == 0.0 && road.clamped_to == -1;
  for (const double g : road.demb) road_zero = road_zero && g == 0.0;

  const bool ok = worst <= 1e-9 && road_zero;
  return {ok, fmt("uniform-logit worst dev %.2e, empty-sim road loss %g", worst, road.loss)};
}

// ---------------------------------------------------------------------------
// criterion 3: location encoder properties

Outcome criterion_location() {
  Rng rng(5);
  const int d = 128;
  const double lambda = 100.0;

  const std::vector<double> probe = encode_location({1.3, 103.8});
  if (probe.size() != 256u) return {false, fmt("default length %zu, want 256", probe.size())};

  double circle_dev = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const GeoPoint p{rng.uniform(-90, 90), rng.uniform(-180, 180)};
    const std::vector<double> v = encode_location(p, d, lambda);
    for (std::size_t i = 0; i + 1 < v.size(); i += 2) {
      circle_dev = std::max(circle_dev, std::abs(v[i] * v[i] + v[i + 1] * v[i + 1] - 1.0));
    }
  }

  double rot_dev = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const GeoPoint p{rng.uniform(-90, 90), rng.uniform(-180, 180)};
    const double dlat = rng.uniform(-5, 5), dlon = rng.uniform(-5, 5);
    const std::vector<double> v = encode_location(p, d, lambda);
    const std::vector<double> w = encode_location({p.lat + dlat, p.lon + dlon}, d, lambda);
    for (int block = 0; block < 2; ++block) {
      const std::size_t off = static_cast<std::size_t>(block) * d;
      const double delta = block == 0 ? dlat : dlon;
      for (int k = 0; 2 * k + 1 < d; ++k) {
        const double omega = lambda / std::pow(10000.0, 2.0 * k / d);
        const double cd = std::cos(omega * delta), sd = std::sin(omega * delta);
        const double s = v[off + 2 * k], c = v[off + 2 * k + 1];
        rot_dev = std::max(rot_dev, std::abs(s * cd + c * sd - w[off + 2 * k]));
        rot_dev = std::max(rot_dev, std::abs(c * cd - s * sd - w[off + 2 * k + 1]));
      }
    }
  }

  const bool ok = circle_dev <= 1e-12 && rot_dev <= 1e-9;
  return {ok, fmt("sin^2+cos^2 dev %.2e, shift-rotation dev %.2e over 1000 pairs", circle_dev,
                  rot_dev)};
}

// ---------------------------------------------------------------------------
// criterion 4: geometry against Monte-Carlo and analytic oracles

Outcome criterion_geometry() {
  Rng rng(31);
  double worst_mc = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const GeoPoint center{rng.uniform(-55, 55), rng.uniform(-170, 170)};
    const double radius = rng.uniform(30, 250);
    const int n = 4 + static_cast<int>(rng.below(9));
    const std::vector<GeoPoint> ring = testsupport::convex_ring(rng, center, radius, n);
    const double area = surface_area_m2(ring);
    const double oracle = testsupport::mc_area_m2(ring, rng, 1000000);
    worst_mc = std::max(worst_mc, std::abs(area - oracle) / oracle);
  }

  const int grid = 192;
  double worst_px = 0, min_expected = 1e18;
  for (int trial = 0; trial < 100; ++trial) {
    const GeoPoint center{rng.uniform(-55, 55), rng.uniform(-170, 170)};
    const std::vector<GeoPoint> ring =
        testsupport::convex_ring(rng, center, rng.uniform(30, 250), 4 + static_cast<int>(rng.below(9)));
    const LocalProjection proj(centroid(ring));
    double xmin = 1e18, xmax = -1e18, ymin = 1e18, ymax = -1e18;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
      const XY q = proj.project(ring[i]);
      xmin = std::min(xmin, q.x), xmax = std::max(xmax, q.x);
      ymin = std::min(ymin, q.y), ymax = std::max(ymax, q.y);
    }
    const double long_edge = std::max(xmax - xmin, ymax - ymin);
    const double scale = 0.9 * grid / long_edge;  // px per meter after fitting
    const double expected = surface_area_m2(ring) * scale * scale;
    min_expected = std::min(min_expected, expected);
    const double set = static_cast<double>(rasterize(ring, grid).set_count());
    worst_px = std::max(worst_px, std::abs(set - expected) / expected);
  }

  const std::vector<GeoPoint> square{
      {0, 0}, {0, 0.001}, {0.001, 0.001}, {0.001, 0}, {0, 0}};
  const double eq_err = std::abs(surface_area_m2(square) - 12392.1) / 12392.1;

  const bool ok = worst_mc <= 0.005 && worst_px <= 0.02 && min_expected >= 50 && eq_err <= 0.001;
  return {ok, fmt("MC dev %.3f%%, raster dev %.2f%% (min %.0f px), equator square dev %.4f%%",
                  100 * worst_mc, 100 * worst_px, min_expected, 100 * eq_err)};
}

// ---------------------------------------------------------------------------
// criterion 5: link weights against a nested-loop oracle

Outcome criterion_link_weights() {
  Rng rng(47);
  for (int trial = 0; trial < 1000; ++trial) {
    const Corpus corpus = testsupport::random_route_corpus(rng);
    const LinkWeightTable table = link_weights(corpus);

    std::map<EntityId, std::int64_t> counts;
    std::int64_t max_count = 0;
    for (const auto& [id, e] : corpus.entities) {
      if (e.kind != EntityKind::Way) continue;
      std::int64_t c = 0;
      for (const auto& [rid, r] : corpus.entities) {
        if (r.kind != EntityKind::Relation) continue;
        bool contains = false;
        for (const Member& m : r.members) contains = contains || m.id == id;
        c += contains ? 1 : 0;
      }
      counts[id] = c;
      max_count = std::max(max_count, c);
    }
    if (counts != table.counts || max_count != table.max_count) {
      return {false, fmt("count mismatch on corpus %d", trial)};
    }
    bool top_seen = max_count == 0;
    for (const auto& [id, w] : table.weights) {
      const double want = max_count == 0 ? 0.0 : static_cast<double>(counts.at(id)) /
                                                     static_cast<double>(max_count);
      if (w != want) return {false, fmt("weight mismatch on corpus %d way %lld", trial,
                                        static_cast<long long>(id))};
      top_seen = top_seen || w == 1.0;
    }
    if (!top_seen) return {false, fmt("no unit weight on corpus %d", trial)};

    const auto sims = similar_roads(table.weights, 0.05);
    for (const auto& [i, neigh] : sims) {
      for (const EntityId j : neigh) {
        if (i == j) return {false, fmt("self link on corpus %d", trial)};
        const bool strict = std::abs(table.weights.at(i) - table.weights.at(j)) < 0.05;
        const auto& back = sims.at(j);
        const bool sym = std::find(back.begin(), back.end(), i) != back.end();
        if (!strict || !sym) return {false, fmt("similarity asymmetry on corpus %d", trial)};
      }
    }
  }
  return {true, "counts, weights and similarity sets match on 1000 random corpora"};
}

// ---------------------------------------------------------------------------
// criteria 6-8: two full pipeline runs through the CLI

struct Pipeline {
  std::string city, run, emb, ev, evshuf, sim;
  double wall_s = 0;
};

Pipeline run_pipeline(const std::string& root) {
  Pipeline p;
  p.city = root + "/city";
  p.run = root + "/run";
  p.emb = root + "/emb";
  p.ev = root + "/ev";
  p.evshuf = root + "/evshuf";
  p.sim = root + "/sim";
  const auto t0 = std::chrono::steady_clock::now();
  cli_must({"synth-city", "--out", p.city, "--seed", "7", "--threads", "1"});
  cli_must({"pretrain", "--corpus", p.city, "--out", p.run, "--threads", "1"});
  const std::string ck = p.run + "/checkpoint.bin";
  cli_must({"embed", "--checkpoint", ck, "--corpus", p.city, "--out", p.emb, "--format", "both",
            "--regions", p.city + "/regions.csv", "--threads", "1"});
  cli_must({"eval-speed", "--checkpoint", ck, "--corpus", p.city, "--speeds",
            p.city + "/speeds.csv", "--out", p.ev, "--threads", "1"});
  cli_must({"eval-speed", "--checkpoint", ck, "--corpus", p.city, "--speeds",
            p.city + "/speeds.csv", "--out", p.evshuf, "--shuffle-seed", "99", "--threads", "1"});
  cli_must({"eval-buildings", "--checkpoint", ck, "--corpus", p.city, "--labels",
            p.city + "/building_labels.csv", "--out", p.ev, "--threads", "1"});
  cli_must({"eval-regions", "--checkpoint", ck, "--corpus", p.city, "--regions",
            p.city + "/regions.csv", "--out", p.ev, "--threads", "1"});
  cli_must({"analyze-sim", "--checkpoint", ck, "--colocation", p.city + "/colocation.json",
            "--out", p.sim, "--threads", "1"});
  p.wall_s = seconds_since(t0);
  return p;
}

double metric_mean(const std::string& path, const std::string& name) {
  for (const auto& row : parse_csv(read_file(path))) {
    if (!row.empty() && row[0] == name) return std::stod(row[1]);
  }
  throw Error("no metric '" + name + "' in " + path);
}

// mean text-embedding cosine of same-context pairs minus that of random pairs
double context_cosine_gap(const Pipeline& p) {
  const Corpus corpus = parse_jsonl(read_file(p.city + "/corpus.jsonl"));
  const Checkpoint ck = load_checkpoint(p.run + "/checkpoint.bin");
  const Model model = model_from_checkpoint(ck);
  Embedder embedder(model, ck.vocab, ck.train_config, corpus);

  std::vector<std::vector<EntityId>> groups;
  std::vector<EntityId> pool;
  for (const ContextGroup& g : build_context_groups(corpus, ck.train_config.context_radius_m)) {
    std::vector<EntityId> ids;
    for (const EntityId id : g.member_ids) {
      const Entity& e = corpus.at(id);
      if (e.kind == EntityKind::Node && e.has_tags()) ids.push_back(id);
    }
    if (ids.size() < 2) continue;
    pool.insert(pool.end(), ids.begin(), ids.end());
    groups.push_back(std::move(ids));
  }
  if (pool.size() < 2) throw Error("too few grouped entities for the cosine gap");

  double same = 0;
  std::int64_t n_same = 0;
  for (const auto& g : groups) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t j = i + 1; j < g.size(); ++j) {
        same += cosine(embedder.text_of(g[i]), embedder.text_of(g[j]));
        ++n_same;
      }
    }
  }

  Rng rng(123);
  double rand_sum = 0;
  const int n_rand = 2000;
  for (int k = 0; k < n_rand; ++k) {
    const EntityId a = pool[rng.below(pool.size())];
    EntityId b = pool[rng.below(pool.size())];
    while (b == a) b = pool[rng.below(pool.size())];
    rand_sum += cosine(embedder.text_of(a), embedder.text_of(b));
  }
  return same / static_cast<double>(n_same) - rand_sum / n_rand;
}

double majority_share(const std::string& labels_csv) {
  std::map<std::string, int> counts;
  int total = 0;
  const auto rows = parse_csv(read_file(labels_csv));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ++counts[rows[i][1]];
    ++total;
  }
  int best = 0;
  for (const auto& [cls, n] : counts) best = std::max(best, n);
  return static_cast<double>(best) / total;
}

Outcome criterion_benchmark(const Pipeline& p) {
  const auto curve = parse_csv(read_file(p.run + "/loss_curve.csv"));
  if (curve.size() < 52) return {false, "loss curve shorter than 51 steps"};
  const std::size_t total_col = curve[0].size() - 1;
  const double first = std::stod(curve[1][total_col]);
  double tail = 0;
  for (std::size_t i = curve.size() - 50; i < curve.size(); ++i) {
    tail += std::stod(curve[i][total_col]);
  }
  tail /= 50;
  const double decrease = (first - tail) / first;

  const double gap = context_cosine_gap(p);
  const double speed_r2 = metric_mean(p.ev + "/speed_metrics.csv", "r2");
  const double shuffled_r2 = metric_mean(p.evshuf + "/speed_metrics.csv", "r2");
  const double accuracy = metric_mean(p.ev + "/building_metrics.csv", "accuracy");
  const double majority = majority_share(p.city + "/building_labels.csv");
  const double region_r2 = metric_mean(p.ev + "/region_metrics.csv", "r2");

  const bool ok = p.wall_s <= 300.0 && decrease >= 0.30 && gap >= 0.2 && speed_r2 >= 0.5 &&
                  shuffled_r2 <= 0.05 && accuracy >= 0.80 && region_r2 >= 0.6;
  return {ok,
          fmt("loss -%.1f%%, cosine gap %.3f, speed r2 %.3f (shuffled %.3f), building acc %.3f "
              "(majority %.3f), region r2 %.3f, %.0f s",
              100 * decrease, gap, speed_r2, shuffled_r2, accuracy, majority, region_r2,
              p.wall_s)};
}

Outcome criterion_colocation(const Pipeline& p) {
  struct Extremes {
    double min_colocated = 1e18;
    double max_never = -1e18;
  };
  std::map<std::string, Extremes> per_query;
  const auto rows = parse_csv(read_file(p.sim + "/cosine_table.csv"));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::string& relation = rows[i][2];
    const double c = std::stod(rows[i][3]);
    Extremes& e = per_query[rows[i][0]];
    if (relation == "colocated") e.min_colocated = std::min(e.min_colocated, c);
    if (relation == "never") e.max_never = std::max(e.max_never, c);
  }
  int perfect = 0;
  for (const auto& [query, e] : per_query) perfect += e.min_colocated > e.max_never ? 1 : 0;
  const int total = static_cast<int>(per_query.size());
  const double frac = total == 0 ? 0.0 : static_cast<double>(perfect) / total;
  return {total > 0 && frac >= 0.90,
          fmt("%d/%d queries rank every co-located above every never", perfect, total)};
}

Outcome criterion_determinism(const Pipeline& a, const std::string& root_b) {
  const Pipeline b = run_pipeline(root_b);
  const std::vector<std::pair<std::string, std::string>> files = {
      {a.city, "corpus.jsonl"},         {a.city, "speeds.csv"},
      {a.city, "building_labels.csv"},  {a.city, "regions.csv"},
      {a.city, "colocation.json"},      {a.run, "checkpoint.bin"},
      {a.run, "loss_curve.csv"},        {a.emb, "embeddings.jsonl"},
      {a.emb, "embeddings.bin"},        {a.emb, "embeddings_manifest.json"},
      {a.emb, "region_embeddings.jsonl"}, {a.ev, "speed_metrics.csv"},
      {a.ev, "building_metrics.csv"},   {a.ev, "region_metrics.csv"},
      {a.evshuf, "speed_metrics.csv"},  {a.sim, "cosine_table.csv"},
      {a.sim, "cosine_chart.svg"},
  };
  const std::vector<std::string> dirs_b = {b.city, b.city, b.city, b.city, b.city, b.run,
                                           b.run,  b.emb,  b.emb,  b.emb,  b.emb,  b.ev,
                                           b.ev,   b.ev,   b.evshuf, b.sim, b.sim};
  std::string mismatched;
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (read_file(files[i].first + "/" + files[i].second) !=
        read_file(dirs_b[i] + "/" + files[i].second)) {
      mismatched += (mismatched.empty() ? "" : ", ") + files[i].second;
    }
  }
  if (!mismatched.empty()) return {false, "differs: " + mismatched};
  return {true, fmt("%zu artifacts byte-identical across reruns", files.size())};
}

// ---------------------------------------------------------------------------
// criterion 9: PII scrub

Outcome criterion_pii(const std::string& root) {
  const std::string city = root + "/city";
  const std::string clean = root + "/clean";
  const std::string clean2 = root + "/clean2";
  cli_must({"synth-city", "--out", city, "--seed", "7", "--pii-count", "500", "--threads", "1"});

  const std::vector<std::string> markers = {
      "+65 6555",    "+65 6777",         "https://",  "@example.com", "orchard road",
      "facebook.com", "phone",           "website",   "email",        "addr:",
      "contact:",
  };
  const std::string salted = read_file(city + "/corpus.jsonl");
  if (salted.find("+65 6555") == std::string::npos ||
      salted.find("https://") == std::string::npos) {
    return {false, "salted corpus is missing the injected tags"};
  }

  cli_must({"preprocess", "--input", city, "--out", clean});
  const std::string manifest = read_file(clean + "/manifest.json");
  const std::string scrubbed = read_file(clean + "/corpus.jsonl");
  std::int64_t removed = -1;
  {
    const auto pos = manifest.find("\"pii_removed_count\": ");
    if (pos != std::string::npos) removed = std::stoll(manifest.substr(pos + 21));
  }
  std::string leftover;
  for (const std::string& m : markers) {
    if (scrubbed.find(m) != std::string::npos) leftover += (leftover.empty() ? "" : ", ") + m;
  }

  cli_must({"preprocess", "--input", clean + "/corpus.jsonl", "--out", clean2});
  const std::string manifest2 = read_file(clean2 + "/manifest.json");
  const bool idempotent = manifest2.find("\"pii_removed_count\": 0") != std::string::npos &&
                          read_file(clean2 + "/corpus.jsonl") == scrubbed;

  const bool ok = removed == 500 && leftover.empty() && idempotent;
  std::string detail = fmt("500 injected, %lld removed, ", static_cast<long long>(removed));
  detail += leftover.empty() ? "no pattern matches left" : "leftover: " + leftover;
  detail += idempotent ? ", rescrub is a no-op" : ", rescrub changed the corpus";
  return {ok, detail};
}

}  // namespace

int main() {
  testsupport::TempDir scratch;
  int failures = 0;
  const auto report = [&](int n, const std::function<Outcome()>& body) {
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s (%s)\n", n, o.ok ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failures += o.ok ? 0 : 1;
  };

  report(1, criterion_gradients);
  report(2, criterion_identities);
  report(3, criterion_location);
  report(4, criterion_geometry);
  report(5, criterion_link_weights);

  std::optional<Pipeline> pipeline_a;
  report(6, [&] {
    pipeline_a = run_pipeline(scratch.file("a"));
    return criterion_benchmark(*pipeline_a);
  });
  report(7, [&]() -> Outcome {
    if (!pipeline_a) return {false, "pipeline run unavailable"};
    return criterion_colocation(*pipeline_a);
  });
  report(8, [&]() -> Outcome {
    if (!pipeline_a) return {false, "pipeline run unavailable"};
    return criterion_determinism(*pipeline_a, scratch.file("b"));
  });
  report(9, [&] { return criterion_pii(scratch.file("pii")); });

  if (failures > 0) {
    std::printf("%d of 9 criteria failed\n", failures);
    return 1;
  }
  std::printf("all 9 criteria passed\n");
  return 0;
}
