#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cityfm/corpus.hpp"
#include "cityfm/geometry.hpp"
#include "cityfm/neural.hpp"
#include "cityfm/pretrain.hpp"

namespace cityfm {

// ---------------------------------------------------------------------------
// Entity and region embeddings

struct EmbeddingRecord {
  EntityId id = 0;
  bool has_text = false;     // h_e (own tags) or c_e (context) block present
  bool has_visual = false;   // fused v_e block present (closed ways)
  bool has_location = true;  // always appended
  std::vector<double> vec;   // [text? | visual? | location]
};

// Point-in-ring test, even-odd rule in degree space. Ring closed, >= 4 pts.
bool point_in_ring(GeoPoint p, const std::vector<GeoPoint>& ring);

std::string wkt_polygon(const std::vector<GeoPoint>& ring);
std::vector<GeoPoint> parse_wkt_polygon(std::string_view text);

// Frozen-checkpoint embedding machine. Holds references; callers keep the
// model, vocabulary and corpus alive. Methods cache text/visual embeddings,
// so an instance is meant for single-threaded use.
class Embedder {
 public:
  Embedder(const Model& model, const Vocabulary& vocab, const TrainingConfig& config,
           const Corpus& corpus);

  // [h|loc] for tagged nodes and roads, [h|v|loc] for tagged closed ways,
  // [v|loc] for untagged closed ways, [c|loc] for untagged roads. Relations
  // and untagged nodes have no embeddable modality.
  EmbeddingRecord embed_entity(EntityId id);

  // [mean text over contained tagged entities | mean visual over contained
  // polygons | location of the region centroid]. Empty blocks stay zero and
  // are reported through the flags.
  std::vector<double> embed_region(const std::vector<GeoPoint>& region, bool* text_empty = nullptr,
                                   bool* visual_empty = nullptr);

  // h_e from the entity's own tags.
  const std::vector<double>& text_of(EntityId id);
  // Context average as the trainer computes it: members of the nearest
  // road's group, excluding the entity itself, plus the empty node. Entities
  // with no road within the radius get the empty-node embedding alone.
  std::vector<double> context_of(EntityId id);
  // Context of a road's own group (members + empty node).
  std::vector<double> road_context(EntityId road_id);
  // Fused visual embedding; nullopt for zero-area rings.
  std::optional<std::vector<double>> visual_of(EntityId id);
  std::vector<double> location_code(GeoPoint p) const;

  int text_dim() const;
  int loc_dim() const;
  const Corpus& corpus() const { return corpus_; }

 private:
  const std::vector<double>& cached_text(EntityId id);

  const Model& model_;
  const Vocabulary& vocab_;
  const TrainingConfig& config_;
  const Corpus& corpus_;
  RoadIndex index_;
  std::map<EntityId, const ContextGroup*> group_of_road_;
  std::vector<ContextGroup> groups_;
  std::map<EntityId, std::vector<double>> text_cache_;
  std::map<EntityId, std::vector<double>> visual_cache_;
};

// JSON-lines export ({"id":..,"modalities":[..],"vector":[..]}) of every
// embeddable entity, ascending id. The binary variant returns raw f64 rows
// plus a JSON sidecar manifest with per-row offsets.
std::string export_embeddings_jsonl(Embedder& embedder);
void export_embeddings_binary(Embedder& embedder, std::string* payload, std::string* manifest);

// ---------------------------------------------------------------------------
// Probes

enum class ProbeKind { Ridge, Logistic };

struct ProbeModel {
  ProbeKind kind = ProbeKind::Ridge;
  std::vector<double> feat_mean;  // per-feature standardization
  std::vector<double> feat_std;
  double alpha = 0;  // selected regularization strength
  // ridge
  std::vector<double> w;
  double intercept = 0;
  // logistic: row-major (n_classes x (p + 1)), bias first
  std::vector<double> logit_w;
  std::vector<std::string> classes;
};

// One evaluation on a fixed dataset.
struct ProbeMetrics {
  bool classification = false;
  double rmse = 0, mae = 0, r2 = 0;
  bool has_mape = false;
  double mape = 0;
  double accuracy = 0, macro_f1 = 0, weighted_f1 = 0;
  std::map<std::string, double> class_f1;
};

// Mean and stddev over independent seeded runs.
struct MetricReport {
  bool classification = false;
  int runs = 0;
  bool has_mape = false;
  double rmse_mean = 0, rmse_std = 0;
  double mae_mean = 0, mae_std = 0;
  double r2_mean = 0, r2_std = 0;
  double mape_mean = 0, mape_std = 0;
  double accuracy_mean = 0, accuracy_std = 0;
  double macro_f1_mean = 0, macro_f1_std = 0;
  double weighted_f1_mean = 0, weighted_f1_std = 0;
  std::map<std::string, double> class_f1_mean;
};

std::string metric_report_csv(const MetricReport& report);

// X is row-major n x p. Regression targets in y; classification labels in
// labels. fit_probe standardizes features on the given training rows and
// selects the regularization strength on the validation rows.
ProbeModel fit_probe(ProbeKind kind, const std::vector<double>& x, int n, int p,
                     const std::vector<double>& y, const std::vector<std::string>& labels,
                     const std::vector<int>& train_idx, const std::vector<int>& val_idx);

ProbeMetrics evaluate_probe(const ProbeModel& model, const std::vector<double>& x, int n, int p,
                            const std::vector<double>& y, const std::vector<std::string>& labels,
                            const std::vector<int>& idx);

// Full protocol: 10 seeded runs, each a fresh 50/25/25 split, fit on train,
// alpha from val, metrics on test, aggregated mean/std.
MetricReport run_probe_protocol(ProbeKind kind, const std::vector<double>& x, int n, int p,
                                const std::vector<double>& y,
                                const std::vector<std::string>& labels, std::uint64_t base_seed,
                                int runs = 10);

// ---------------------------------------------------------------------------
// Task evaluations

// Roads: [h | context | loc] against speed_mph keyed by segment id.
MetricReport eval_speed(Embedder& embedder, const Corpus& corpus, const std::string& speeds_csv,
                        std::uint64_t base_seed, std::vector<EntityId>* used_ids = nullptr,
                        std::vector<double>* targets = nullptr);

// Closed ways: [v | context | loc] against class labels keyed by way id.
MetricReport eval_buildings(Embedder& embedder, const Corpus& corpus,
                            const std::string& labels_csv, std::uint64_t base_seed);

// Regions: embed_region vectors against density (thousand people per km^2).
MetricReport eval_regions(Embedder& embedder, const Corpus& corpus, const std::string& regions_csv,
                          std::uint64_t base_seed);

// Shuffled-label null controls used by tests and the acceptance suite.
MetricReport eval_speed_shuffled(Embedder& embedder, const Corpus& corpus,
                                 const std::string& speeds_csv, std::uint64_t base_seed,
                                 std::uint64_t shuffle_seed);

// ---------------------------------------------------------------------------
// Qualitative similarity analysis

struct CosineRow {
  std::string label;
  double cosine = 0;
};

// Cosine of text embeddings between the query tag set and each candidate,
// descending, self-similarity row first. k > 0 truncates the candidate rows.
std::vector<CosineRow> cosine_table(const Model& model, const Vocabulary& vocab,
                                    const std::vector<Tag>& query,
                                    const std::vector<std::vector<Tag>>& candidates, int k = 0);

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// ---------------------------------------------------------------------------
// Synthetic benchmark city

struct SynthTables {
  std::string speeds_csv;           // segment_id,speed_mph
  std::string building_labels_csv;  // way_id,class
  std::string region_density_csv;   // region_id,wkt_polygon,density_kppl
  std::string colocation_json;      // query categories with co-located / never lists
};

struct SynthCity {
  Corpus corpus;
  SynthTables tables;
};

// Deterministic mini-city: grid road network with arterial bus routes, POIs
// whose categories cluster by district, buildings whose shape family and
// footprint area encode an imbalanced 8-class functionality label, and
// region tiles with density driven by residential area. pii_count extra
// personal-data tags are salted in for scrub testing.
SynthCity synth_city(std::uint64_t seed, int n_roads = 140, int n_pois = 500,
                     int n_buildings = 600, int n_regions = 64, int pii_count = 0);

}  // namespace cityfm
