#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cityfm/downstream.hpp"
#include "cityfm/loc_encoding.hpp"
#include "cityfm/util.hpp"
#include "json.hpp"

namespace cityfm {

using ordered_json = nlohmann::ordered_json;

bool point_in_ring(GeoPoint p, const std::vector<GeoPoint>& ring) {
  if (ring.size() < 4 || !(ring.front() == ring.back())) {
    throw Error("point_in_ring: ring must be closed with >= 4 points");
  }
  bool inside = false;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const GeoPoint& a = ring[i];
    const GeoPoint& b = ring[i + 1];
    // half-open crossing rule, matching the rasterizer
    if ((a.lat <= p.lat && p.lat < b.lat) || (b.lat <= p.lat && p.lat < a.lat)) {
      const double x = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
      if (p.lon < x) inside = !inside;
    }
  }
  return inside;
}

std::string wkt_polygon(const std::vector<GeoPoint>& ring) {
  std::string out = "POLYGON ((";
  for (std::size_t i = 0; i < ring.size(); ++i) {
    if (i) out += ", ";
    out += fmt_double(ring[i].lon) + " " + fmt_double(ring[i].lat);
  }
  out += "))";
  return out;
}

std::vector<GeoPoint> parse_wkt_polygon(std::string_view text) {
  const auto open = text.find("((");
  const auto close = text.rfind("))");
  if (text.find("POLYGON") == std::string_view::npos || open == std::string_view::npos ||
      close == std::string_view::npos || close <= open) {
    throw Error("bad WKT polygon: " + std::string(text.substr(0, 60)));
  }
  std::vector<GeoPoint> ring;
  std::string_view body = text.substr(open + 2, close - open - 2);
  std::size_t pos = 0;
  while (pos < body.size()) {
    std::size_t comma = body.find(',', pos);
    if (comma == std::string_view::npos) comma = body.size();
    std::string pair(body.substr(pos, comma - pos));
    double lon = 0, lat = 0;
    if (std::sscanf(pair.c_str(), "%lf %lf", &lon, &lat) != 2) {
      throw Error("bad WKT coordinate pair: " + pair);
    }
    ring.push_back({lat, lon});
    pos = comma + 1;
  }
  if (ring.size() < 4 || !(ring.front() == ring.back())) {
    throw Error("WKT polygon ring must be closed with >= 4 points");
  }
  return ring;
}

// ---------------------------------------------------------------------------
// Embedder

Embedder::Embedder(const Model& model, const Vocabulary& vocab, const TrainingConfig& config,
                   const Corpus& corpus)
    : model_(model), vocab_(vocab), config_(config), corpus_(corpus), index_(corpus) {
  groups_ = build_context_groups(corpus, config.context_radius_m);
  for (const ContextGroup& g : groups_) group_of_road_[g.segment_id] = &g;
}

int Embedder::text_dim() const { return model_.config().embed_dim; }
int Embedder::loc_dim() const { return 2 * config_.loc_d; }

const std::vector<double>& Embedder::cached_text(EntityId id) {
  const auto it = text_cache_.find(id);
  if (it != text_cache_.end()) return it->second;
  const Entity& e = id == kEmptyNodeId ? empty_node() : corpus_.at(id);
  if (!e.has_tags()) throw Error("entity " + std::to_string(id) + " has no tags");
  auto h = text_encode(model_, tokenize(serialize_tags(e), vocab_));
  return text_cache_.emplace(id, std::move(h)).first->second;
}

const std::vector<double>& Embedder::text_of(EntityId id) { return cached_text(id); }

std::vector<double> Embedder::context_of(EntityId id) {
  const Entity& e = corpus_.at(id);
  const auto road = index_.nearest_road_segment(entity_anchor(corpus_, e), config_.context_radius_m);
  std::vector<const double*> members;
  if (road) {
    for (EntityId m : group_of_road_.at(*road)->member_ids) {
      if (m != id) members.push_back(cached_text(m).data());
    }
  }
  members.push_back(cached_text(kEmptyNodeId).data());
  return average_embeddings(members, model_.config().embed_dim);
}

std::vector<double> Embedder::road_context(EntityId road_id) {
  const auto it = group_of_road_.find(road_id);
  if (it == group_of_road_.end()) {
    throw Error("entity " + std::to_string(road_id) + " is not a road segment");
  }
  std::vector<const double*> members;
  for (EntityId m : it->second->member_ids) members.push_back(cached_text(m).data());
  members.push_back(cached_text(kEmptyNodeId).data());
  return average_embeddings(members, model_.config().embed_dim);
}

std::optional<std::vector<double>> Embedder::visual_of(EntityId id) {
  const auto it = visual_cache_.find(id);
  if (it != visual_cache_.end()) return it->second;
  const Entity& e = corpus_.at(id);
  if (!e.is_closed_way()) throw Error("entity " + std::to_string(id) + " is not a closed way");
  const auto ring = way_ring(corpus_, e);
  const double area = surface_area_m2(ring);
  if (area == 0.0) return std::nullopt;
  const auto s = vision_encode(model_, rasterize(ring, model_.config().grid_size));
  const auto a = area_encode(model_, area, model_.config().area_norm);
  auto v = fuse_visual(model_, s, a);
  return visual_cache_.emplace(id, std::move(v)).first->second;
}

std::vector<double> Embedder::location_code(GeoPoint p) const {
  return encode_location(p, config_.loc_d, config_.loc_lambda);
}

EmbeddingRecord Embedder::embed_entity(EntityId id) {
  const Entity& e = corpus_.at(id);
  EmbeddingRecord rec;
  rec.id = id;

  std::vector<double> text_block;
  std::vector<double> visual_block;
  if (e.kind == EntityKind::Node) {
    if (!e.has_tags()) throw Error("entity " + std::to_string(id) + ": untagged node has no embeddable modality");
    text_block = cached_text(id);
  } else if (e.kind == EntityKind::Way) {
    if (e.is_closed_way()) {
      if (e.has_tags()) text_block = cached_text(id);
      if (auto v = visual_of(id)) visual_block = std::move(*v);
      if (text_block.empty() && visual_block.empty()) {
        throw Error("entity " + std::to_string(id) + ": zero-area untagged way has no embeddable modality");
      }
    } else if (e.is_road()) {
      // roads always carry tags; untagged open ways fall through below
      text_block = e.has_tags() ? cached_text(id) : road_context(id);
    } else {
      throw Error("entity " + std::to_string(id) + ": untagged open way has no embeddable modality");
    }
  } else {
    throw Error("entity " + std::to_string(id) + ": relations are not embeddable");
  }

  rec.has_text = !text_block.empty();
  rec.has_visual = !visual_block.empty();
  const auto loc = location_code(entity_anchor(corpus_, e));
  rec.vec.reserve(text_block.size() + visual_block.size() + loc.size());
  rec.vec.insert(rec.vec.end(), text_block.begin(), text_block.end());
  rec.vec.insert(rec.vec.end(), visual_block.begin(), visual_block.end());
  rec.vec.insert(rec.vec.end(), loc.begin(), loc.end());
  return rec;
}

std::vector<double> Embedder::embed_region(const std::vector<GeoPoint>& region, bool* text_empty,
                                           bool* visual_empty) {
  if (surface_area_m2(region) == 0.0) throw Error("embed_region: degenerate region polygon");
  const int D = model_.config().embed_dim;

  std::vector<const double*> texts;
  std::vector<EntityId> visual_ids;
  for (const auto& [id, e] : corpus_.entities) {
    if (e.kind == EntityKind::Relation) continue;
    const GeoPoint anchor = entity_anchor(corpus_, e);
    if (!point_in_ring(anchor, region)) continue;
    if (e.has_tags()) texts.push_back(cached_text(id).data());
    if (e.is_closed_way()) visual_ids.push_back(id);
  }

  std::vector<double> out;
  out.reserve(2 * D + 2 * config_.loc_d);
  if (texts.empty()) {
    out.assign(D, 0.0);
  } else {
    out = average_embeddings(texts, D);
  }
  if (text_empty) *text_empty = texts.empty();

  std::vector<double> vis(D, 0.0);
  int n_vis = 0;
  for (EntityId id : visual_ids) {
    if (auto v = visual_of(id)) {
      for (int k = 0; k < D; ++k) vis[k] += (*v)[k];
      ++n_vis;
    }
  }
  if (n_vis > 0) {
    for (double& v : vis) v /= n_vis;
  }
  if (visual_empty) *visual_empty = n_vis == 0;
  out.insert(out.end(), vis.begin(), vis.end());

  const auto loc = location_code(centroid(region));
  out.insert(out.end(), loc.begin(), loc.end());
  return out;
}

// ---------------------------------------------------------------------------
// Exports

namespace {

ordered_json modalities_json(const EmbeddingRecord& rec) {
  ordered_json m = ordered_json::array();
  if (rec.has_text) m.push_back("text");
  if (rec.has_visual) m.push_back("visual");
  if (rec.has_location) m.push_back("location");
  return m;
}

template <typename Fn>
void for_each_embeddable(Embedder& embedder, const Corpus& corpus, Fn&& fn) {
  for (const auto& [id, e] : corpus.entities) {
    if (e.kind == EntityKind::Relation) continue;
    if (e.kind == EntityKind::Node && !e.has_tags()) continue;
    if (e.kind == EntityKind::Way && !e.is_closed_way() && !e.is_road()) continue;
    EmbeddingRecord rec;
    try {
      rec = embedder.embed_entity(id);
    } catch (const Error&) {
      continue;  // zero-area untagged way and similar non-embeddables
    }
    fn(rec);
  }
}

}  // namespace

std::string export_embeddings_jsonl(Embedder& embedder) {
  std::string out;
  for_each_embeddable(embedder, embedder.corpus(), [&](const EmbeddingRecord& rec) {
    ordered_json j;
    j["id"] = rec.id;
    j["modalities"] = modalities_json(rec);
    j["vector"] = rec.vec;
    out += j.dump();
    out += '\n';
  });
  return out;
}

void export_embeddings_binary(Embedder& embedder, std::string* payload, std::string* manifest) {
  std::string data;
  ordered_json rows = ordered_json::array();
  std::size_t offset = 0;
  for_each_embeddable(embedder, embedder.corpus(), [&](const EmbeddingRecord& rec) {
    ordered_json j;
    j["id"] = rec.id;
    j["modalities"] = modalities_json(rec);
    j["offset"] = offset;
    j["length"] = rec.vec.size();
    rows.push_back(std::move(j));
    data.append(reinterpret_cast<const char*>(rec.vec.data()), rec.vec.size() * 8);
    offset += rec.vec.size();
  });
  ordered_json m;
  m["dtype"] = "f64le";
  m["rows"] = std::move(rows);
  *payload = std::move(data);
  *manifest = m.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Cosine analysis

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw Error("cosine: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) throw Error("cosine: zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<CosineRow> cosine_table(const Model& model, const Vocabulary& vocab,
                                    const std::vector<Tag>& query,
                                    const std::vector<std::vector<Tag>>& candidates, int k) {
  const auto embed = [&](const std::vector<Tag>& tags) {
    return text_encode(model, tokenize(serialize_tags(tags), vocab));
  };
  const auto label = [](const std::vector<Tag>& tags) {
    std::vector<Tag> sorted(tags);
    std::sort(sorted.begin(), sorted.end());
    std::string out;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (i) out += ", ";
      out += sorted[i].key + ": " + sorted[i].value;
    }
    return out;
  };

  const auto q = embed(query);
  std::vector<CosineRow> rows;
  rows.push_back({label(query), cosine(q, q)});
  std::vector<CosineRow> ranked;
  ranked.reserve(candidates.size());
  for (const auto& cand : candidates) {
    ranked.push_back({label(cand), cosine(q, embed(cand))});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const CosineRow& a, const CosineRow& b) {
    if (a.cosine != b.cosine) return a.cosine > b.cosine;
    return a.label < b.label;
  });
  if (k > 0 && static_cast<int>(ranked.size()) > k) ranked.resize(k);
  rows.insert(rows.end(), ranked.begin(), ranked.end());
  return rows;
}

}  // namespace cityfm
