#include "cityfm/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "cityfm/util.hpp"
#include "json.hpp"

namespace cityfm {

using ordered_json = nlohmann::ordered_json;

std::string_view kind_name(EntityKind k) {
  switch (k) {
    case EntityKind::Node: return "node";
    case EntityKind::Way: return "way";
    case EntityKind::Relation: return "relation";
  }
  return "?";
}

const std::string* Entity::tag_value(std::string_view key) const {
  for (const Tag& t : tags) {
    if (t.key == key) return &t.value;
  }
  return nullptr;
}

const Entity* Corpus::find(EntityId id) const {
  auto it = entities.find(id);
  return it == entities.end() ? nullptr : &it->second;
}

const Entity& Corpus::at(EntityId id) const {
  const Entity* e = find(id);
  if (!e) throw Error("unknown entity id " + std::to_string(id));
  return *e;
}

const Entity& empty_node() {
  static const Entity node = [] {
    Entity e;
    e.id = kEmptyNodeId;
    e.kind = EntityKind::Node;
    e.tags = {{"context", "none"}};
    return e;
  }();
  return node;
}

void canonicalize_tags(std::vector<Tag>& tags) {
  for (Tag& t : tags) {
    t.key = to_lower(t.key);
    t.value = to_lower(t.value);
  }
  std::erase_if(tags, [](const Tag& t) {
    return t.key.empty() || t.value.empty() ||
           t.key.find('\n') != std::string::npos;
  });
  std::sort(tags.begin(), tags.end());
  tags.erase(std::unique(tags.begin(), tags.end(),
                         [](const Tag& a, const Tag& b) { return a.key == b.key; }),
             tags.end());
}

// ---------------------------------------------------------------------------
// Shared post-parse resolution

namespace detail {

Corpus finalize_corpus(std::vector<Entity> raw) {
  Corpus corpus;
  for (Entity& e : raw) {
    canonicalize_tags(e.tags);
    const EntityId id = e.id;
    if (!corpus.entities.emplace(id, std::move(e)).second) {
      throw Error("duplicate entity id " + std::to_string(id));
    }
  }

  // Ways must reference existing nodes; otherwise the whole way is dropped.
  std::vector<EntityId> dropped_ways;
  for (const auto& [id, e] : corpus.entities) {
    if (e.kind != EntityKind::Way) continue;
    bool ok = e.node_refs.size() >= 2;
    for (EntityId ref : e.node_refs) {
      const Entity* target = corpus.find(ref);
      if (!target || target->kind != EntityKind::Node) {
        ok = false;
        break;
      }
    }
    if (!ok) dropped_ways.push_back(id);
  }
  for (EntityId id : dropped_ways) corpus.entities.erase(id);
  corpus.manifest.dropped_way_count = static_cast<std::int64_t>(dropped_ways.size());

  // Relation members that do not resolve are dropped individually.
  std::int64_t dropped_members = 0;
  for (auto& [id, e] : corpus.entities) {
    if (e.kind != EntityKind::Relation) continue;
    const auto before = e.members.size();
    const Corpus& c = corpus;
    std::erase_if(e.members, [&](const Member& m) { return c.find(m.id) == nullptr; });
    dropped_members += static_cast<std::int64_t>(before - e.members.size());
  }
  corpus.manifest.dropped_member_count = dropped_members;

  for (const auto& [id, e] : corpus.entities) {
    switch (e.kind) {
      case EntityKind::Node: ++corpus.manifest.node_count; break;
      case EntityKind::Way:
        ++corpus.manifest.way_count;
        if (e.is_closed_way()) ++corpus.manifest.closed_way_count;
        break;
      case EntityKind::Relation: ++corpus.manifest.relation_count; break;
    }
  }
  return corpus;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// JSON lines

namespace {

Entity entity_from_json(const ordered_json& j, std::size_t line_no) {
  Entity e;
  if (!j.is_object()) throw ParseError("line " + std::to_string(line_no) + ": expected JSON object", line_no);
  if (!j.contains("id") || !j["id"].is_number_integer()) {
    throw ParseError("line " + std::to_string(line_no) + ": missing integer 'id'", line_no);
  }
  e.id = j["id"].get<EntityId>();
  const std::string kind = j.value("kind", "");
  if (kind == "node") {
    e.kind = EntityKind::Node;
    if (!j.contains("lat") || !j.contains("lon") || !j["lat"].is_number() || !j["lon"].is_number()) {
      throw ParseError("line " + std::to_string(line_no) + ": node requires numeric lat/lon", line_no);
    }
    e.position = {j["lat"].get<double>(), j["lon"].get<double>()};
    if (!geo_point_valid(e.position)) {
      throw ParseError("line " + std::to_string(line_no) + ": position out of range", line_no);
    }
  } else if (kind == "way") {
    e.kind = EntityKind::Way;
    if (!j.contains("node_refs") || !j["node_refs"].is_array()) {
      throw ParseError("line " + std::to_string(line_no) + ": way requires node_refs array", line_no);
    }
    for (const auto& r : j["node_refs"]) {
      if (!r.is_number_integer()) {
        throw ParseError("line " + std::to_string(line_no) + ": node_refs must be integers", line_no);
      }
      e.node_refs.push_back(r.get<EntityId>());
    }
  } else if (kind == "relation") {
    e.kind = EntityKind::Relation;
    if (j.contains("members")) {
      if (!j["members"].is_array()) {
        throw ParseError("line " + std::to_string(line_no) + ": members must be an array", line_no);
      }
      for (const auto& m : j["members"]) {
        Member mem;
        if (m.is_object() && m.contains("id") && m["id"].is_number_integer()) {
          mem.id = m["id"].get<EntityId>();
          mem.role = m.value("role", "");
        } else if (m.is_array() && m.size() >= 1 && m[0].is_number_integer()) {
          mem.id = m[0].get<EntityId>();
          if (m.size() >= 2 && m[1].is_string()) mem.role = m[1].get<std::string>();
        } else {
          throw ParseError("line " + std::to_string(line_no) + ": bad relation member", line_no);
        }
        e.members.push_back(std::move(mem));
      }
    }
  } else {
    throw ParseError("line " + std::to_string(line_no) + ": unknown kind \"" + kind + "\"", line_no);
  }
  if (j.contains("tags")) {
    if (!j["tags"].is_object()) {
      throw ParseError("line " + std::to_string(line_no) + ": tags must be an object", line_no);
    }
    for (const auto& [k, v] : j["tags"].items()) {
      if (!v.is_string()) {
        throw ParseError("line " + std::to_string(line_no) + ": tag values must be strings", line_no);
      }
      e.tags.push_back({k, v.get<std::string>()});
    }
  }
  return e;
}

}  // namespace

Corpus parse_jsonl(std::string_view bytes) {
  std::vector<Entity> raw;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= bytes.size()) {
    const std::size_t nl = bytes.find('\n', pos);
    std::string_view line = bytes.substr(pos, nl == std::string_view::npos ? bytes.size() - pos : nl - pos);
    ++line_no;
    pos = nl == std::string_view::npos ? bytes.size() + 1 : nl + 1;
    // trim whitespace-only lines
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& ex) {
      throw ParseError("line " + std::to_string(line_no) + ": " + ex.what(), line_no);
    }
    raw.push_back(entity_from_json(j, line_no));
  }
  return detail::finalize_corpus(std::move(raw));
}

std::string write_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& [id, e] : corpus.entities) {
    ordered_json j;
    j["id"] = e.id;
    j["kind"] = std::string(kind_name(e.kind));
    switch (e.kind) {
      case EntityKind::Node:
        j["lat"] = e.position.lat;
        j["lon"] = e.position.lon;
        break;
      case EntityKind::Way:
        j["node_refs"] = e.node_refs;
        break;
      case EntityKind::Relation: {
        ordered_json members = ordered_json::array();
        for (const Member& m : e.members) {
          ordered_json mj;
          mj["id"] = m.id;
          mj["role"] = m.role;
          members.push_back(std::move(mj));
        }
        j["members"] = std::move(members);
        break;
      }
    }
    ordered_json tags = ordered_json::object();
    for (const Tag& t : e.tags) tags[t.key] = t.value;
    j["tags"] = std::move(tags);
    out += j.dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// OSM XML writer (parser lives in osm_xml.cpp)

namespace {

std::string xml_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\n': out += "&#10;"; break;
      case '\r': out += "&#13;"; break;
      case '\t': out += "&#9;"; break;
      default: out += c; break;
    }
  }
  return out;
}

void write_tags_xml(std::string& out, const Entity& e, const char* indent) {
  for (const Tag& t : e.tags) {
    out += indent;
    out += "<tag k=\"" + xml_escape(t.key) + "\" v=\"" + xml_escape(t.value) + "\"/>\n";
  }
}

}  // namespace

std::string write_osm_xml(const Corpus& corpus) {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\" generator=\"cityfm\">\n";
  for (const auto& [id, e] : corpus.entities) {
    const std::string ids = std::to_string(e.id);
    switch (e.kind) {
      case EntityKind::Node:
        out += "  <node id=\"" + ids + "\" lat=\"" + fmt_double(e.position.lat) +
               "\" lon=\"" + fmt_double(e.position.lon) + "\"";
        if (e.tags.empty()) {
          out += "/>\n";
        } else {
          out += ">\n";
          write_tags_xml(out, e, "    ");
          out += "  </node>\n";
        }
        break;
      case EntityKind::Way:
        out += "  <way id=\"" + ids + "\">\n";
        for (EntityId ref : e.node_refs) {
          out += "    <nd ref=\"" + std::to_string(ref) + "\"/>\n";
        }
        write_tags_xml(out, e, "    ");
        out += "  </way>\n";
        break;
      case EntityKind::Relation:
        out += "  <relation id=\"" + ids + "\">\n";
        for (const Member& m : e.members) {
          const Entity* target = corpus.find(m.id);
          if (!target) throw Error("relation " + ids + " member " + std::to_string(m.id) + " unresolved");
          out += "    <member type=\"" + std::string(kind_name(target->kind)) + "\" ref=\"" +
                 std::to_string(m.id) + "\" role=\"" + xml_escape(m.role) + "\"/>\n";
        }
        write_tags_xml(out, e, "    ");
        out += "  </relation>\n";
        break;
    }
  }
  out += "</osm>\n";
  return out;
}

// ---------------------------------------------------------------------------
// Manifest JSON

std::string manifest_to_json(const CorpusManifest& m) {
  ordered_json j;
  j["node_count"] = m.node_count;
  j["way_count"] = m.way_count;
  j["relation_count"] = m.relation_count;
  j["closed_way_count"] = m.closed_way_count;
  if (m.max_area_m2) j["max_area_m2"] = *m.max_area_m2;
  if (m.has_bbox) {
    j["bbox"] = {{"min_lat", m.bbox_min.lat},
                 {"min_lon", m.bbox_min.lon},
                 {"max_lat", m.bbox_max.lat},
                 {"max_lon", m.bbox_max.lon}};
  }
  j["pii_removed_count"] = m.pii_removed_count;
  j["dropped_way_count"] = m.dropped_way_count;
  j["dropped_member_count"] = m.dropped_member_count;
  return j.dump(2) + "\n";
}

CorpusManifest manifest_from_json(std::string_view text) {
  CorpusManifest m;
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& ex) {
    throw Error(std::string("manifest parse error: ") + ex.what());
  }
  m.node_count = j.value("node_count", std::int64_t{0});
  m.way_count = j.value("way_count", std::int64_t{0});
  m.relation_count = j.value("relation_count", std::int64_t{0});
  m.closed_way_count = j.value("closed_way_count", std::int64_t{0});
  if (j.contains("max_area_m2")) m.max_area_m2 = j["max_area_m2"].get<double>();
  if (j.contains("bbox")) {
    m.has_bbox = true;
    m.bbox_min = {j["bbox"]["min_lat"].get<double>(), j["bbox"]["min_lon"].get<double>()};
    m.bbox_max = {j["bbox"]["max_lat"].get<double>(), j["bbox"]["max_lon"].get<double>()};
  }
  m.pii_removed_count = j.value("pii_removed_count", std::int64_t{0});
  m.dropped_way_count = j.value("dropped_way_count", std::int64_t{0});
  m.dropped_member_count = j.value("dropped_member_count", std::int64_t{0});
  return m;
}

// ---------------------------------------------------------------------------
// PII

bool pii_key(std::string_view key) {
  if (key == "phone" || key == "website" || key == "url" || key == "email" ||
      key == "operator:phone") {
    return true;
  }
  return key.starts_with("contact:") || key.starts_with("addr:");
}

namespace {

bool looks_like_url(std::string_view value) {
  const std::string v = to_lower(value);
  return v.find("http://") != std::string::npos ||
         v.find("https://") != std::string::npos ||
         v.find("www.") != std::string::npos;
}

bool looks_like_phone(std::string_view value) {
  int digits = 0;
  bool first = true;
  for (char c : value) {
    if (c >= '0' && c <= '9') {
      ++digits;
    } else if (c == '+') {
      if (!first) return false;
    } else if (c != ' ' && c != '-' && c != '(' && c != ')' && c != '.' && c != '/') {
      return false;
    }
    first = false;
  }
  return digits >= 7;
}

}  // namespace

bool pii_value(std::string_view value) {
  return looks_like_url(value) || looks_like_phone(value);
}

bool tag_is_pii(const Tag& tag) { return pii_key(tag.key) || pii_value(tag.value); }

Corpus scrub_pii(Corpus corpus) {
  std::int64_t removed = 0;
  for (auto& [id, e] : corpus.entities) {
    const auto before = e.tags.size();
    std::erase_if(e.tags, tag_is_pii);
    removed += static_cast<std::int64_t>(before - e.tags.size());
  }
  corpus.manifest.pii_removed_count += removed;
  return corpus;
}

// ---------------------------------------------------------------------------
// Tag serialization

std::string serialize_tags(const std::vector<Tag>& tags) {
  if (tags.empty()) throw Error("serialize_tags: empty tag set");
  std::vector<Tag> sorted(tags);
  for (Tag& t : sorted) {
    t.key = to_lower(t.key);
    t.value = to_lower(t.value);
  }
  std::sort(sorted.begin(), sorted.end());
  std::string out = "[CLS] ";
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i) out += ", ";
    out += sorted[i].key + ": " + sorted[i].value;
  }
  out += " [SEP]";
  return out;
}

std::string serialize_tags(const Entity& entity) { return serialize_tags(entity.tags); }

// ---------------------------------------------------------------------------
// Statistics

std::vector<GeoPoint> way_ring(const Corpus& corpus, const Entity& way) {
  std::vector<GeoPoint> ring;
  ring.reserve(way.node_refs.size());
  for (EntityId ref : way.node_refs) ring.push_back(corpus.at(ref).position);
  return ring;
}

CorpusManifest corpus_stats(const Corpus& corpus, const AreaFn& area_fn) {
  CorpusManifest m;
  m.pii_removed_count = corpus.manifest.pii_removed_count;
  m.dropped_way_count = corpus.manifest.dropped_way_count;
  m.dropped_member_count = corpus.manifest.dropped_member_count;
  double max_area = 0.0;
  bool any_polygon = false;
  for (const auto& [id, e] : corpus.entities) {
    switch (e.kind) {
      case EntityKind::Node: {
        ++m.node_count;
        if (!m.has_bbox) {
          m.bbox_min = m.bbox_max = e.position;
          m.has_bbox = true;
        } else {
          m.bbox_min.lat = std::min(m.bbox_min.lat, e.position.lat);
          m.bbox_min.lon = std::min(m.bbox_min.lon, e.position.lon);
          m.bbox_max.lat = std::max(m.bbox_max.lat, e.position.lat);
          m.bbox_max.lon = std::max(m.bbox_max.lon, e.position.lon);
        }
        break;
      }
      case EntityKind::Way: {
        ++m.way_count;
        if (e.is_closed_way()) {
          ++m.closed_way_count;
          const double a = area_fn(way_ring(corpus, e));
          if (!any_polygon || a > max_area) max_area = a;
          any_polygon = true;
        }
        break;
      }
      case EntityKind::Relation: ++m.relation_count; break;
    }
  }
  if (any_polygon) m.max_area_m2 = max_area;
  return m;
}

GeoPoint entity_anchor(const Corpus& corpus, const Entity& entity) {
  switch (entity.kind) {
    case EntityKind::Node:
      return entity.position;
    case EntityKind::Way: {
      std::set<std::pair<double, double>> seen;
      double lat = 0, lon = 0;
      int n = 0;
      for (EntityId ref : entity.node_refs) {
        const GeoPoint p = corpus.at(ref).position;
        if (!seen.insert({p.lat, p.lon}).second) continue;
        lat += p.lat;
        lon += p.lon;
        ++n;
      }
      if (n == 0) throw Error("way " + std::to_string(entity.id) + " has no positions");
      return {lat / n, lon / n};
    }
    case EntityKind::Relation: {
      double lat = 0, lon = 0;
      int n = 0;
      for (const Member& mem : entity.members) {
        const Entity& target = corpus.at(mem.id);
        if (target.kind == EntityKind::Relation) continue;  // avoid cycles
        const GeoPoint p = entity_anchor(corpus, target);
        lat += p.lat;
        lon += p.lon;
        ++n;
      }
      if (n == 0) throw Error("relation " + std::to_string(entity.id) + " has no locatable members");
      return {lat / n, lon / n};
    }
  }
  throw Error("unreachable entity kind");
}

}  // namespace cityfm
