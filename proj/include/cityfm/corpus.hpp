#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cityfm/geo.hpp"

namespace cityfm {

using EntityId = std::int64_t;

enum class EntityKind { Node, Way, Relation };

std::string_view kind_name(EntityKind k);

// Key-value annotation. Keys are unique within an entity's tag set; the set
// is kept sorted by key.
struct Tag {
  std::string key;
  std::string value;

  auto operator<=>(const Tag&) const = default;
};

struct Member {
  EntityId id = 0;
  std::string role;

  bool operator==(const Member&) const = default;
};

struct Entity {
  EntityId id = 0;
  EntityKind kind = EntityKind::Node;
  GeoPoint position;                  // Node only
  std::vector<EntityId> node_refs;    // Way only, >= 2 entries
  std::vector<Member> members;        // Relation only
  std::vector<Tag> tags;              // sorted by key

  bool operator==(const Entity&) const = default;

  bool has_tags() const { return !tags.empty(); }
  const std::string* tag_value(std::string_view key) const;
  bool is_closed_way() const {
    return kind == EntityKind::Way && node_refs.size() >= 4 &&
           node_refs.front() == node_refs.back();
  }
  // Open polyline carrying a highway tag.
  bool is_road() const {
    return kind == EntityKind::Way && !is_closed_way() &&
           tag_value("highway") != nullptr;
  }
};

struct CorpusManifest {
  std::int64_t node_count = 0;
  std::int64_t way_count = 0;
  std::int64_t relation_count = 0;
  std::int64_t closed_way_count = 0;
  std::optional<double> max_area_m2;
  bool has_bbox = false;
  GeoPoint bbox_min;
  GeoPoint bbox_max;
  std::int64_t pii_removed_count = 0;
  std::int64_t dropped_way_count = 0;     // ways with unresolved/short refs
  std::int64_t dropped_member_count = 0;  // relation members with unresolved ids

  bool operator==(const CorpusManifest&) const = default;
};

struct Corpus {
  std::map<EntityId, Entity> entities;
  CorpusManifest manifest;

  bool operator==(const Corpus&) const = default;

  const Entity* find(EntityId id) const;
  const Entity& at(EntityId id) const;  // throws Error on unknown id
};

// Synthetic entity appended to every context group; single tag context=none.
inline constexpr EntityId kEmptyNodeId = -1;
const Entity& empty_node();

// Normalizes tags in place: lowercases, sorts by key, drops duplicate keys
// (first occurrence wins) and rejects keys containing newlines or empty
// keys/values.
void canonicalize_tags(std::vector<Tag>& tags);

// ---------------------------------------------------------------------------
// Parsing and writing

// OSM XML subset: node/way/relation elements with tag/nd/member children.
// Unresolved way refs drop the way; unresolved relation members are dropped
// individually; both are counted in the manifest. Throws ParseError (with
// byte offset) on malformed XML and Error on duplicate ids.
Corpus parse_osm_xml(std::string_view bytes);

// One JSON object per line: {id, kind, lat/lon | node_refs | members, tags}.
// Same corpus semantics as parse_osm_xml. Throws ParseError with the
// 1-based line number on malformed lines or unknown kinds.
Corpus parse_jsonl(std::string_view bytes);

// Canonical JSON-lines form: one entity per line, ascending id, fixed field
// order, shortest round-trip numbers. parse_jsonl(write_jsonl(c)) == c.
std::string write_jsonl(const Corpus& corpus);

// OSM XML writer mirroring the subset the parser accepts.
std::string write_osm_xml(const Corpus& corpus);

std::string manifest_to_json(const CorpusManifest& m);
CorpusManifest manifest_from_json(std::string_view text);

// ---------------------------------------------------------------------------
// PII scrubbing

// True when the key alone marks a tag as personal information
// (phone, website, url, email, operator:phone, contact:*, addr:*).
bool pii_key(std::string_view key);
// True when the value matches a phone-number or URL pattern.
bool pii_value(std::string_view value);
bool tag_is_pii(const Tag& tag);

// Removes PII tags from every entity and adds the removal count to the
// manifest. Idempotent.
Corpus scrub_pii(Corpus corpus);

// ---------------------------------------------------------------------------
// Tag serialization

// "[CLS] k1: v1, k2: v2 [SEP]" with tags sorted by key and lowercased.
// Throws Error on an empty tag set.
std::string serialize_tags(const std::vector<Tag>& tags);
std::string serialize_tags(const Entity& entity);

// ---------------------------------------------------------------------------
// Statistics

// Recomputes manifest counts, bounding box and max polygon area. The area of
// a closed ring is delegated to the supplied function (square meters).
using AreaFn = std::function<double(const std::vector<GeoPoint>&)>;
CorpusManifest corpus_stats(const Corpus& corpus, const AreaFn& area_fn);

// Ring of node positions for a closed way, first == last.
std::vector<GeoPoint> way_ring(const Corpus& corpus, const Entity& way);

// Mean of distinct positions: node position, way ring centroid, or for a
// relation the mean over resolvable members. Throws if nothing resolvable.
GeoPoint entity_anchor(const Corpus& corpus, const Entity& entity);

namespace detail {

// Shared by both parsers: canonicalizes tags, checks duplicate ids, drops
// unresolvable ways and relation members, fills manifest counts.
Corpus finalize_corpus(std::vector<Entity> raw);

}  // namespace detail

}  // namespace cityfm
