// Hand-rolled parser for the small subset of OSM XML we ingest: a root
// element containing node/way/relation children with tag/nd/member leaves.
// Errors carry the byte offset of the offending construct.

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cityfm/corpus.hpp"
#include "cityfm/util.hpp"

namespace cityfm {

namespace {

struct XmlAttr {
  std::string name;
  std::string value;
  std::size_t offset = 0;  // byte offset of the attribute name
};

bool is_name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == ':' || c == '_' || c == '-' || c == '.';
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

class XmlParser {
 public:
  explicit XmlParser(std::string_view src) : src_(src) {}

  std::vector<Entity> run() {
    if (src_.substr(0, 3) == "\xEF\xBB\xBF") pos_ = 3;
    while (pos_ < src_.size()) {
      if (src_[pos_] != '<') {
        ++pos_;  // text content is ignored
        continue;
      }
      if (match("<?")) {
        skip_until("?>", "unterminated processing instruction");
      } else if (match("<!--")) {
        skip_until("-->", "unterminated comment");
      } else if (match("<![CDATA[")) {
        skip_until("]]>", "unterminated CDATA section");
      } else if (match("<!")) {
        skip_until(">", "unterminated declaration");
      } else if (peek(1) == '/') {
        close_tag();
      } else {
        open_tag();
      }
    }
    if (!stack_.empty()) {
      fail("unexpected end of input, <" + stack_.back() + "> not closed", src_.size());
    }
    return std::move(entities_);
  }

 private:
  [[noreturn]] void fail(const std::string& msg, std::size_t at) const {
    throw ParseError(msg + " at byte " + std::to_string(at), at);
  }

  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  bool match(std::string_view prefix) {
    if (src_.substr(pos_, prefix.size()) != prefix) return false;
    pos_ += prefix.size();
    return true;
  }

  void skip_until(std::string_view terminator, const char* err) {
    const std::size_t at = src_.find(terminator, pos_);
    if (at == std::string_view::npos) fail(err, pos_);
    pos_ = at + terminator.size();
  }

  void skip_space() {
    while (pos_ < src_.size() && is_space(src_[pos_])) ++pos_;
  }

  std::string read_name() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && is_name_char(src_[pos_])) ++pos_;
    if (pos_ == start) fail("expected a name", start);
    return std::string(src_.substr(start, pos_ - start));
  }

  std::string read_attr_value() {
    const char quote = peek();
    if (quote != '"' && quote != '\'') fail("expected quoted attribute value", pos_);
    ++pos_;
    std::string out;
    while (true) {
      if (pos_ >= src_.size()) fail("unterminated attribute value", pos_);
      const char c = src_[pos_];
      if (c == quote) {
        ++pos_;
        return out;
      }
      if (c == '<') fail("'<' inside attribute value", pos_);
      if (c != '&') {
        out += c;
        ++pos_;
        continue;
      }
      const std::size_t amp = pos_;
      const std::size_t semi = src_.find(';', amp);
      if (semi == std::string_view::npos || semi - amp > 12) {
        fail("unterminated entity reference", amp);
      }
      const std::string_view ref = src_.substr(amp + 1, semi - amp - 1);
      if (ref == "amp") {
        out += '&';
      } else if (ref == "lt") {
        out += '<';
      } else if (ref == "gt") {
        out += '>';
      } else if (ref == "quot") {
        out += '"';
      } else if (ref == "apos") {
        out += '\'';
      } else if (!ref.empty() && ref[0] == '#') {
        std::uint32_t cp = 0;
        const bool hex = ref.size() > 1 && (ref[1] == 'x' || ref[1] == 'X');
        const std::string_view digits = ref.substr(hex ? 2 : 1);
        const auto [p, ec] =
            std::from_chars(digits.data(), digits.data() + digits.size(), cp, hex ? 16 : 10);
        if (ec != std::errc() || p != digits.data() + digits.size() || digits.empty()) {
          fail("bad character reference", amp);
        }
        append_utf8(out, cp);
      } else {
        fail("unknown entity reference &" + std::string(ref) + ";", amp);
      }
      pos_ = semi + 1;
    }
  }

  void close_tag() {
    const std::size_t at = pos_;
    pos_ += 2;  // "</"
    const std::string name = read_name();
    skip_space();
    if (peek() != '>') fail("malformed closing tag", pos_);
    ++pos_;
    if (stack_.empty() || stack_.back() != name) {
      fail("mismatched closing tag </" + name + ">", at);
    }
    stack_.pop_back();
    if (stack_.size() == 1 && current_open_) {
      entities_.push_back(std::move(current_));
      current_open_ = false;
    }
  }

  void open_tag() {
    const std::size_t at = pos_;
    ++pos_;  // '<'
    const std::string name = read_name();
    std::vector<XmlAttr> attrs;
    bool self_closing = false;
    while (true) {
      skip_space();
      const char c = peek();
      if (c == '\0') fail("unterminated tag <" + name + ">", at);
      if (c == '>') {
        ++pos_;
        break;
      }
      if (c == '/') {
        if (peek(1) != '>') fail("malformed tag <" + name + ">", pos_);
        pos_ += 2;
        self_closing = true;
        break;
      }
      XmlAttr a;
      a.offset = pos_;
      a.name = read_name();
      skip_space();
      if (peek() != '=') fail("expected '=' after attribute " + a.name, pos_);
      ++pos_;
      skip_space();
      a.value = read_attr_value();
      attrs.push_back(std::move(a));
    }
    handle_element(name, attrs, at);
    if (!self_closing) {
      stack_.push_back(name);
    } else if (stack_.size() == 1 && current_open_) {
      entities_.push_back(std::move(current_));
      current_open_ = false;
    }
  }

  const XmlAttr* find_attr(const std::vector<XmlAttr>& attrs, std::string_view name) const {
    for (const XmlAttr& a : attrs) {
      if (a.name == name) return &a;
    }
    return nullptr;
  }

  const XmlAttr& require_attr(const std::vector<XmlAttr>& attrs, std::string_view name,
                              std::string_view element, std::size_t at) const {
    const XmlAttr* a = find_attr(attrs, name);
    if (!a) {
      fail("<" + std::string(element) + "> missing attribute " + std::string(name), at);
    }
    return *a;
  }

  EntityId parse_id(const XmlAttr& a) const {
    EntityId v = 0;
    const auto [p, ec] = std::from_chars(a.value.data(), a.value.data() + a.value.size(), v);
    if (ec != std::errc() || p != a.value.data() + a.value.size()) {
      fail("bad integer in attribute " + a.name, a.offset);
    }
    return v;
  }

  double parse_num(const XmlAttr& a) const {
    double v = 0;
    const auto [p, ec] = std::from_chars(a.value.data(), a.value.data() + a.value.size(), v);
    if (ec != std::errc() || p != a.value.data() + a.value.size()) {
      fail("bad number in attribute " + a.name, a.offset);
    }
    return v;
  }

  void handle_element(const std::string& name, const std::vector<XmlAttr>& attrs, std::size_t at) {
    const std::size_t depth = stack_.size();
    if (depth == 1 && (name == "node" || name == "way" || name == "relation")) {
      current_ = Entity{};
      current_open_ = true;
      current_.id = parse_id(require_attr(attrs, "id", name, at));
      if (name == "node") {
        current_.kind = EntityKind::Node;
        current_.position = {parse_num(require_attr(attrs, "lat", name, at)),
                             parse_num(require_attr(attrs, "lon", name, at))};
        if (!geo_point_valid(current_.position)) fail("position out of range", at);
      } else {
        current_.kind = name == "way" ? EntityKind::Way : EntityKind::Relation;
      }
      return;
    }
    if (depth == 2 && current_open_) {
      if (name == "tag") {
        const XmlAttr& k = require_attr(attrs, "k", name, at);
        const XmlAttr& v = require_attr(attrs, "v", name, at);
        current_.tags.push_back({k.value, v.value});
      } else if (name == "nd" && current_.kind == EntityKind::Way) {
        current_.node_refs.push_back(parse_id(require_attr(attrs, "ref", name, at)));
      } else if (name == "member" && current_.kind == EntityKind::Relation) {
        Member m;
        m.id = parse_id(require_attr(attrs, "ref", name, at));
        if (const XmlAttr* role = find_attr(attrs, "role")) m.role = role->value;
        current_.members.push_back(std::move(m));
      }
      // anything else nested in an entity is ignored
    }
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::vector<std::string> stack_;
  std::vector<Entity> entities_;
  Entity current_;
  bool current_open_ = false;
};

}  // namespace

Corpus parse_osm_xml(std::string_view bytes) {
  return detail::finalize_corpus(XmlParser(bytes).run());
}

}  // namespace cityfm
