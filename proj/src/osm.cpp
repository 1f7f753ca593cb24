#include "osm.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <unordered_set>

#include "json.hpp"

namespace gridplan {

OsmParseError::OsmParseError(const std::string& msg, size_t byte_offset)
    : std::runtime_error(msg + " at byte " + std::to_string(byte_offset)),
      byte_offset_(byte_offset) {}

OsmStructureError::OsmStructureError(const std::string& msg, int64_t way_id)
    : std::runtime_error(msg + " (way " + std::to_string(way_id) + ")"),
      way_id_(way_id) {}

namespace {

struct Attr {
  std::string name;
  std::string value;
};

struct Cursor {
  std::string_view s;
  size_t pos = 0;

  bool eof() const { return pos >= s.size(); }
  char peek() const { return s[pos]; }

  void skip_ws() {
    while (!eof() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }
};

std::string decode_entities(std::string_view v, size_t offset) {
  std::string out;
  out.reserve(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    if (v[i] != '&') {
      out.push_back(v[i]);
      continue;
    }
    size_t semi = v.find(';', i);
    if (semi == std::string_view::npos)
      throw OsmParseError("unterminated entity", offset + i);
    std::string_view ent = v.substr(i + 1, semi - i - 1);
    if (ent == "amp") out.push_back('&');
    else if (ent == "lt") out.push_back('<');
    else if (ent == "gt") out.push_back('>');
    else if (ent == "quot") out.push_back('"');
    else if (ent == "apos") out.push_back('\'');
    else if (!ent.empty() && ent[0] == '#') {
      long code = std::strtol(std::string(ent.substr(1)).c_str(), nullptr,
                              ent.size() > 1 && ent[1] == 'x' ? 16 : 10);
      out.push_back(static_cast<char>(code));
    } else {
      throw OsmParseError("unknown entity '" + std::string(ent) + "'",
                          offset + i);
    }
    i = semi;
  }
  return out;
}

std::string encode_entities(std::string_view v) {
  std::string out;
  for (char c : v) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

std::string read_name(Cursor& c) {
  size_t start = c.pos;
  while (!c.eof()) {
    char ch = c.peek();
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' ||
        ch == ':' || ch == '-' || ch == '.')
      ++c.pos;
    else
      break;
  }
  if (c.pos == start) throw OsmParseError("expected name", start);
  return std::string(c.s.substr(start, c.pos - start));
}

std::vector<Attr> read_attrs(Cursor& c) {
  std::vector<Attr> attrs;
  for (;;) {
    c.skip_ws();
    if (c.eof()) throw OsmParseError("unexpected end inside tag", c.pos);
    char ch = c.peek();
    if (ch == '>' || ch == '/' || ch == '?') return attrs;
    Attr a;
    a.name = read_name(c);
    c.skip_ws();
    if (c.eof() || c.peek() != '=')
      throw OsmParseError("expected '=' after attribute name", c.pos);
    ++c.pos;
    c.skip_ws();
    if (c.eof() || (c.peek() != '"' && c.peek() != '\''))
      throw OsmParseError("expected quoted attribute value", c.pos);
    char quote = c.peek();
    ++c.pos;
    size_t vstart = c.pos;
    size_t vend = c.s.find(quote, vstart);
    if (vend == std::string_view::npos)
      throw OsmParseError("unterminated attribute value", vstart);
    a.value = decode_entities(c.s.substr(vstart, vend - vstart), vstart);
    c.pos = vend + 1;
    attrs.push_back(std::move(a));
  }
}

const std::string* find_attr(const std::vector<Attr>& attrs,
                             std::string_view name) {
  for (const auto& a : attrs)
    if (a.name == name) return &a.value;
  return nullptr;
}

int64_t parse_i64(const std::string& v, size_t offset) {
  char* end = nullptr;
  long long r = std::strtoll(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0')
    throw OsmParseError("bad integer '" + v + "'", offset);
  return r;
}

double parse_f64(const std::string& v, size_t offset) {
  char* end = nullptr;
  double r = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw OsmParseError("bad number '" + v + "'", offset);
  return r;
}

PointElement classify_node(const std::map<std::string, std::string>& tags) {
  auto it = tags.find("highway");
  if (it != tags.end()) {
    if (it->second == "stop") return PointElement::StopSign;
    if (it->second == "traffic_signals") return PointElement::TrafficSignal;
    if (it->second == "crossing") return PointElement::Crossing;
  }
  if (tags.count("crossing")) return PointElement::Crossing;
  return PointElement::None;
}

}  // namespace

OsmDocument parse_osm(std::string_view xml) {
  OsmDocument doc;
  Cursor c{xml};

  // In-flight element state; OSM documents are flat (osm > node/way > tag/nd).
  bool in_node = false, in_way = false;
  OsmNode cur_node;
  OsmWay cur_way;
  std::map<std::string, std::string> cur_tags;
  std::vector<std::string> stack;

  auto finish_node = [&] {
    cur_node.element = classify_node(cur_tags);
    doc.nodes.push_back(cur_node);
    cur_tags.clear();
    in_node = false;
  };
  auto finish_way = [&] {
    auto it = cur_tags.find("highway");
    if (it != cur_tags.end()) {
      cur_way.road_class = it->second;
      auto ow = cur_tags.find("oneway");
      cur_way.oneway = ow != cur_tags.end() &&
                       (ow->second == "yes" || ow->second == "true" ||
                        ow->second == "1");
      doc.ways.push_back(cur_way);
    }
    cur_tags.clear();
    in_way = false;
  };

  while (!c.eof()) {
    size_t lt = c.s.find('<', c.pos);
    if (lt == std::string_view::npos) break;
    c.pos = lt + 1;
    if (c.eof()) throw OsmParseError("dangling '<'", lt);

    if (c.s.compare(c.pos, 3, "!--") == 0) {
      size_t end = c.s.find("-->", c.pos + 3);
      if (end == std::string_view::npos)
        throw OsmParseError("unterminated comment", lt);
      c.pos = end + 3;
      continue;
    }
    if (c.peek() == '!' || c.peek() == '?') {  // doctype / declaration
      size_t end = c.s.find('>', c.pos);
      if (end == std::string_view::npos)
        throw OsmParseError("unterminated declaration", lt);
      c.pos = end + 1;
      continue;
    }
    if (c.peek() == '/') {  // closing tag
      ++c.pos;
      std::string name = read_name(c);
      c.skip_ws();
      if (c.eof() || c.peek() != '>')
        throw OsmParseError("expected '>'", c.pos);
      ++c.pos;
      if (stack.empty() || stack.back() != name)
        throw OsmParseError("mismatched closing tag </" + name + ">", lt);
      stack.pop_back();
      if (name == "node" && in_node) finish_node();
      if (name == "way" && in_way) finish_way();
      continue;
    }

    std::string name = read_name(c);
    std::vector<Attr> attrs = read_attrs(c);
    c.skip_ws();
    bool self_closing = false;
    if (!c.eof() && c.peek() == '/') {
      self_closing = true;
      ++c.pos;
    }
    if (c.eof() || c.peek() != '>')
      throw OsmParseError("expected '>' in <" + name + ">", c.pos);
    ++c.pos;

    if (name == "node") {
      const std::string* id = find_attr(attrs, "id");
      const std::string* lat = find_attr(attrs, "lat");
      const std::string* lon = find_attr(attrs, "lon");
      if (!id || !lat || !lon)
        throw OsmParseError("<node> missing id/lat/lon", lt);
      cur_node = OsmNode{};
      cur_node.id = parse_i64(*id, lt);
      cur_node.location.lat = parse_f64(*lat, lt);
      cur_node.location.lon = parse_f64(*lon, lt);
      if (std::abs(cur_node.location.lat) > 90.0 ||
          std::abs(cur_node.location.lon) > 180.0)
        throw OsmParseError("node coordinates out of range", lt);
      cur_tags.clear();
      in_node = true;
      if (self_closing) finish_node();
      else stack.push_back(name);
    } else if (name == "way") {
      const std::string* id = find_attr(attrs, "id");
      if (!id) throw OsmParseError("<way> missing id", lt);
      cur_way = OsmWay{};
      cur_way.id = parse_i64(*id, lt);
      cur_tags.clear();
      in_way = true;
      if (self_closing) finish_way();
      else stack.push_back(name);
    } else if (name == "tag") {
      const std::string* k = find_attr(attrs, "k");
      const std::string* v = find_attr(attrs, "v");
      if (!k || !v) throw OsmParseError("<tag> missing k/v", lt);
      if (in_node || in_way) cur_tags[*k] = *v;
      if (!self_closing) stack.push_back(name);
    } else if (name == "nd") {
      const std::string* ref = find_attr(attrs, "ref");
      if (!ref) throw OsmParseError("<nd> missing ref", lt);
      if (in_way) cur_way.node_ids.push_back(parse_i64(*ref, lt));
      if (!self_closing) stack.push_back(name);
    } else {
      if (!self_closing) stack.push_back(name);
    }
  }
  if (!stack.empty())
    throw OsmParseError("unclosed element <" + stack.back() + ">", c.s.size());

  // Retained ways must resolve every node reference.
  std::unordered_set<int64_t> known;
  known.reserve(doc.nodes.size());
  for (const auto& n : doc.nodes) known.insert(n.id);
  for (const auto& w : doc.ways) {
    if (w.node_ids.size() < 2)
      throw OsmStructureError("way has fewer than 2 nodes", w.id);
    for (int64_t ref : w.node_ids)
      if (!known.count(ref))
        throw OsmStructureError(
            "unresolved node reference " + std::to_string(ref), w.id);
  }
  return doc;
}

std::string serialize_osm(const OsmDocument& doc) {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<osm version=\"0.6\">\n";
  char buf[128];
  for (const auto& n : doc.nodes) {
    std::snprintf(buf, sizeof(buf), "  <node id=\"%lld\" lat=\"%.9f\" lon=\"%.9f\"",
                  static_cast<long long>(n.id), n.location.lat, n.location.lon);
    out += buf;
    if (n.element == PointElement::None) {
      out += "/>\n";
    } else {
      out += ">\n";
      const char* v = n.element == PointElement::StopSign ? "stop"
                      : n.element == PointElement::TrafficSignal
                          ? "traffic_signals"
                          : "crossing";
      out += std::string("    <tag k=\"highway\" v=\"") + v + "\"/>\n";
      out += "  </node>\n";
    }
  }
  for (const auto& w : doc.ways) {
    std::snprintf(buf, sizeof(buf), "  <way id=\"%lld\">\n",
                  static_cast<long long>(w.id));
    out += buf;
    for (int64_t ref : w.node_ids) {
      std::snprintf(buf, sizeof(buf), "    <nd ref=\"%lld\"/>\n",
                    static_cast<long long>(ref));
      out += buf;
    }
    out += "    <tag k=\"highway\" v=\"" + encode_entities(w.road_class) +
           "\"/>\n";
    if (w.oneway) out += "    <tag k=\"oneway\" v=\"yes\"/>\n";
    out += "  </way>\n";
  }
  out += "</osm>\n";
  return out;
}

RoadGraph build_road_graph(const std::vector<OsmNode>& nodes,
                           const std::vector<OsmWay>& ways,
                           bool respect_oneway) {
  RoadGraph g;
  for (const auto& n : nodes) {
    g.nodes[n.id] = n;
    g.adjacency[n.id];  // every node appears, even if isolated
  }
  auto add_edge = [&](int64_t a, int64_t b, double w) {
    auto& adj = g.adjacency[a];
    for (const auto& [nb, _] : adj)
      if (nb == b) return;  // keep first weight for duplicate edges
    adj.emplace_back(b, w);
  };
  for (const auto& w : ways) {
    for (size_t i = 1; i < w.node_ids.size(); ++i) {
      int64_t a = w.node_ids[i - 1];
      int64_t b = w.node_ids[i];
      double d = haversine_m(g.nodes.at(a).location, g.nodes.at(b).location);
      if (d <= 0.0) {
        std::fprintf(stderr,
                     "warning: dropping zero-length edge %lld-%lld in way %lld\n",
                     static_cast<long long>(a), static_cast<long long>(b),
                     static_cast<long long>(w.id));
        continue;
      }
      add_edge(a, b, d);
      if (!(respect_oneway && w.oneway)) add_edge(b, a, d);
    }
  }
  for (auto& [id, adj] : g.adjacency)
    std::sort(adj.begin(), adj.end());
  return g;
}

std::string road_graph_to_json(const RoadGraph& g,
                               const std::vector<OsmWay>& ways) {
  nlohmann::ordered_json j;
  j["nodes"] = nlohmann::ordered_json::array();
  for (const auto& [id, n] : g.nodes) {
    j["nodes"].push_back({{"id", id},
                          {"lat", n.location.lat},
                          {"lon", n.location.lon},
                          {"element", static_cast<int>(n.element)}});
  }
  j["ways"] = nlohmann::ordered_json::array();
  for (const auto& w : ways) {
    j["ways"].push_back({{"id", w.id},
                         {"nodes", w.node_ids},
                         {"oneway", w.oneway},
                         {"highway", w.road_class}});
  }
  j["adjacency"] = nlohmann::ordered_json::array();
  for (const auto& [id, adj] : g.adjacency) {
    nlohmann::ordered_json edges = nlohmann::ordered_json::array();
    for (const auto& [nb, d] : adj) edges.push_back({{"to", nb}, {"m", d}});
    j["adjacency"].push_back({{"from", id}, {"edges", edges}});
  }
  return j.dump(2);
}

}  // namespace gridplan
