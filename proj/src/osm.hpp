#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "geo.hpp"

namespace gridplan {

enum class PointElement : uint8_t { None = 0, StopSign, TrafficSignal, Crossing };

struct OsmNode {
  int64_t id = 0;
  GeoPoint location;
  PointElement element = PointElement::None;
};

struct OsmWay {
  int64_t id = 0;
  std::vector<int64_t> node_ids;
  bool oneway = false;
  std::string road_class;  // value of the highway=* tag
};

struct OsmDocument {
  std::vector<OsmNode> nodes;
  std::vector<OsmWay> ways;
};

// nodes: id -> node; adjacency: id -> (neighbor id, edge length m)
struct RoadGraph {
  std::map<int64_t, OsmNode> nodes;
  std::map<int64_t, std::vector<std::pair<int64_t, double>>> adjacency;

  bool has_node(int64_t id) const { return nodes.count(id) != 0; }
};

class OsmParseError : public std::runtime_error {
 public:
  OsmParseError(const std::string& msg, size_t byte_offset);
  size_t byte_offset() const { return byte_offset_; }

 private:
  size_t byte_offset_;
};

class OsmStructureError : public std::runtime_error {
 public:
  OsmStructureError(const std::string& msg, int64_t way_id);
  int64_t way_id() const { return way_id_; }

 private:
  int64_t way_id_;
};

// Parses an OSM XML v0.6 extract. Ways without a highway=* tag are dropped.
// Nodes tagged highway=stop / highway=traffic_signals / highway=crossing (or
// any crossing=* tag) get the matching element code. Retained ways must only
// reference nodes present in the document.
OsmDocument parse_osm(std::string_view xml);

// Emits a document back as OSM XML; parse(serialize(d)) reproduces d.
std::string serialize_osm(const OsmDocument& doc);

// One edge per consecutive node pair in each way, weighted by great-circle
// distance; the reverse edge is added unless the way is oneway (or
// respect_oneway is false). Zero-length edges are dropped.
RoadGraph build_road_graph(const std::vector<OsmNode>& nodes,
                           const std::vector<OsmWay>& ways,
                           bool respect_oneway = true);

// Canonical JSON dump (sorted keys) for golden tests.
std::string road_graph_to_json(const RoadGraph& g,
                               const std::vector<OsmWay>& ways = {});

}  // namespace gridplan
