#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <string>

#include "osm.hpp"
#include "rng.hpp"

using namespace gridplan;

namespace {

const char* kTriangle = R"(<?xml version="1.0" encoding="UTF-8"?>
<osm version="0.6">
  <node id="1" lat="0.0" lon="0.0"/>
  <node id="2" lat="0.001" lon="0.0">
    <tag k="highway" v="stop"/>
  </node>
  <node id="3" lat="0.001" lon="0.001">
    <tag k="highway" v="traffic_signals"/>
  </node>
  <node id="4" lat="0.0" lon="0.001">
    <tag k="crossing" v="marked"/>
  </node>
  <way id="10">
    <nd ref="1"/>
    <nd ref="2"/>
    <nd ref="3"/>
    <tag k="highway" v="residential"/>
  </way>
  <way id="11">
    <nd ref="3"/>
    <nd ref="4"/>
    <tag k="highway" v="residential"/>
    <tag k="oneway" v="yes"/>
  </way>
  <way id="12">
    <nd ref="1"/>
    <nd ref="4"/>
    <tag k="building" v="yes"/>
  </way>
</osm>
)";

}  // namespace

TEST_CASE("parse_osm minimal document") {
  OsmDocument d = parse_osm(R"(<osm><node id="1" lat="0" lon="0"/></osm>)");
  REQUIRE(d.nodes.size() == 1);
  CHECK(d.nodes[0].id == 1);
  CHECK(d.nodes[0].element == PointElement::None);
  CHECK(d.ways.empty());
}

TEST_CASE("parse_osm classifies point elements") {
  OsmDocument d = parse_osm(kTriangle);
  std::map<int64_t, PointElement> el;
  for (const auto& n : d.nodes) el[n.id] = n.element;
  CHECK(el[1] == PointElement::None);
  CHECK(el[2] == PointElement::StopSign);
  CHECK(el[3] == PointElement::TrafficSignal);
  CHECK(el[4] == PointElement::Crossing);
}

TEST_CASE("parse_osm keeps only highway ways") {
  OsmDocument d = parse_osm(kTriangle);
  REQUIRE(d.ways.size() == 2);
  CHECK(d.ways[0].id == 10);
  CHECK_FALSE(d.ways[0].oneway);
  CHECK(d.ways[1].id == 11);
  CHECK(d.ways[1].oneway);
  CHECK(d.ways[0].road_class == "residential");
}

TEST_CASE("parse_osm reports unresolved references with the way id") {
  const char* doc = R"(<osm>
    <node id="1" lat="0" lon="0"/>
    <way id="77"><nd ref="1"/><nd ref="99"/><tag k="highway" v="x"/></way>
  </osm>)";
  CHECK_THROWS_AS(parse_osm(doc), OsmStructureError);
  try {
    parse_osm(doc);
  } catch (const OsmStructureError& e) {
    CHECK(e.way_id() == 77);
    CHECK(std::string(e.what()).find("99") != std::string::npos);
  }
}

TEST_CASE("parse_osm reports malformed XML with a byte offset") {
  std::string doc = "<osm><node id=\"1\" lat=\"0\" lon=\"0\"/><node </osm>";
  CHECK_THROWS_AS(parse_osm(doc), OsmParseError);
  try {
    parse_osm(doc);
  } catch (const OsmParseError& e) {
    CHECK(e.byte_offset() > 0);
    CHECK(e.byte_offset() <= doc.size());
  }
}

TEST_CASE("parse_osm handles comments, entities and declarations") {
  OsmDocument d = parse_osm(
      "<?xml version=\"1.0\"?><!-- c --><osm>"
      "<node id=\"5\" lat=\"1.5\" lon=\"-2.25\">"
      "<tag k=\"name\" v=\"a &amp; b\"/></node></osm>");
  REQUIRE(d.nodes.size() == 1);
  CHECK(d.nodes[0].location.lat == doctest::Approx(1.5));
  CHECK(d.nodes[0].location.lon == doctest::Approx(-2.25));
}

TEST_CASE("serialize/parse round trip preserves nodes and ways") {
  OsmDocument d = parse_osm(kTriangle);
  OsmDocument d2 = parse_osm(serialize_osm(d));
  REQUIRE(d2.nodes.size() == d.nodes.size());
  REQUIRE(d2.ways.size() == d.ways.size());
  for (size_t i = 0; i < d.nodes.size(); ++i) {
    CHECK(d2.nodes[i].id == d.nodes[i].id);
    CHECK(d2.nodes[i].element == d.nodes[i].element);
    CHECK(d2.nodes[i].location.lat ==
          doctest::Approx(d.nodes[i].location.lat).epsilon(1e-12));
  }
  for (size_t i = 0; i < d.ways.size(); ++i) {
    CHECK(d2.ways[i].id == d.ways[i].id);
    CHECK(d2.ways[i].node_ids == d.ways[i].node_ids);
    CHECK(d2.ways[i].oneway == d.ways[i].oneway);
  }
}

TEST_CASE("build_road_graph weights by haversine distance") {
  // nodes 0.001 deg of latitude apart: 2 R asin(sin(0.0005 deg)) = 111.195 m
  OsmDocument d = parse_osm(R"(<osm>
    <node id="1" lat="0.000" lon="0"/>
    <node id="2" lat="0.001" lon="0"/>
    <node id="3" lat="0.002" lon="0"/>
    <way id="9"><nd ref="1"/><nd ref="2"/><nd ref="3"/>
      <tag k="highway" v="residential"/></way>
  </osm>)");
  RoadGraph g = build_road_graph(d.nodes, d.ways);
  REQUIRE(g.adjacency.at(1).size() == 1);
  REQUIRE(g.adjacency.at(2).size() == 2);
  REQUIRE(g.adjacency.at(3).size() == 1);
  CHECK(g.adjacency.at(1)[0].first == 2);
  CHECK(g.adjacency.at(1)[0].second == doctest::Approx(111.195).epsilon(1e-4));
  CHECK(g.adjacency.at(2)[0].first == 1);
  CHECK(g.adjacency.at(2)[1].first == 3);
}

TEST_CASE("build_road_graph respects oneway") {
  OsmDocument d = parse_osm(R"(<osm>
    <node id="1" lat="0" lon="0"/><node id="2" lat="0.001" lon="0"/>
    <way id="9"><nd ref="1"/><nd ref="2"/>
      <tag k="highway" v="x"/><tag k="oneway" v="yes"/></way>
  </osm>)");
  RoadGraph g = build_road_graph(d.nodes, d.ways);
  CHECK(g.adjacency.at(1).size() == 1);
  CHECK(g.adjacency.at(2).empty());
  // the oneway override makes it symmetric again
  RoadGraph g2 = build_road_graph(d.nodes, d.ways, /*respect_oneway=*/false);
  CHECK(g2.adjacency.at(2).size() == 1);
}

TEST_CASE("build_road_graph with no ways") {
  OsmDocument d = parse_osm(R"(<osm><node id="1" lat="0" lon="0"/></osm>)");
  RoadGraph g = build_road_graph(d.nodes, d.ways);
  CHECK(g.nodes.size() == 1);
  CHECK(g.adjacency.at(1).empty());
}

TEST_CASE("non-oneway adjacency is symmetric with equal weights") {
  OsmDocument d = parse_osm(kTriangle);
  RoadGraph g = build_road_graph(d.nodes, d.ways);
  for (const auto& [u, edges] : g.adjacency) {
    for (const auto& [v, w] : edges) {
      bool oneway_edge = (u == 3 && v == 4);
      if (oneway_edge) continue;
      bool found = false;
      for (const auto& [back, wb] : g.adjacency.at(v))
        if (back == u && wb == doctest::Approx(w).epsilon(1e-12)) found = true;
      CHECK(found);
    }
  }
}

TEST_CASE("edge-weight sum is invariant under node relabeling") {
  auto total = [](const RoadGraph& g) {
    double t = 0.0;
    for (const auto& [u, edges] : g.adjacency)
      for (const auto& [v, w] : edges) t += w;
    return t;
  };
  OsmDocument d = parse_osm(kTriangle);
  RoadGraph g1 = build_road_graph(d.nodes, d.ways);
  // relabel ids 1..4 -> 101..104
  OsmDocument d2 = d;
  for (auto& n : d2.nodes) n.id += 100;
  for (auto& w : d2.ways)
    for (auto& id : w.node_ids) id += 100;
  RoadGraph g2 = build_road_graph(d2.nodes, d2.ways);
  CHECK(total(g1) == doctest::Approx(total(g2)).epsilon(1e-12));
}

TEST_CASE("zero-length edges are dropped") {
  OsmDocument d = parse_osm(R"(<osm>
    <node id="1" lat="0" lon="0"/><node id="2" lat="0" lon="0"/>
    <way id="9"><nd ref="1"/><nd ref="2"/><tag k="highway" v="x"/></way>
  </osm>)");
  RoadGraph g = build_road_graph(d.nodes, d.ways);
  CHECK(g.adjacency.at(1).empty());
  CHECK(g.adjacency.at(2).empty());
}

TEST_CASE("road_graph_to_json is canonical and stable") {
  OsmDocument d = parse_osm(kTriangle);
  RoadGraph g = build_road_graph(d.nodes, d.ways);
  std::string a = road_graph_to_json(g, d.ways);
  std::string b = road_graph_to_json(g, d.ways);
  CHECK(a == b);
  CHECK(a.find("\"nodes\"") != std::string::npos);
  CHECK(a.find("\"adjacency\"") != std::string::npos);
}
