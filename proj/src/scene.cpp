#include "scene.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "json.hpp"
#include "rng.hpp"

namespace gridplan {

const double kClassPalette[kNumSemClasses][3] = {
    {0.0, 0.0, 0.0},  // Unknown
    {0.5, 0.5, 0.5},  // Road
    {1.0, 1.0, 0.0},  // LaneMarking
    {1.0, 0.0, 1.0},  // Crosswalk
    {0.0, 1.0, 0.0},  // Sidewalk
    {0.0, 0.5, 0.0},  // Vegetation
};

void GridSpec::validate() const {
  if (side <= 0 || resolution <= 0.0 || horizon <= 0.0)
    throw std::domain_error("GridSpec: non-positive field");
  if (std::abs(side - 2.0 * resolution * horizon) > 1e-9)
    throw std::domain_error("GridSpec: side must equal 2 * D * L_max");
}

GridSpec GridSpec::from_resolution(double d, double l_max) {
  GridSpec s;
  s.resolution = d;
  s.horizon = l_max;
  s.side = static_cast<int>(std::lround(2.0 * d * l_max));
  s.validate();
  return s;
}

SemClass SemanticGrid::class_at(LocalPoint map_pt) const {
  LocalPoint rel = to_ego_frame(origin, map_pt);
  int c = static_cast<int>(std::floor(rel.x * resolution));
  int r = static_cast<int>(std::floor(rel.y * resolution));
  if (r < 0 || r >= height || c < 0 || c >= width) return SemClass::Unknown;
  return static_cast<SemClass>(at(r, c));
}

std::vector<uint8_t> crop_classes(const SemanticGrid& map, const Pose2D& ego,
                                  const GridSpec& spec) {
  spec.validate();
  const int L = spec.side;
  const double D = spec.resolution;
  std::vector<uint8_t> out(static_cast<size_t>(L) * L,
                           static_cast<uint8_t>(SemClass::Unknown));
  const double c_h = std::cos(ego.heading);
  const double s_h = std::sin(ego.heading);
  for (int r = 0; r < L; ++r) {
    const double ex = (L / 2.0 - r - 0.5) / D;
    for (int c = 0; c < L; ++c) {
      const double ey = (L / 2.0 - c - 0.5) / D;
      LocalPoint map_pt{c_h * ex - s_h * ey + ego.position.x,
                        s_h * ex + c_h * ey + ego.position.y};
      out[static_cast<size_t>(r) * L + c] =
          static_cast<uint8_t>(map.class_at(map_pt));
    }
  }
  return out;
}

std::vector<double> encode_classes(const std::vector<uint8_t>& classes,
                                   int side) {
  if (classes.size() != static_cast<size_t>(side) * side)
    throw std::domain_error("encode_classes: size mismatch");
  std::vector<double> t(classes.size() * 3);
  for (size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] >= kNumSemClasses)
      throw std::domain_error("encode_classes: unknown class code " +
                              std::to_string(classes[i]));
    t[i * 3 + 0] = kClassPalette[classes[i]][0];
    t[i * 3 + 1] = kClassPalette[classes[i]][1];
    t[i * 3 + 2] = kClassPalette[classes[i]][2];
  }
  return t;
}

std::vector<uint8_t> decode_classes(const std::vector<double>& tensor,
                                    int side) {
  if (tensor.size() != static_cast<size_t>(side) * side * 3)
    throw std::domain_error("decode_classes: size mismatch");
  std::vector<uint8_t> classes(static_cast<size_t>(side) * side);
  for (size_t i = 0; i < classes.size(); ++i) {
    int found = -1;
    for (int k = 0; k < kNumSemClasses; ++k) {
      if (tensor[i * 3] == kClassPalette[k][0] &&
          tensor[i * 3 + 1] == kClassPalette[k][1] &&
          tensor[i * 3 + 2] == kClassPalette[k][2]) {
        found = k;
        break;
      }
    }
    if (found < 0) throw std::domain_error("decode_classes: unknown color");
    classes[i] = static_cast<uint8_t>(found);
  }
  return classes;
}

SceneCrop crop_ego(const SemanticGrid& map, const Pose2D& ego,
                   const GridSpec& spec) {
  SceneCrop crop;
  crop.spec = spec;
  crop.tensor = encode_classes(crop_classes(map, ego, spec), spec.side);
  return crop;
}

// --- scenario JSON -------------------------------------------------------

std::string scenario_to_json(const ScenarioSpec& s) {
  nlohmann::ordered_json j;
  j["name"] = s.name;
  j["extent"] = s.extent;
  j["resolution"] = s.resolution;
  j["node_spacing"] = s.node_spacing;
  j["node_jitter"] = s.node_jitter;
  j["origin"] = {{"lat", s.origin.lat}, {"lon", s.origin.lon}};
  j["segments"] = nlohmann::ordered_json::array();
  for (const auto& seg : s.segments) {
    nlohmann::ordered_json pts = nlohmann::ordered_json::array();
    for (const auto& p : seg.centerline) pts.push_back({p.x, p.y});
    j["segments"].push_back({{"centerline", pts}, {"width", seg.width}});
  }
  j["crosswalks"] = nlohmann::ordered_json::array();
  for (const auto& cw : s.crosswalks)
    j["crosswalks"].push_back({{"center", {cw.center.x, cw.center.y}},
                               {"heading", cw.heading},
                               {"length", cw.length},
                               {"width", cw.width}});
  j["stop_signs"] = nlohmann::ordered_json::array();
  for (const auto& p : s.stop_signs) j["stop_signs"].push_back({p.x, p.y});
  j["signals"] = nlohmann::ordered_json::array();
  for (const auto& p : s.signals) j["signals"].push_back({p.x, p.y});
  return j.dump(2);
}

ScenarioSpec scenario_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ScenarioSpec s;
  s.name = j.value("name", "");
  s.extent = j.value("extent", 120.0);
  s.resolution = j.value("resolution", 2.0);
  s.node_spacing = j.value("node_spacing", 5.0);
  s.node_jitter = j.value("node_jitter", 0.0);
  if (j.contains("origin")) {
    s.origin.lat = j["origin"].value("lat", 0.0);
    s.origin.lon = j["origin"].value("lon", 0.0);
  }
  for (const auto& seg : j.value("segments", nlohmann::json::array())) {
    RoadSegment rs;
    rs.width = seg.value("width", 7.0);
    for (const auto& p : seg.at("centerline"))
      rs.centerline.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    s.segments.push_back(std::move(rs));
  }
  for (const auto& cw : j.value("crosswalks", nlohmann::json::array())) {
    CrosswalkBand b;
    b.center = {cw.at("center").at(0).get<double>(),
                cw.at("center").at(1).get<double>()};
    b.heading = cw.value("heading", 0.0);
    b.length = cw.value("length", 12.0);
    b.width = cw.value("width", 3.0);
    s.crosswalks.push_back(b);
  }
  for (const auto& p : j.value("stop_signs", nlohmann::json::array()))
    s.stop_signs.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  for (const auto& p : j.value("signals", nlohmann::json::array()))
    s.signals.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return s;
}

// --- synthesis -----------------------------------------------------------

namespace {

double dist_to_polyline(LocalPoint p, const std::vector<LocalPoint>& line) {
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 1; i < line.size(); ++i) {
    const LocalPoint a = line[i - 1], b = line[i];
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy)));
  }
  return best;
}

bool in_band(LocalPoint p, const CrosswalkBand& b) {
  const double c = std::cos(b.heading), s = std::sin(b.heading);
  const double dx = p.x - b.center.x, dy = p.y - b.center.y;
  const double along = c * dx + s * dy;
  const double across = -s * dx + c * dy;
  return std::abs(along) <= b.length / 2.0 && std::abs(across) <= b.width / 2.0;
}

// Nodes every `spacing` meters along the centerline, endpoints included.
std::vector<LocalPoint> walk_centerline(const std::vector<LocalPoint>& line,
                                        double spacing) {
  std::vector<LocalPoint> out;
  const double total = polyline_length(line);
  int n = std::max(1, static_cast<int>(std::floor(total / spacing)));
  for (int k = 0; k <= n; ++k) {
    double target = std::min(total, k * spacing);
    // locate arc position
    double acc = 0.0;
    for (size_t i = 1; i < line.size(); ++i) {
      double seg =
          std::hypot(line[i].x - line[i - 1].x, line[i].y - line[i - 1].y);
      if (acc + seg >= target - 1e-12 || i + 1 == line.size()) {
        double t = seg > 0.0 ? (target - acc) / seg : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        out.push_back({line[i - 1].x + t * (line[i].x - line[i - 1].x),
                       line[i - 1].y + t * (line[i].y - line[i - 1].y)});
        break;
      }
      acc += seg;
    }
  }
  // make sure the exact endpoint is present
  const LocalPoint end = line.back();
  if (std::hypot(out.back().x - end.x, out.back().y - end.y) > 1e-9)
    out.push_back(end);
  return out;
}

}  // namespace

std::pair<SemanticGrid, RoadGraph> synthesize_map(const ScenarioSpec& spec,
                                                  uint64_t seed) {
  SemanticGrid grid;
  grid.resolution = spec.resolution;
  grid.width = grid.height =
      static_cast<int>(std::lround(2.0 * spec.extent * spec.resolution));
  grid.origin.position = {-spec.extent, -spec.extent};
  grid.origin.heading = 0.0;
  grid.classes.assign(static_cast<size_t>(grid.width) * grid.height,
                      static_cast<uint8_t>(SemClass::Vegetation));

  constexpr double kLaneMarkHalf = 0.075;  // 0.15 m marking
  constexpr double kSidewalkWidth = 2.0;

  for (int r = 0; r < grid.height; ++r) {
    const double y = grid.origin.position.y + (r + 0.5) / grid.resolution;
    for (int c = 0; c < grid.width; ++c) {
      const double x = grid.origin.position.x + (c + 0.5) / grid.resolution;
      const LocalPoint p{x, y};
      SemClass cls = SemClass::Vegetation;
      bool road = false, sidewalk = false, lane = false;
      for (const auto& seg : spec.segments) {
        const double d = dist_to_polyline(p, seg.centerline);
        if (d <= kLaneMarkHalf) lane = true;
        if (d <= seg.width / 2.0) road = true;
        else if (d <= seg.width / 2.0 + kSidewalkWidth) sidewalk = true;
      }
      if (sidewalk) cls = SemClass::Sidewalk;
      if (road) cls = SemClass::Road;
      if (lane) cls = SemClass::LaneMarking;
      for (const auto& cw : spec.crosswalks)
        if (in_band(p, cw)) cls = SemClass::Crosswalk;
      grid.at(r, c) = static_cast<uint8_t>(cls);
    }
  }

  // Paired road graph.
  RoadGraph g;
  Rng rng(seed ^ 0x5ce9a6e1u);
  std::vector<LocalPoint> positions;            // canonical (unjittered)
  std::vector<LocalPoint> jittered;
  std::vector<std::vector<int64_t>> seg_nodes;  // per-segment node id chains
  auto node_for = [&](LocalPoint p) -> int64_t {
    for (size_t i = 0; i < positions.size(); ++i)
      if (std::hypot(positions[i].x - p.x, positions[i].y - p.y) < 0.5)
        return static_cast<int64_t>(i + 1);
    positions.push_back(p);
    LocalPoint q = p;
    if (spec.node_jitter > 0.0) {
      q.x += rng.normal(0.0, spec.node_jitter);
      q.y += rng.normal(0.0, spec.node_jitter);
    }
    jittered.push_back(q);
    return static_cast<int64_t>(positions.size());
  };
  for (const auto& seg : spec.segments) {
    auto walk = walk_centerline(seg.centerline, spec.node_spacing);
    std::vector<int64_t> chain;
    for (const auto& p : walk) {
      int64_t id = node_for(p);
      if (chain.empty() || chain.back() != id) chain.push_back(id);
    }
    seg_nodes.push_back(std::move(chain));
  }
  std::vector<OsmNode> nodes;
  for (size_t i = 0; i < positions.size(); ++i) {
    OsmNode n;
    n.id = static_cast<int64_t>(i + 1);
    n.location = local_to_wgs84(spec.origin, jittered[i]);
    n.element = PointElement::None;
    nodes.push_back(n);
  }
  auto tag_nearest = [&](LocalPoint p, PointElement e) {
    size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < positions.size(); ++i) {
      double d = std::hypot(positions[i].x - p.x, positions[i].y - p.y);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    if (best_d <= 5.0 && nodes[best].element == PointElement::None)
      nodes[best].element = e;
  };
  for (const auto& p : spec.stop_signs) tag_nearest(p, PointElement::StopSign);
  for (const auto& p : spec.signals) tag_nearest(p, PointElement::TrafficSignal);
  for (const auto& cw : spec.crosswalks)
    tag_nearest(cw.center, PointElement::Crossing);

  std::vector<OsmWay> ways;
  for (size_t i = 0; i < seg_nodes.size(); ++i) {
    if (seg_nodes[i].size() < 2) continue;
    OsmWay w;
    w.id = static_cast<int64_t>(i + 1);
    w.node_ids = seg_nodes[i];
    w.road_class = "residential";
    ways.push_back(std::move(w));
  }
  g = build_road_graph(nodes, ways, /*respect_oneway=*/true);
  return {std::move(grid), std::move(g)};
}

// --- SGRD container ------------------------------------------------------

namespace {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& data, size_t& pos) {
  if (pos + sizeof(T) > data.size())
    throw std::runtime_error("SGRD: truncated file");
  T v;
  std::memcpy(&v, data.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void write_grid(const SemanticGrid& g, std::string& out) {
  out += "SGRD";
  put<uint16_t>(out, 1);
  put<uint32_t>(out, static_cast<uint32_t>(g.width));
  put<uint32_t>(out, static_cast<uint32_t>(g.height));
  put<float>(out, static_cast<float>(g.resolution));
  put<double>(out, g.origin.position.x);
  put<double>(out, g.origin.position.y);
  put<double>(out, g.origin.heading);
  out.append(reinterpret_cast<const char*>(g.classes.data()),
             g.classes.size());
}

SemanticGrid read_grid(const std::string& data, size_t& pos) {
  if (data.compare(pos, 4, "SGRD") != 0)
    throw std::runtime_error("SGRD: bad magic");
  pos += 4;
  uint16_t version = get<uint16_t>(data, pos);
  if (version != 1) throw std::runtime_error("SGRD: unsupported version");
  SemanticGrid g;
  g.width = static_cast<int>(get<uint32_t>(data, pos));
  g.height = static_cast<int>(get<uint32_t>(data, pos));
  g.resolution = get<float>(data, pos);
  g.origin.position.x = get<double>(data, pos);
  g.origin.position.y = get<double>(data, pos);
  g.origin.heading = get<double>(data, pos);
  size_t n = static_cast<size_t>(g.width) * g.height;
  if (pos + n > data.size()) throw std::runtime_error("SGRD: truncated file");
  g.classes.assign(data.begin() + pos, data.begin() + pos + n);
  pos += n;
  return g;
}

void save_grid(const SemanticGrid& g, const std::string& path) {
  std::string out;
  write_grid(g, out);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

SemanticGrid load_grid(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  size_t pos = 0;
  return read_grid(data, pos);
}

}  // namespace gridplan
