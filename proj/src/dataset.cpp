#include "dataset.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "rng.hpp"

namespace gridplan {

SceneCrop Sample::scene() const {
  SceneCrop crop;
  crop.spec = crop_spec;
  crop.tensor = encode_classes(scene_classes, crop_spec.side);
  return crop;
}

// --- synthetic generation ---------------------------------------------------

namespace {

// Densifies a polyline at `step` arc spacing and offsets each point to the
// driving side (right of the tangent).
std::vector<LocalPoint> offset_path(const std::vector<LocalPoint>& line,
                                    double offset, double step = 0.5) {
  std::vector<LocalPoint> dense;
  const double total = polyline_length(line);
  const int n = std::max(2, static_cast<int>(std::ceil(total / step)) + 1);
  size_t seg = 0;
  double seg_start = 0.0;
  double seg_len = std::hypot(line[1].x - line[0].x, line[1].y - line[0].y);
  for (int k = 0; k < n; ++k) {
    const double target = total * k / (n - 1);
    while (seg + 2 < line.size() && seg_start + seg_len < target - 1e-12) {
      seg_start += seg_len;
      ++seg;
      seg_len = std::hypot(line[seg + 1].x - line[seg].x,
                           line[seg + 1].y - line[seg].y);
    }
    const double t = seg_len > 0.0 ? (target - seg_start) / seg_len : 0.0;
    const double hx = (line[seg + 1].x - line[seg].x) / std::max(seg_len, 1e-12);
    const double hy = (line[seg + 1].y - line[seg].y) / std::max(seg_len, 1e-12);
    LocalPoint p{line[seg].x + t * (line[seg + 1].x - line[seg].x),
                 line[seg].y + t * (line[seg + 1].y - line[seg].y)};
    // right normal of (hx, hy) is (hy, -hx)
    dense.push_back({p.x + offset * hy, p.y - offset * hx});
  }
  return dense;
}

struct ArcCursor {
  const std::vector<LocalPoint>& path;
  // Point and tangent heading at arc length s.
  std::pair<LocalPoint, double> at(double s) const {
    double acc = 0.0;
    for (size_t i = 1; i < path.size(); ++i) {
      double seg = std::hypot(path[i].x - path[i - 1].x,
                              path[i].y - path[i - 1].y);
      if (acc + seg >= s || i + 1 == path.size()) {
        double t = seg > 0.0 ? std::clamp((s - acc) / seg, 0.0, 1.0) : 0.0;
        LocalPoint p{path[i - 1].x + t * (path[i].x - path[i - 1].x),
                     path[i - 1].y + t * (path[i].y - path[i - 1].y)};
        double h = std::atan2(path[i].y - path[i - 1].y,
                              path[i].x - path[i - 1].x);
        return {p, h};
      }
      acc += seg;
    }
    return {path.back(), 0.0};
  }
  // Suffix of the path starting at arc length s.
  std::vector<LocalPoint> suffix(double s) const {
    std::vector<LocalPoint> out;
    out.push_back(at(s).first);
    double acc = 0.0;
    for (size_t i = 1; i < path.size(); ++i) {
      acc += std::hypot(path[i].x - path[i - 1].x, path[i].y - path[i - 1].y);
      if (acc > s) out.push_back(path[i]);
    }
    return out;
  }
};

bool gt_on_drivable(const Trajectory& gt, const Pose2D& ego,
                    const SemanticGrid& grid) {
  for (const auto& wp : gt.waypoints) {
    SemClass c = grid.class_at(from_ego_frame(ego, wp));
    if (c != SemClass::Road && c != SemClass::LaneMarking &&
        c != SemClass::Crosswalk)
      return false;
  }
  return true;
}

}  // namespace

Dataset generate_synthetic(const std::vector<ScenarioSpec>& scenarios,
                           int samples_per_scenario, uint64_t seed,
                           const SynthOptions& opt, SynthStats* stats) {
  if (scenarios.empty())
    throw std::invalid_argument("generate_synthetic: no scenarios");
  Dataset d;
  d.config = opt.config;
  d.provenance = "synthetic seed " + std::to_string(seed);
  SynthStats local;
  int64_t sample_counter = 0;

  for (size_t si = 0; si < scenarios.size(); ++si) {
    const ScenarioSpec& spec = scenarios[si];
    auto [grid, graph] = synthesize_map(spec, seed + si);
    d.grids.push_back(grid);
    Rng rng(seed * 1000003 + si);

    std::vector<int64_t> node_ids;
    for (const auto& [id, _] : graph.nodes) node_ids.push_back(id);

    int made = 0;
    int attempts = 0;
    const int max_attempts = samples_per_scenario * 60 + 100;
    while (made < samples_per_scenario && attempts++ < max_attempts) {
      int64_t src = node_ids[rng.integer(node_ids.size())];
      int64_t dst = node_ids[rng.integer(node_ids.size())];
      if (src == dst) continue;
      Route route;
      try {
        route = shortest_route(graph, src, dst);
      } catch (const NoRouteError&) {
        continue;
      }
      auto pts = route_local_points(route, graph, spec.origin);
      auto drive = offset_path(pts, opt.lane_offset);
      const double total = polyline_length(drive);
      const double need =
          opt.config.horizon * opt.config.spacing + 2.0;  // gt horizon + slack
      if (total < need + 4.0) {
        ++local.skipped;
        continue;
      }
      const double s = rng.uniform(2.0, total - need);
      ArcCursor cur{drive};
      auto [base, tangent] = cur.at(s);

      Pose2D ego;
      ego.position = {base.x + rng.normal(0.0, opt.pos_noise),
                      base.y + rng.normal(0.0, opt.pos_noise)};
      ego.heading = normalize_angle(
          tangent + rng.normal(0.0, opt.heading_noise_deg * std::numbers::pi /
                                        180.0));

      size_t idx;
      try {
        idx = match_waypoint(pts, ego.position, opt.max_match_dist);
      } catch (const OffRouteError&) {
        ++local.skipped;
        continue;
      }
      double heading_est = estimate_heading(pts, idx);

      Trajectory gt;
      try {
        gt = interpolate_trajectory(to_ego_frame(ego, cur.suffix(s)),
                                    opt.config.spacing, opt.config.horizon);
      } catch (const InsufficientArcLength&) {
        ++local.skipped;
        continue;
      }
      if (!gt_on_drivable(gt, ego, grid)) {
        ++local.skipped;
        continue;
      }

      Sample smp;
      smp.plan = build_plan_graph(route, graph, pts, idx, heading_est,
                                  opt.config.variant, opt.config.past,
                                  opt.config.future);
      smp.crop_spec = opt.config.crop;
      smp.scene_classes = crop_classes(grid, ego, opt.config.crop);
      smp.gt = std::move(gt);
      smp.ego_map_pose = ego;
      smp.ego_global = local_to_wgs84(spec.origin, ego.position);
      smp.timestamp = opt.base_timestamp + sample_counter++;
      smp.imu.resize(6);
      for (double& x : smp.imu) x = rng.normal(0.0, 0.1);
      smp.grid_index = static_cast<int32_t>(si);
      d.samples.push_back(std::move(smp));
      ++made;
      ++local.generated;
    }
  }
  if (stats) *stats = local;
  return d;
}

// --- TNDS codec ---------------------------------------------------------------

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
    throw std::runtime_error("TNDS: truncated file");
  T v;
  std::memcpy(&v, data.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

void put_string(std::string& out, const std::string& s) {
  put<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out += s;
}

std::string get_string(const std::string& data, size_t& pos) {
  uint32_t n = get<uint32_t>(data, pos);
  if (pos + n > data.size()) throw std::runtime_error("TNDS: truncated file");
  std::string s = data.substr(pos, n);
  pos += n;
  return s;
}

std::string encode_sample(const Sample& s) {
  std::string out;
  put<uint8_t>(out, static_cast<uint8_t>(s.plan.variant));
  put<uint32_t>(out, static_cast<uint32_t>(s.plan.past_count));
  put<uint32_t>(out, static_cast<uint32_t>(s.plan.future_count));
  for (const auto& r : s.plan.rows) {
    put<double>(out, r.px);
    put<double>(out, r.py);
    put<double>(out, r.f);
  }
  put<uint32_t>(out, static_cast<uint32_t>(s.crop_spec.side));
  put<double>(out, s.crop_spec.resolution);
  put<double>(out, s.crop_spec.horizon);
  out.append(reinterpret_cast<const char*>(s.scene_classes.data()),
             s.scene_classes.size());
  put<uint32_t>(out, static_cast<uint32_t>(s.gt.waypoints.size()));
  for (const auto& p : s.gt.waypoints) {
    put<double>(out, p.x);
    put<double>(out, p.y);
  }
  put<double>(out, s.ego_map_pose.position.x);
  put<double>(out, s.ego_map_pose.position.y);
  put<double>(out, s.ego_map_pose.heading);
  put<double>(out, s.ego_global.lat);
  put<double>(out, s.ego_global.lon);
  put<int64_t>(out, s.timestamp);
  put<uint32_t>(out, static_cast<uint32_t>(s.imu.size()));
  for (double x : s.imu) put<double>(out, x);
  put<int32_t>(out, s.grid_index);
  put_string(out, s.aux);
  return out;
}

Sample decode_sample(const std::string& data) {
  size_t pos = 0;
  Sample s;
  s.plan.variant = static_cast<PlanVariant>(get<uint8_t>(data, pos));
  s.plan.past_count = static_cast<int>(get<uint32_t>(data, pos));
  s.plan.future_count = static_cast<int>(get<uint32_t>(data, pos));
  const size_t rows =
      static_cast<size_t>(s.plan.past_count + s.plan.future_count);
  for (size_t i = 0; i < rows; ++i) {
    PlanNodeRow r;
    r.px = get<double>(data, pos);
    r.py = get<double>(data, pos);
    r.f = get<double>(data, pos);
    s.plan.rows.push_back(r);
  }
  s.crop_spec.side = static_cast<int>(get<uint32_t>(data, pos));
  s.crop_spec.resolution = get<double>(data, pos);
  s.crop_spec.horizon = get<double>(data, pos);
  const size_t cells =
      static_cast<size_t>(s.crop_spec.side) * s.crop_spec.side;
  if (pos + cells > data.size()) throw std::runtime_error("TNDS: truncated");
  s.scene_classes.assign(data.begin() + pos, data.begin() + pos + cells);
  pos += cells;
  uint32_t n = get<uint32_t>(data, pos);
  for (uint32_t i = 0; i < n; ++i) {
    LocalPoint p;
    p.x = get<double>(data, pos);
    p.y = get<double>(data, pos);
    s.gt.waypoints.push_back(p);
  }
  s.ego_map_pose.position.x = get<double>(data, pos);
  s.ego_map_pose.position.y = get<double>(data, pos);
  s.ego_map_pose.heading = get<double>(data, pos);
  s.ego_global.lat = get<double>(data, pos);
  s.ego_global.lon = get<double>(data, pos);
  s.timestamp = get<int64_t>(data, pos);
  uint32_t ni = get<uint32_t>(data, pos);
  for (uint32_t i = 0; i < ni; ++i) s.imu.push_back(get<double>(data, pos));
  s.grid_index = get<int32_t>(data, pos);
  s.aux = get_string(data, pos);
  return s;
}

std::string config_json(const DatasetConfig& c) {
  nlohmann::ordered_json j;
  j["horizon"] = c.horizon;
  j["past"] = c.past;
  j["future"] = c.future;
  j["spacing"] = c.spacing;
  j["crop_side"] = c.crop.side;
  j["crop_resolution"] = c.crop.resolution;
  j["crop_horizon"] = c.crop.horizon;
  j["variant"] = to_string(c.variant);
  return j.dump();
}

DatasetConfig config_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  DatasetConfig c;
  c.horizon = j.value("horizon", 10);
  c.past = j.value("past", 20);
  c.future = j.value("future", 20);
  c.spacing = j.value("spacing", 3.0);
  c.crop.side = j.value("crop_side", 400);
  c.crop.resolution = j.value("crop_resolution", 2.0);
  c.crop.horizon = j.value("crop_horizon", 100.0);
  c.variant = plan_variant_from_string(j.value("variant", "STPF"));
  return c;
}

}  // namespace

void save_dataset(const Dataset& d, const std::string& path) {
  std::string out = "TNDS";
  put<uint32_t>(out, 1);
  put_string(out, config_json(d.config));
  put_string(out, d.split);
  put_string(out, d.provenance);
  put<uint32_t>(out, static_cast<uint32_t>(d.grids.size()));
  for (const auto& g : d.grids) {
    std::string blob;
    write_grid(g, blob);
    put_string(out, blob);
  }
  put<uint32_t>(out, static_cast<uint32_t>(d.samples.size()));
  for (const auto& s : d.samples) put_string(out, encode_sample(s));
  uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(out.data()),
            static_cast<uInt>(out.size())));
  put<uint32_t>(out, crc);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

Dataset load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  if (data.size() < 12 || data.compare(0, 4, "TNDS") != 0)
    throw std::runtime_error("TNDS: bad magic");
  uint32_t expect;
  std::memcpy(&expect, data.data() + data.size() - 4, 4);
  uint32_t crc = static_cast<uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(data.data()),
            static_cast<uInt>(data.size() - 4)));
  if (crc != expect) throw std::runtime_error("TNDS: checksum failure");

  size_t pos = 4;
  uint32_t version = get<uint32_t>(data, pos);
  if (version != 1) throw std::runtime_error("TNDS: version mismatch");
  Dataset d;
  d.config = config_from_json(get_string(data, pos));
  d.split = get_string(data, pos);
  d.provenance = get_string(data, pos);
  uint32_t ngrids = get<uint32_t>(data, pos);
  for (uint32_t i = 0; i < ngrids; ++i) {
    std::string blob = get_string(data, pos);
    size_t p = 0;
    d.grids.push_back(read_grid(blob, p));
  }
  uint32_t nsamples = get<uint32_t>(data, pos);
  for (uint32_t i = 0; i < nsamples; ++i)
    d.samples.push_back(decode_sample(get_string(data, pos)));
  return d;
}

// --- published layout importer -------------------------------------------------

Dataset import_published(const std::string& root, const std::string& split) {
  namespace fs = std::filesystem;
  fs::path dir = fs::path(root) / split;
  if (!fs::is_directory(dir))
    throw std::runtime_error("import: no such split directory " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw std::runtime_error("import: no sample files under " + dir.string());

  Dataset d;
  d.split = split;
  d.provenance = "external " + root;
  bool first = true;
  for (const auto& file : files) {
    std::ifstream f(file);
    nlohmann::json j;
    try {
      f >> j;
    } catch (const std::exception& e) {
      throw std::runtime_error("import: bad JSON in " + file.string() + ": " +
                               e.what());
    }
    auto require = [&](const char* key) -> const nlohmann::json& {
      if (!j.contains(key))
        throw std::runtime_error("import: sample " + file.string() +
                                 " missing mandatory field '" + key + "'");
      return j.at(key);
    };
    Sample s;
    s.plan = plan_graph_from_json(require("plan").dump());
    for (const auto& p : require("trajectory"))
      s.gt.waypoints.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    const auto& pose = require("ego_map_pose");
    s.ego_map_pose.position = {pose.at(0).get<double>(),
                               pose.at(1).get<double>()};
    s.ego_map_pose.heading = pose.at(2).get<double>();
    const auto& glob = require("ego_global");
    s.ego_global = {glob.at(0).get<double>(), glob.at(1).get<double>()};
    s.timestamp = require("timestamp").get<int64_t>();
    std::string scene_rel = require("scene").get<std::string>();
    SemanticGrid crop = load_grid((dir / scene_rel).string());
    if (crop.width != crop.height)
      throw std::runtime_error("import: non-square scene crop in " +
                               file.string());
    s.crop_spec = GridSpec::from_resolution(
        crop.resolution, crop.width / (2.0 * crop.resolution));
    s.scene_classes = crop.classes;
    if (j.contains("imu"))
      for (const auto& x : j.at("imu")) s.imu.push_back(x.get<double>());
    // carry anything we do not model
    nlohmann::json extra = nlohmann::json::object();
    for (auto& [key, val] : j.items())
      if (key != "plan" && key != "trajectory" && key != "ego_map_pose" &&
          key != "ego_global" && key != "timestamp" && key != "scene" &&
          key != "imu")
        extra[key] = val;
    if (!extra.empty()) s.aux = extra.dump();

    if (first) {
      d.config.horizon = static_cast<int>(s.gt.waypoints.size());
      d.config.past = s.plan.past_count;
      d.config.future = s.plan.future_count;
      d.config.crop = s.crop_spec;
      if (s.gt.waypoints.size() >= 2)
        d.config.spacing = std::hypot(
            s.gt.waypoints[1].x - s.gt.waypoints[0].x,
            s.gt.waypoints[1].y - s.gt.waypoints[0].y);
      d.config.variant = s.plan.variant;
      first = false;
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

// --- scenario presets ------------------------------------------------------------

ScenarioSpec straight_scenario(double length, double width) {
  ScenarioSpec s;
  s.name = "straight";
  s.extent = length / 2.0 + 20.0;
  s.segments.push_back({{{-length / 2.0, 0.0}, {length / 2.0, 0.0}}, width});
  return s;
}

ScenarioSpec four_way_scenario(double arm, double width, bool signals) {
  ScenarioSpec s;
  s.name = signals ? "four_way_signals" : "four_way_stops";
  s.extent = arm + 10.0;
  s.segments.push_back({{{-arm, 0.0}, {arm, 0.0}}, width});
  s.segments.push_back({{{0.0, -arm}, {0.0, arm}}, width});
  const double mouth = 10.0;
  s.crosswalks.push_back({{mouth, 0.0}, std::numbers::pi / 2, 12.0, 3.0});
  s.crosswalks.push_back({{-mouth, 0.0}, std::numbers::pi / 2, 12.0, 3.0});
  s.crosswalks.push_back({{0.0, mouth}, 0.0, 12.0, 3.0});
  s.crosswalks.push_back({{0.0, -mouth}, 0.0, 12.0, 3.0});
  std::vector<LocalPoint> mouths = {
      {mouth + 5.0, 0.0}, {-mouth - 5.0, 0.0}, {0.0, mouth + 5.0}, {0.0, -mouth - 5.0}};
  if (signals)
    s.signals = mouths;
  else
    s.stop_signs = mouths;
  return s;
}

ScenarioSpec three_way_scenario(double arm, double width) {
  ScenarioSpec s;
  s.name = "three_way";
  s.extent = arm + 10.0;
  s.segments.push_back({{{-arm, 0.0}, {arm, 0.0}}, width});
  s.segments.push_back({{{0.0, -arm}, {0.0, 0.0}}, width});
  const double mouth = 10.0;
  s.crosswalks.push_back({{mouth, 0.0}, std::numbers::pi / 2, 12.0, 3.0});
  s.crosswalks.push_back({{-mouth, 0.0}, std::numbers::pi / 2, 12.0, 3.0});
  s.crosswalks.push_back({{0.0, -mouth}, 0.0, 12.0, 3.0});
  s.stop_signs = {{mouth + 5.0, 0.0}, {-mouth - 5.0, 0.0}, {0.0, -mouth - 5.0}};
  return s;
}

ScenarioSpec u_turn_scenario(double leg, double gap, double width) {
  ScenarioSpec s;
  s.name = "u_turn";
  s.extent = leg + gap + 20.0;
  RoadSegment seg;
  seg.width = width;
  seg.centerline.push_back({-leg, 0.0});
  seg.centerline.push_back({0.0, 0.0});
  const double r = gap / 2.0;
  for (int i = 1; i < 12; ++i) {
    double a = -std::numbers::pi / 2 + i * std::numbers::pi / 12;
    seg.centerline.push_back({r * std::cos(a), gap / 2.0 + r * std::sin(a)});
  }
  seg.centerline.push_back({0.0, gap});
  seg.centerline.push_back({-leg, gap});
  s.segments.push_back(std::move(seg));
  return s;
}

ScenarioSpec sharp_turn_scenario(double leg, double width) {
  ScenarioSpec s;
  s.name = "sharp_turn";
  s.extent = leg + 20.0;
  s.segments.push_back({{{-leg, 0.0}, {0.0, 0.0}, {0.0, leg}}, width});
  return s;
}

}  // namespace gridplan
