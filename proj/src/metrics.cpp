#include "metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "cvae.hpp"

namespace gridplan {

namespace {

void check_pair(const Trajectory& pred, const Trajectory& gt) {
  if (pred.waypoints.empty() || pred.waypoints.size() != gt.waypoints.size())
    throw std::invalid_argument("displacement: trajectory length mismatch");
}

double dist(const LocalPoint& a, const LocalPoint& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

bool violates(SemClass c) {
  return c == SemClass::Sidewalk || c == SemClass::Vegetation;
}

}  // namespace

double ade(const Trajectory& pred, const Trajectory& gt, size_t k) {
  check_pair(pred, gt);
  if (k == 0 || k > pred.waypoints.size())
    throw std::invalid_argument("ade: bad waypoint count");
  double s = 0.0;
  for (size_t i = 0; i < k; ++i) s += dist(pred.waypoints[i], gt.waypoints[i]);
  return s / static_cast<double>(k);
}

double fde(const Trajectory& pred, const Trajectory& gt) {
  check_pair(pred, gt);
  return dist(pred.waypoints.back(), gt.waypoints.back());
}

double mde(const Trajectory& pred, const Trajectory& gt) {
  check_pair(pred, gt);
  double m = 0.0;
  for (size_t i = 0; i < pred.waypoints.size(); ++i)
    m = std::max(m, dist(pred.waypoints[i], gt.waypoints[i]));
  return m;
}

bool dac(const Trajectory& pred, const SemanticGrid& grid, size_t k) {
  k = std::min(k, pred.waypoints.size());
  for (size_t i = 0; i < k; ++i)
    if (violates(grid.class_at(pred.waypoints[i]))) return false;
  return true;
}

bool dac_crop(const Trajectory& pred, const std::vector<uint8_t>& classes,
              const GridSpec& spec, size_t k) {
  k = std::min(k, pred.waypoints.size());
  const int L = spec.side;
  const double D = spec.resolution;
  for (size_t i = 0; i < k; ++i) {
    const auto& wp = pred.waypoints[i];
    const int r = static_cast<int>(std::floor(L / 2.0 - D * wp.x));
    const int c = static_cast<int>(std::floor(L / 2.0 - D * wp.y));
    if (r < 0 || r >= L || c < 0 || c >= L) continue;  // neutral
    if (violates(static_cast<SemClass>(classes[size_t(r) * L + c])))
      return false;
  }
  return true;
}

MetricsReport evaluate(CvaeModel& model, const Dataset& data) {
  if (data.samples.empty()) throw std::invalid_argument("evaluate: empty set");
  MetricsReport rep;
  for (const auto& s : data.samples) {
    Trajectory pred = model.infer(s);
    const size_t h = pred.waypoints.size();
    const size_t half = h / 2;
    rep.ade_full += ade(pred, s.gt, h);
    rep.ade_half += ade(pred, s.gt, half == 0 ? 1 : half);
    rep.fde += fde(pred, s.gt);
    rep.mde += mde(pred, s.gt);
    bool full_ok, half_ok;
    if (s.grid_index >= 0 &&
        s.grid_index < static_cast<int>(data.grids.size())) {
      Trajectory map_pred;
      for (const auto& wp : pred.waypoints)
        map_pred.waypoints.push_back(from_ego_frame(s.ego_map_pose, wp));
      const SemanticGrid& g = data.grids[static_cast<size_t>(s.grid_index)];
      full_ok = dac(map_pred, g, h);
      half_ok = dac(map_pred, g, half);
    } else {
      full_ok = dac_crop(pred, s.scene_classes, s.crop_spec, h);
      half_ok = dac_crop(pred, s.scene_classes, s.crop_spec, half);
    }
    rep.dac_full += full_ok ? 1.0 : 0.0;
    rep.dac_half += half_ok ? 1.0 : 0.0;
    ++rep.n;
  }
  rep.ade_full /= rep.n;
  rep.ade_half /= rep.n;
  rep.fde /= rep.n;
  rep.mde /= rep.n;
  rep.dac_full /= rep.n;
  rep.dac_half /= rep.n;
  return rep;
}

std::string report_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "ade_full,ade_half,fde,mde,dac_full,dac_half,n\n";
  os.precision(6);
  os << std::fixed << r.ade_full << ',' << r.ade_half << ',' << r.fde << ','
     << r.mde << ',' << r.dac_full << ',' << r.dac_half << ',' << r.n << '\n';
  return os.str();
}

std::string report_table(
    const std::vector<std::pair<std::string, MetricsReport>>& rows) {
  std::ostringstream os;
  os << "model            ADE_FULL ADE_HALF      FDE      MDE DAC_FULL "
        "DAC_HALF\n";
  auto cell = [](double v) {
    std::ostringstream c;
    c.precision(3);
    c << std::fixed << v;
    std::string s = c.str();
    while (s.size() < 8) s.insert(s.begin(), ' ');
    return s;
  };
  for (const auto& [name, r] : rows) {
    std::string pad = name;
    if (pad.size() < 16) pad.resize(16, ' ');
    os << pad << cell(r.ade_full) << ' ' << cell(r.ade_half) << ' '
       << cell(r.fde) << ' ' << cell(r.mde) << ' ' << cell(r.dac_full) << ' '
       << cell(r.dac_half) << '\n';
  }
  return os.str();
}

}  // namespace gridplan
