#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cvae.hpp"
#include "metrics.hpp"
#include "rng.hpp"

using namespace gridplan;

namespace {

Trajectory traj(std::initializer_list<LocalPoint> pts) {
  Trajectory t;
  t.waypoints = pts;
  return t;
}

Trajectory random_traj(Rng& rng, size_t n, double span = 20.0) {
  Trajectory t;
  for (size_t i = 0; i < n; ++i)
    t.waypoints.push_back({rng.uniform(-span, span), rng.uniform(-span, span)});
  return t;
}

}  // namespace

TEST_CASE("ade fde mde hand case with growing offsets") {
  // pred_i = gt_i + (0.1 * (i + 1), 0): distances 0.1 .. 1.0
  Trajectory gt, pred;
  for (int i = 0; i < 10; ++i) {
    gt.waypoints.push_back({3.0 * i, 1.0});
    pred.waypoints.push_back({3.0 * i + 0.1 * (i + 1), 1.0});
  }
  CHECK(ade(pred, gt, 10) == doctest::Approx(0.55).epsilon(1e-12));
  CHECK(ade(pred, gt, 5) == doctest::Approx(0.30).epsilon(1e-12));
  CHECK(fde(pred, gt) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(mde(pred, gt) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fde follows the 3-4-5 triangle") {
  Trajectory gt = traj({{0, 0}, {1, 1}});
  Trajectory pred = traj({{0, 0}, {4, 5}});
  CHECK(fde(pred, gt) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("constant unit offset gives unit ade fde mde") {
  Trajectory gt, pred;
  for (int i = 0; i < 8; ++i) {
    gt.waypoints.push_back({2.0 * i, 0.0});
    pred.waypoints.push_back({2.0 * i, 1.0});
  }
  CHECK(ade(pred, gt, 8) == doctest::Approx(1.0));
  CHECK(ade(pred, gt, 4) == doctest::Approx(1.0));
  CHECK(fde(pred, gt) == doctest::Approx(1.0));
  CHECK(mde(pred, gt) == doctest::Approx(1.0));
}

TEST_CASE("degenerate inputs are errors") {
  Trajectory a = traj({{0, 0}, {1, 0}});
  Trajectory b = traj({{0, 0}});
  Trajectory empty;
  CHECK_THROWS(ade(a, b, 1));       // length mismatch
  CHECK_THROWS(ade(a, a, 3));       // k beyond length
  CHECK_THROWS(ade(a, a, 0));       // empty prefix
  CHECK_THROWS(ade(empty, empty, 0));
  CHECK_THROWS(fde(a, b));
  CHECK_THROWS(fde(empty, empty));
  CHECK_THROWS(mde(a, b));
}

TEST_CASE("metric inequalities and invariances on random trajectories") {
  Rng rng(500);
  for (int trial = 0; trial < 200; ++trial) {
    size_t n = 2 + rng.integer(10);
    Trajectory gt = random_traj(rng, n);
    Trajectory pred = random_traj(rng, n);
    double m = mde(pred, gt);
    CHECK(ade(pred, gt, n) <= m + 1e-12);
    CHECK(fde(pred, gt) <= m + 1e-12);
    CHECK(ade(pred, gt, n) >= 0.0);
    // symmetry in the two arguments
    CHECK(ade(pred, gt, n) == doctest::Approx(ade(gt, pred, n)).epsilon(1e-12));
    CHECK(mde(pred, gt) == doctest::Approx(mde(gt, pred)).epsilon(1e-12));
    // rigid motions applied to both trajectories leave everything unchanged
    Pose2D motion{{rng.uniform(-50, 50), rng.uniform(-50, 50)},
                  rng.uniform(-3.0, 3.0)};
    Trajectory gt2, pred2;
    for (auto& w : gt.waypoints) gt2.waypoints.push_back(from_ego_frame(motion, w));
    for (auto& w : pred.waypoints)
      pred2.waypoints.push_back(from_ego_frame(motion, w));
    CHECK(ade(pred2, gt2, n) == doctest::Approx(ade(pred, gt, n)).epsilon(1e-9));
    CHECK(fde(pred2, gt2) == doctest::Approx(fde(pred, gt)).epsilon(1e-9));
    CHECK(mde(pred2, gt2) == doctest::Approx(mde(pred, gt)).epsilon(1e-9));
    // per-pair distances are computed independently of waypoint order
    std::vector<size_t> perm(n);
    for (size_t i = 0; i < n; ++i) perm[i] = i;
    for (size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.integer(i)]);
    Trajectory gp, pp;
    for (size_t i : perm) {
      gp.waypoints.push_back(gt.waypoints[i]);
      pp.waypoints.push_back(pred.waypoints[i]);
    }
    CHECK(ade(pp, gp, n) == doctest::Approx(ade(pred, gt, n)).epsilon(1e-12));
    CHECK(mde(pp, gp) == doctest::Approx(mde(pred, gt)).epsilon(1e-12));
  }
}

namespace {

// A grid whose cell (r,c) class we can set directly; origin at (0,0) with
// zero heading so map point (x, y) lands in row floor(y), col floor(x).
SemanticGrid unit_grid(int side) {
  SemanticGrid g;
  g.width = g.height = side;
  g.resolution = 1.0;
  g.origin = Pose2D{};
  g.classes.assign(static_cast<size_t>(side) * side,
                   static_cast<uint8_t>(SemClass::Road));
  return g;
}

}  // namespace

TEST_CASE("dac hand case: sidewalk under a late waypoint") {
  SemanticGrid g = unit_grid(20);
  Trajectory pred;
  for (int i = 0; i < 10; ++i) pred.waypoints.push_back({1.0 * i + 0.5, 5.5});
  // waypoint index 8 sits on sidewalk
  g.at(5, 8) = static_cast<uint8_t>(SemClass::Sidewalk);
  CHECK(dac(pred, g, 10) == false);
  CHECK(dac(pred, g, 5) == true);  // first half never touches it
  g.at(5, 8) = static_cast<uint8_t>(SemClass::Vegetation);
  CHECK(dac(pred, g, 10) == false);
  g.at(5, 8) = static_cast<uint8_t>(SemClass::Crosswalk);
  CHECK(dac(pred, g, 10) == true);
}

TEST_CASE("dac treats unknown and off-grid cells as neutral") {
  SemanticGrid g = unit_grid(10);
  g.at(2, 3) = static_cast<uint8_t>(SemClass::Unknown);
  Trajectory pred = traj({{3.5, 2.5}, {100.0, 100.0}, {-5.0, 0.0}});
  CHECK(dac(pred, g, 3) == true);
  // k is clamped to the trajectory length
  CHECK(dac(pred, g, 10) == true);
}

TEST_CASE("dac agrees with a brute-force oracle on random grids") {
  Rng rng(321);
  for (int trial = 0; trial < 300; ++trial) {
    int side = 6 + static_cast<int>(rng.integer(10));
    SemanticGrid g = unit_grid(side);
    for (auto& c : g.classes)
      c = static_cast<uint8_t>(rng.integer(kNumSemClasses));
    size_t n = 1 + rng.integer(8);
    Trajectory pred;
    for (size_t i = 0; i < n; ++i)
      pred.waypoints.push_back(
          {rng.uniform(-2.0, side + 2.0), rng.uniform(-2.0, side + 2.0)});
    size_t k = 1 + rng.integer(n);
    bool expect = true;
    for (size_t i = 0; i < k; ++i) {
      double x = pred.waypoints[i].x, y = pred.waypoints[i].y;
      int c = static_cast<int>(std::floor(x));
      int r = static_cast<int>(std::floor(y));
      if (r < 0 || c < 0 || r >= side || c >= side) continue;
      uint8_t cl = g.at(r, c);
      if (cl == static_cast<uint8_t>(SemClass::Sidewalk) ||
          cl == static_cast<uint8_t>(SemClass::Vegetation))
        expect = false;
    }
    CHECK(dac(pred, g, k) == expect);
  }
}

TEST_CASE("dac_crop uses the ego-frame crop convention") {
  // 8x8 crop, D = 1: ego cell centers (x, y) with x = 4 - r - 0.5,
  // y = 4 - c - 0.5.
  GridSpec spec{1.0, 4.0, 8};
  std::vector<uint8_t> classes(64, static_cast<uint8_t>(SemClass::Road));
  auto set = [&](int r, int c, SemClass cl) {
    classes[static_cast<size_t>(r) * 8 + c] = static_cast<uint8_t>(cl);
  };
  // the cell containing ego point (2.2, -1.3): r = floor(4 - 2.2) = 1,
  // c = floor(4 + 1.3) = 5
  set(1, 5, SemClass::Sidewalk);
  Trajectory pred = traj({{2.2, -1.3}});
  CHECK(dac_crop(pred, classes, spec, 1) == false);
  set(1, 5, SemClass::Road);
  CHECK(dac_crop(pred, classes, spec, 1) == true);
  // straight ahead of the ego
  set(0, 3, SemClass::Vegetation);  // covers x in (3,4], y in (0,1]
  Trajectory ahead = traj({{3.5, 0.5}});
  CHECK(dac_crop(ahead, classes, spec, 1) == false);
  // out of crop: neutral
  Trajectory far = traj({{50.0, 0.0}});
  CHECK(dac_crop(far, classes, spec, 1) == true);
}

TEST_CASE("evaluate reports metric means over a small fixture") {
  ModelConfig c;
  c.past = 4;
  c.future = 4;
  c.crop_side = 16;
  c.crop_resolution = 1.0;
  c.horizon = 4;
  c.num_modes = 2;
  c.plan_embed = 6;
  c.scene_embed = 5;
  c.gru_hidden = 4;
  c.lstm_hidden = 3;
  CvaeModel m(c);
  m.init(1);
  for (ad::Parameter* p : m.params().all())
    std::fill(p->value.v.begin(), p->value.v.end(), 0.0);
  // zeroed model predicts the origin for every waypoint
  Dataset d;
  d.config.horizon = c.horizon;
  d.config.past = c.past;
  d.config.future = c.future;
  d.config.crop = GridSpec{1.0, 8.0, 16};
  Rng rng(7);
  double sum_ade = 0, sum_fde = 0, sum_mde = 0, sum_half = 0;
  for (int si = 0; si < 3; ++si) {
    Sample s;
    s.plan.past_count = c.past;
    s.plan.future_count = c.future;
    for (int i = 0; i < c.plan_rows(); ++i)
      s.plan.rows.push_back({rng.uniform(-3, 3), rng.uniform(-3, 3), 1.0});
    s.crop_spec = d.config.crop;
    s.scene_classes.assign(256, static_cast<uint8_t>(SemClass::Road));
    for (int i = 0; i < c.horizon; ++i)
      s.gt.waypoints.push_back({1.0 + i, 0.5 * si});
    double acc = 0, mx = 0;
    for (int i = 0; i < c.horizon; ++i) {
      double dist = std::hypot(1.0 + i, 0.5 * si);
      acc += dist;
      mx = std::max(mx, dist);
    }
    sum_ade += acc / c.horizon;
    double acc_half = 0;
    for (int i = 0; i < c.horizon / 2; ++i) acc_half += std::hypot(1.0 + i, 0.5 * si);
    sum_half += acc_half / (c.horizon / 2);
    sum_fde += std::hypot(4.0, 0.5 * si);
    sum_mde += mx;
    d.samples.push_back(std::move(s));
  }
  MetricsReport r = evaluate(m, d);
  CHECK(r.n == 3);
  CHECK(r.ade_full == doctest::Approx(sum_ade / 3).epsilon(1e-9));
  CHECK(r.ade_half == doctest::Approx(sum_half / 3).epsilon(1e-9));
  CHECK(r.fde == doctest::Approx(sum_fde / 3).epsilon(1e-9));
  CHECK(r.mde == doctest::Approx(sum_mde / 3).epsilon(1e-9));
  // all-road crops: every sample compliant
  CHECK(r.dac_full == doctest::Approx(1.0));
  CHECK(r.dac_half == doctest::Approx(1.0));

  std::string csv = report_csv(r);
  CHECK(csv.find("ade_full") != std::string::npos);
  std::string table = report_table({{"fixture", r}});
  CHECK(table.find("ADE_FULL") != std::string::npos);
  CHECK(table.find("fixture") != std::string::npos);
}
