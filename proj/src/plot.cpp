#include "plot.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "scene.hpp"

namespace gridplan {

namespace {

const char* kClassHex[kNumSemClasses] = {
    "#000000",  // Unknown
    "#808080",  // Road
    "#ffff00",  // LaneMarking
    "#ff00ff",  // Crosswalk
    "#00ff00",  // Sidewalk
    "#008000",  // Vegetation
};

const char* kFeatureHex[5] = {
    "#444444",  // padding
    "#4a90d9",  // past
    "#ffffff",  // future
    "#e03030",  // stop or signal
    "#c050ff",  // crossing
};

}  // namespace

std::string plot_sample_svg(const Sample& s, const Trajectory* pred) {
  const int L = s.crop_spec.side;
  const double D = s.crop_spec.resolution;
  const double scale = L >= 200 ? 2.0 : 8.0;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << L * scale
      << "\" height=\"" << L * scale << "\" viewBox=\"0 0 " << L << ' ' << L
      << "\">\n";
  // crop backdrop, run-length encoded per row
  for (int r = 0; r < L; ++r) {
    int c = 0;
    while (c < L) {
      uint8_t cls = s.scene_classes[size_t(r) * L + c];
      int c1 = c + 1;
      while (c1 < L && s.scene_classes[size_t(r) * L + c1] == cls) ++c1;
      if (cls != 0)
        svg << "<rect x=\"" << c << "\" y=\"" << r << "\" width=\"" << c1 - c
            << "\" height=\"1\" fill=\"" << kClassHex[cls % kNumSemClasses]
            << "\"/>\n";
      c = c1;
    }
  }
  // ego-frame point (x forward, y left) to pixel (col, row)
  auto px = [&](const LocalPoint& p) {
    return std::pair<double, double>(L / 2.0 - D * p.y, L / 2.0 - D * p.x);
  };
  auto polyline = [&](const Trajectory& tr, const char* color) {
    svg << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"0.8\" points=\"";
    for (const auto& wp : tr.waypoints) {
      auto [x, y] = px(wp);
      svg << x << ',' << y << ' ';
    }
    svg << "\"/>\n";
  };
  for (const auto& row : s.plan.rows) {
    int f = static_cast<int>(row.f);
    auto [x, y] = px({row.px, row.py});
    svg << "<circle cx=\"" << x << "\" cy=\"" << y
        << "\" r=\"1.2\" fill=\"" << kFeatureHex[f >= 0 && f < 5 ? f : 0]
        << "\"/>\n";
  }
  polyline(s.gt, "#00c000");
  if (pred) polyline(*pred, "#ff2020");
  // ego marker
  svg << "<circle cx=\"" << L / 2.0 << "\" cy=\"" << L / 2.0
      << "\" r=\"1.5\" fill=\"none\" stroke=\"#ffffff\" "
         "stroke-width=\"0.5\"/>\n";
  svg << "</svg>\n";
  return svg.str();
}

void write_plot_svg(const std::string& path, const Sample& s,
                    const Trajectory* pred) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << plot_sample_svg(s, pred);
}

}  // namespace gridplan
