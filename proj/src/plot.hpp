#pragma once

#include <string>

#include "dataset.hpp"
#include "geo.hpp"

namespace gridplan {

// SVG rendering of one sample: the semantic crop as the backdrop, the plan
// rows colored by feature code, the ground truth in green and (optionally) a
// predicted trajectory in red. Ego is at the image center heading up.
std::string plot_sample_svg(const Sample& s, const Trajectory* pred);
void write_plot_svg(const std::string& path, const Sample& s,
                    const Trajectory* pred);

}  // namespace gridplan
