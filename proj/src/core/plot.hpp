#pragma once

#include <string>
#include <vector>

#include "dataset.hpp"

namespace chorus {

struct PlotInput {
    std::vector<double> values;  // per-second probabilities
    double threshold = 0.0;      // drawn as a horizontal rule labeled "t"
    std::vector<Segment> truth;  // shaded ground-truth spans, seconds
};

// Probability polyline over shaded ground-truth regions, SVG output.
void plot_curve_svg(const PlotInput& in, const std::string& path);

} // namespace chorus
