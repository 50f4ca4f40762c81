#include "plot.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "io.hpp"

namespace chorus {

namespace {

constexpr double kMarginLeft = 40.0;
constexpr double kMarginRight = 15.0;
constexpr double kMarginTop = 15.0;
constexpr double kMarginBottom = 30.0;
constexpr double kPlotHeight = 180.0;
constexpr double kSecWidth = 8.0;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

} // namespace

void plot_curve_svg(const PlotInput& in, const std::string& path) {
    if (in.values.empty()) throw UsageError("plot: empty curve");
    const long n = static_cast<long>(in.values.size());
    const double plot_w = std::max<double>(kSecWidth * double(n - 1), kSecWidth);
    const double width = kMarginLeft + plot_w + kMarginRight;
    const double height = kMarginTop + kPlotHeight + kMarginBottom;
    auto sx = [&](double sec) { return kMarginLeft + sec * kSecWidth; };
    auto sy = [&](double p) {
        return kMarginTop + (1.0 - std::clamp(p, 0.0, 1.0)) * kPlotHeight;
    };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width)
       << "\" height=\"" << num(height) << "\" viewBox=\"0 0 " << num(width) << " "
       << num(height) << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << num(width) << "\" height=\""
       << num(height) << "\" fill=\"white\"/>\n";

    // ground truth first so the curve draws on top
    for (const auto& seg : in.truth) {
        const double a = std::clamp(seg.start, 0.0, double(n));
        const double b = std::clamp(seg.end, 0.0, double(n));
        if (b <= a) continue;
        os << "<rect class=\"truth\" x=\"" << num(sx(a)) << "\" y=\"" << num(kMarginTop)
           << "\" width=\"" << num((b - a) * kSecWidth) << "\" height=\""
           << num(kPlotHeight) << "\" fill=\"#aecbfa\" fill-opacity=\"0.6\"/>\n";
    }

    // axes
    os << "<line x1=\"" << num(kMarginLeft) << "\" y1=\"" << num(sy(0.0)) << "\" x2=\""
       << num(kMarginLeft + plot_w) << "\" y2=\"" << num(sy(0.0))
       << "\" stroke=\"#444\"/>\n";
    os << "<line x1=\"" << num(kMarginLeft) << "\" y1=\"" << num(sy(0.0)) << "\" x2=\""
       << num(kMarginLeft) << "\" y2=\"" << num(sy(1.0)) << "\" stroke=\"#444\"/>\n";

    // adaptive threshold rule
    if (std::isfinite(in.threshold)) {
        os << "<line class=\"threshold\" x1=\"" << num(kMarginLeft) << "\" y1=\""
           << num(sy(in.threshold)) << "\" x2=\"" << num(kMarginLeft + plot_w)
           << "\" y2=\"" << num(sy(in.threshold))
           << "\" stroke=\"#d93025\" stroke-dasharray=\"6,4\"/>\n";
        os << "<text x=\"" << num(kMarginLeft - 14.0) << "\" y=\""
           << num(sy(in.threshold) + 4.0) << "\" font-size=\"12\" fill=\"#d93025\">t</text>\n";
    }

    os << "<polyline fill=\"none\" stroke=\"#1a73e8\" stroke-width=\"1.5\" points=\"";
    for (long i = 0; i < n; ++i) {
        if (i) os << " ";
        os << num(sx(double(i))) << "," << num(sy(in.values[static_cast<size_t>(i)]));
    }
    os << "\"/>\n</svg>\n";
    io::write_text_file(path, os.str());
}

} // namespace chorus
