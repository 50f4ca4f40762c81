#include "postprocess.hpp"

#include <algorithm>
#include <limits>

namespace chorus {

std::vector<double> median_smooth(const std::vector<double>& y, SmoothKind kind) {
    const long n = static_cast<long>(y.size());
    std::vector<double> m = y;
    double window[9];
    // interior rule: 4 < i <= n-4 in 1-indexed terms
    for (long i = 4; i + 4 < n; ++i) {
        std::copy(y.begin() + (i - 4), y.begin() + (i + 5), window);
        std::sort(window, window + 9);
        if (kind == SmoothKind::Median) {
            m[i] = window[4];
        } else {
            double acc = 0.0;
            for (int k = 1; k < 8; ++k) acc += window[k]; // drop min and max
            m[i] = acc / 7.0;
        }
    }
    return m;
}

double adaptive_threshold(const std::vector<double>& m, ThresholdKind kind) {
    if (m.empty()) throw UsageError("adaptive_threshold: empty curve");
    const auto [lo, hi] = std::minmax_element(m.begin(), m.end());
    const double t = 0.5 * (*hi - *lo);
    return kind == ThresholdKind::Literal ? t : *lo + t;
}

BinaryMask binarize(const std::vector<double>& m, double t, double flat_guard) {
    BinaryMask out;
    out.values.assign(m.size(), 0);
    if (m.empty()) return out;
    const auto [lo, hi] = std::minmax_element(m.begin(), m.end());
    if (*hi - *lo < flat_guard) {
        out.threshold_used = std::numeric_limits<double>::infinity();
        return out;
    }
    out.threshold_used = t;
    for (size_t i = 0; i < m.size(); ++i)
        if (m[i] > t) out.values[i] = 1;
    return out;
}

std::vector<SegmentSpan> segments_from_mask(const BinaryMask& b) {
    std::vector<SegmentSpan> out;
    const long n = static_cast<long>(b.values.size());
    long i = 0;
    while (i < n) {
        if (!b.values[i]) {
            ++i;
            continue;
        }
        long j = i;
        while (j < n && b.values[j]) ++j;
        out.push_back({i, j});
        i = j;
    }
    return out;
}

BinaryMask postprocess_curve(const std::vector<double>& y, SmoothKind smooth,
                             ThresholdKind threshold) {
    auto m = median_smooth(y, smooth);
    return binarize(m, adaptive_threshold(m, threshold));
}

} // namespace chorus
