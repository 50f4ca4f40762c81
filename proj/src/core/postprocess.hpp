#pragma once

#include <cstdint>
#include <vector>

#include "common.hpp"

namespace chorus {

enum class SmoothKind { Median, TrimmedMean };
enum class ThresholdKind { Literal, Midpoint };

struct BinaryMask {
    std::vector<uint8_t> values;
    double threshold_used = 0.0; // +inf when the flat-curve guard fired
};

struct SegmentSpan {
    long start = 0; // seconds, inclusive
    long end = 0;   // seconds, exclusive
};

// 9-sample window statistic applied to interior points only; the first and
// last four samples pass through unchanged.
std::vector<double> median_smooth(const std::vector<double>& y,
                                  SmoothKind kind = SmoothKind::Median);

// Literal rule: t = 0.5 * (max - min). Midpoint adds the min back.
double adaptive_threshold(const std::vector<double>& m,
                          ThresholdKind kind = ThresholdKind::Literal);

// 1 where m[i] > t. Curves with range below flat_guard binarize to all
// zeros, with threshold_used set to +inf to mark the guard.
BinaryMask binarize(const std::vector<double>& m, double t,
                    double flat_guard = 0.05);

std::vector<SegmentSpan> segments_from_mask(const BinaryMask& b);

// smooth + adaptive threshold + binarize in one call.
BinaryMask postprocess_curve(const std::vector<double>& y,
                             SmoothKind smooth = SmoothKind::Median,
                             ThresholdKind threshold = ThresholdKind::Literal);

} // namespace chorus
