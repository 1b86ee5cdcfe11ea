#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dccl/array.hpp"
#include "dccl/errors.hpp"

namespace dccl {

// Dice coefficient for one class; 1.0 by convention when both masks are empty.
inline double dice(const LabelMask& pred, const LabelMask& gt, int cls) {
    require(pred.size() == gt.size(), "seg.bad_arguments", "mask size mismatch");
    long inter = 0, np = 0, ng = 0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        const bool p = pred.v[i] == cls;
        const bool g = gt.v[i] == cls;
        np += p;
        ng += g;
        inter += p && g;
    }
    if (np + ng == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

// Boundary pixels of one class: members that touch a different class through
// 4-adjacency or sit on the image edge.
inline std::vector<std::pair<int, int>> surface_pixels(const LabelMask& mask, int cls) {
    std::vector<std::pair<int, int>> out;
    for (int y = 0; y < mask.h; ++y) {
        for (int x = 0; x < mask.w; ++x) {
            if (mask.at(y, x) != cls) continue;
            bool boundary = (y == 0 || y == mask.h - 1 || x == 0 || x == mask.w - 1);
            if (!boundary) {
                boundary = mask.at(y - 1, x) != cls || mask.at(y + 1, x) != cls ||
                           mask.at(y, x - 1) != cls || mask.at(y, x + 1) != cls;
            }
            if (boundary) out.push_back({y, x});
        }
    }
    return out;
}

// For each point of `from`, its Euclidean distance to the nearest point of `to`.
inline std::vector<double> directed_surface_distances(const std::vector<std::pair<int, int>>& from,
                                                      const std::vector<std::pair<int, int>>& to) {
    std::vector<double> out;
    out.reserve(from.size());
    for (const auto& [ay, ax] : from) {
        double best = std::numeric_limits<double>::max();
        for (const auto& [by, bx] : to) {
            const double dy = ay - by, dx = ax - bx;
            best = std::min(best, dy * dy + dx * dx);
        }
        out.push_back(std::sqrt(best));
    }
    return out;
}

// Percentile with linear interpolation between order statistics.
inline double percentile_linear(std::vector<double> values, double q) {
    require(!values.empty(), "seg.bad_arguments", "percentile of empty set");
    std::sort(values.begin(), values.end());
    const double rank = q * (values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(rank);
    const double frac = rank - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

struct SurfaceDistances {
    double hd95 = 0.0;
    double asd = 0.0;
};

// HD95 = max of the two directed 95th percentiles; ASD = mean of all directed
// distances pooled over both directions.
inline SurfaceDistances surface_distances(const LabelMask& pred, const LabelMask& gt, int cls) {
    require(pred.size() == gt.size(), "seg.bad_arguments", "mask size mismatch");
    const auto sp = surface_pixels(pred, cls);
    const auto sg = surface_pixels(gt, cls);
    if (sp.empty() || sg.empty()) {
        throw EmptySurface("class " + std::to_string(cls) + " missing from " +
                           (sp.empty() ? "prediction" : "ground truth"));
    }
    const auto d_pg = directed_surface_distances(sp, sg);
    const auto d_gp = directed_surface_distances(sg, sp);

    SurfaceDistances out;
    out.hd95 = std::max(percentile_linear(d_pg, 0.95), percentile_linear(d_gp, 0.95));
    double sum = 0.0;
    for (double d : d_pg) sum += d;
    for (double d : d_gp) sum += d;
    out.asd = sum / static_cast<double>(d_pg.size() + d_gp.size());
    return out;
}

inline double hd95(const LabelMask& pred, const LabelMask& gt, int cls) {
    return surface_distances(pred, gt, cls).hd95;
}

inline double asd(const LabelMask& pred, const LabelMask& gt, int cls) {
    return surface_distances(pred, gt, cls).asd;
}

}  // namespace dccl
