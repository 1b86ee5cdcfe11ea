#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dccl/array.hpp"
#include "dccl/errors.hpp"
#include "dccl/rng.hpp"

namespace dccl {

struct ClusterAssignment {
    std::vector<int> ids;       // N entries in [0, k)
    Mat<double> centroids;      // k x D
    double objective = 0.0;     // sum of squared distances
    int iterations = 0;
};

namespace kmeans_detail {

inline double sq_dist(const double* a, const double* b, int d) {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

}  // namespace kmeans_detail

// Lloyd's algorithm with k-means++ seeding. Deterministic given the seed;
// ties go to the lowest centroid index, empty clusters are reseeded to the
// farthest point.
inline ClusterAssignment kmeans(const Mat<double>& x, int k, std::uint64_t seed, int max_iter = 100) {
    const int n = x.rows, d = x.cols;
    if (n < k) throw TooFewPoints("kmeans: " + std::to_string(n) + " points for k=" + std::to_string(k));

    Rng rng(seed);
    ClusterAssignment out;
    out.centroids = Mat<double>(k, d);

    // k-means++ seeding
    std::vector<double> min_d(n, std::numeric_limits<double>::max());
    int first = static_cast<int>(rng.uniform_index(n));
    std::copy(x.row(first), x.row(first) + d, out.centroids.row(0));
    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            min_d[i] = std::min(min_d[i], kmeans_detail::sq_dist(x.row(i), out.centroids.row(c - 1), d));
            total += min_d[i];
        }
        int pick = 0;
        if (total > 0.0) {
            const double r = rng.uniform01() * total;
            double acc = 0.0;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                acc += min_d[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<int>(rng.uniform_index(n));
        }
        std::copy(x.row(pick), x.row(pick) + d, out.centroids.row(c));
    }

    out.ids.assign(n, 0);
    std::vector<int> counts(k, 0);
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        out.objective = 0.0;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_d = kmeans_detail::sq_dist(x.row(i), out.centroids.row(0), d);
            for (int c = 1; c < k; ++c) {
                const double dist = kmeans_detail::sq_dist(x.row(i), out.centroids.row(c), d);
                if (dist < best_d) {
                    best_d = dist;
                    best = c;
                }
            }
            if (out.ids[i] != best) {
                out.ids[i] = best;
                changed = true;
            }
            out.objective += best_d;
        }
        out.iterations = iter + 1;
        if (!changed && iter > 0) break;

        // recompute centroids
        std::fill(counts.begin(), counts.end(), 0);
        Mat<double> sums(k, d);
        for (int i = 0; i < n; ++i) {
            counts[out.ids[i]]++;
            const double* xi = x.row(i);
            double* s = sums.row(out.ids[i]);
            for (int j = 0; j < d; ++j) s[j] += xi[j];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // reseed to the point farthest from its centroid
                int far_i = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double dist =
                        kmeans_detail::sq_dist(x.row(i), out.centroids.row(out.ids[i]), d);
                    if (dist > far_d) {
                        far_d = dist;
                        far_i = i;
                    }
                }
                std::copy(x.row(far_i), x.row(far_i) + d, out.centroids.row(c));
            } else {
                double* cr = out.centroids.row(c);
                const double* s = sums.row(c);
                for (int j = 0; j < d; ++j) cr[j] = s[j] / counts[c];
            }
        }
    }
    return out;
}

// Fraction of majority-labeled members per cluster, summed over clusters.
inline double purity(const ClusterAssignment& assignment, const std::vector<int>& labels) {
    require(assignment.ids.size() == labels.size(), "latent.bad_arguments",
            "assignment/label size mismatch");
    const int n = static_cast<int>(labels.size());
    if (n == 0) return 0.0;
    const int k = assignment.centroids.rows;
    int max_label = 0;
    for (int l : labels) max_label = std::max(max_label, l);
    std::vector<std::vector<int>> table(k, std::vector<int>(max_label + 1, 0));
    for (int i = 0; i < n; ++i) table[assignment.ids[i]][labels[i]]++;
    long correct = 0;
    for (int c = 0; c < k; ++c) {
        correct += *std::max_element(table[c].begin(), table[c].end());
    }
    return static_cast<double>(correct) / n;
}

// Mean pairwise distance between class means over the mean per-class RMS
// spread. +inf when the spread is zero but the means separate.
inline double d_over_sigma(const Mat<double>& x, const std::vector<int>& labels) {
    require(static_cast<int>(labels.size()) == x.rows, "latent.bad_arguments",
            "labels/points size mismatch");
    const int d = x.cols;

    std::vector<int> classes;
    for (int l : labels) {
        if (std::find(classes.begin(), classes.end(), l) == classes.end()) classes.push_back(l);
    }
    std::sort(classes.begin(), classes.end());
    if (classes.size() < 2) throw SingleClass("d/sigma needs at least two classes");

    const int nc = static_cast<int>(classes.size());
    Mat<double> means(nc, d);
    std::vector<int> counts(nc, 0);
    auto class_index = [&](int l) {
        return static_cast<int>(std::find(classes.begin(), classes.end(), l) - classes.begin());
    };
    for (int i = 0; i < x.rows; ++i) {
        const int c = class_index(labels[i]);
        counts[c]++;
        const double* xi = x.row(i);
        double* m = means.row(c);
        for (int j = 0; j < d; ++j) m[j] += xi[j];
    }
    for (int c = 0; c < nc; ++c) {
        double* m = means.row(c);
        for (int j = 0; j < d; ++j) m[j] /= counts[c];
    }

    double dist_sum = 0.0;
    int pairs = 0;
    for (int a = 0; a < nc; ++a) {
        for (int b = a + 1; b < nc; ++b) {
            dist_sum += std::sqrt(kmeans_detail::sq_dist(means.row(a), means.row(b), d));
            pairs++;
        }
    }
    const double dist = dist_sum / pairs;

    std::vector<double> sq(nc, 0.0);
    for (int i = 0; i < x.rows; ++i) {
        const int c = class_index(labels[i]);
        sq[c] += kmeans_detail::sq_dist(x.row(i), means.row(c), d);
    }
    double sigma = 0.0;
    for (int c = 0; c < nc; ++c) sigma += std::sqrt(sq[c] / counts[c]);
    sigma /= nc;

    if (sigma == 0.0) {
        return dist > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    return dist / sigma;
}

}  // namespace dccl
