#pragma once

#include <vector>

#include "pointcloud.hpp"

namespace bdm {

struct MetricsReport {
    double cd_scaled = 0.0;  // symmetric mean squared nearest distance, x 1e3
    double f1 = 0.0;
    double tau = 0.01;
    int n_pred = 0;
    int n_gt = 0;
};

// Exhaustive O(N^2) nearest-neighbor oracle: for each point of `from`, the
// Euclidean distance to its closest point in `to`.
std::vector<double> nearest_distances_brute(const PointCloud& from, const PointCloud& to);

// kd-tree accelerated version; must agree with the oracle bit for bit.
std::vector<double> nearest_distances(const PointCloud& from, const PointCloud& to);

// Mean squared nearest distance in both directions, reported x 1e3.
double chamfer(const PointCloud& pred, const PointCloud& gt);

// Harmonic mean of precision/recall at Euclidean threshold tau; 0 when both
// directions miss entirely.
double fscore(const PointCloud& pred, const PointCloud& gt, double tau = 0.01);

MetricsReport evaluate_pair(const PointCloud& pred, const PointCloud& gt, double tau = 0.01);

}  // namespace bdm
