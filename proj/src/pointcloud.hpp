#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "common.hpp"

namespace bdm {

// N points in D dimensions, row-major. D is 2 for the toy shape families and
// 3 is supported throughout; denoising never changes N.
struct PointCloud {
    std::vector<double> points;  // n * dim, row-major
    int n = 0;
    int dim = 0;

    PointCloud() = default;
    PointCloud(int n_, int dim_) : points(static_cast<size_t>(n_) * dim_, 0.0), n(n_), dim(dim_) {}

    double& at(int i, int d) { return points[static_cast<size_t>(i) * dim + d]; }
    double at(int i, int d) const { return points[static_cast<size_t>(i) * dim + d]; }

    const double* row(int i) const { return points.data() + static_cast<size_t>(i) * dim; }
    double* row(int i) { return points.data() + static_cast<size_t>(i) * dim; }

    bool finite() const {
        for (double v : points) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    bool same_shape(const PointCloud& other) const { return n == other.n && dim == other.dim; }
};

inline void require_same_shape(const PointCloud& a, const PointCloud& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeMismatchError(std::string(what) + ": cloud shapes differ (" +
                                 std::to_string(a.n) + "x" + std::to_string(a.dim) + " vs " +
                                 std::to_string(b.n) + "x" + std::to_string(b.dim) + ")");
    }
}

}  // namespace bdm
