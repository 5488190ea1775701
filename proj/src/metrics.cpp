#include "metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "common.hpp"

namespace bdm {

namespace {

void check_pair(const PointCloud& a, const PointCloud& b, const char* what) {
    if (a.n == 0 || b.n == 0) {
        throw InvalidArgumentError(std::string(what) + ": empty point cloud");
    }
    if (a.dim != b.dim) {
        throw ShapeMismatchError(std::string(what) + ": dimensionality differs (" +
                                 std::to_string(a.dim) + " vs " + std::to_string(b.dim) + ")");
    }
}

double sq_dist(const double* a, const double* b, int dim) {
    double acc = 0.0;
    for (int d = 0; d < dim; ++d) {
        const double r = a[d] - b[d];
        acc += r * r;
    }
    return acc;
}

// Median-split kd-tree over the `to` cloud. Queries prune on the squared
// splitting-plane distance, so the returned minimum is exact.
class KdTree {
public:
    explicit KdTree(const PointCloud& cloud) : cloud_(cloud) {
        index_.resize(cloud.n);
        std::iota(index_.begin(), index_.end(), 0);
        nodes_.reserve(2 * cloud.n);
        root_ = build(0, cloud.n, 0);
    }

    double nearest_sq(const double* q) const {
        double best = std::numeric_limits<double>::infinity();
        search(root_, q, best);
        return best;
    }

private:
    struct Node {
        int point = -1;
        int axis = 0;
        int left = -1;
        int right = -1;
    };

    int build(int lo, int hi, int depth) {
        if (lo >= hi) return -1;
        const int axis = depth % cloud_.dim;
        const int mid = (lo + hi) / 2;
        std::nth_element(index_.begin() + lo, index_.begin() + mid, index_.begin() + hi,
                         [&](int a, int b) { return cloud_.at(a, axis) < cloud_.at(b, axis); });
        Node node;
        node.point = index_[mid];
        node.axis = axis;
        const int self = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        nodes_[self].left = build(lo, mid, depth + 1);
        nodes_[self].right = build(mid + 1, hi, depth + 1);
        return self;
    }

    void search(int id, const double* q, double& best) const {
        if (id < 0) return;
        const Node& node = nodes_[id];
        best = std::min(best, sq_dist(q, cloud_.row(node.point), cloud_.dim));
        const double delta = q[node.axis] - cloud_.at(node.point, node.axis);
        const int near = delta < 0.0 ? node.left : node.right;
        const int far = delta < 0.0 ? node.right : node.left;
        search(near, q, best);
        if (delta * delta <= best) search(far, q, best);
    }

    const PointCloud& cloud_;
    std::vector<int> index_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

double mean_sq_nearest(const PointCloud& from, const PointCloud& to) {
    const KdTree tree(to);
    double acc = 0.0;
    for (int i = 0; i < from.n; ++i) acc += tree.nearest_sq(from.row(i));
    return acc / from.n;
}

}  // namespace

std::vector<double> nearest_distances_brute(const PointCloud& from, const PointCloud& to) {
    check_pair(from, to, "nearest_distances_brute");
    std::vector<double> out(from.n);
    for (int i = 0; i < from.n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < to.n; ++j) {
            best = std::min(best, sq_dist(from.row(i), to.row(j), from.dim));
        }
        out[i] = std::sqrt(best);
    }
    return out;
}

std::vector<double> nearest_distances(const PointCloud& from, const PointCloud& to) {
    check_pair(from, to, "nearest_distances");
    const KdTree tree(to);
    std::vector<double> out(from.n);
    for (int i = 0; i < from.n; ++i) out[i] = std::sqrt(tree.nearest_sq(from.row(i)));
    return out;
}

double chamfer(const PointCloud& pred, const PointCloud& gt) {
    check_pair(pred, gt, "chamfer");
    return (mean_sq_nearest(pred, gt) + mean_sq_nearest(gt, pred)) * 1e3;
}

double fscore(const PointCloud& pred, const PointCloud& gt, double tau) {
    check_pair(pred, gt, "fscore");
    if (!(tau > 0.0)) throw InvalidArgumentError("fscore: tau must be positive");
    const double tau_sq = tau * tau;

    const KdTree gt_tree(gt);
    int hit_pred = 0;
    for (int i = 0; i < pred.n; ++i) {
        if (gt_tree.nearest_sq(pred.row(i)) <= tau_sq) ++hit_pred;
    }
    const KdTree pred_tree(pred);
    int hit_gt = 0;
    for (int j = 0; j < gt.n; ++j) {
        if (pred_tree.nearest_sq(gt.row(j)) <= tau_sq) ++hit_gt;
    }
    const double precision = static_cast<double>(hit_pred) / pred.n;
    const double recall = static_cast<double>(hit_gt) / gt.n;
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

MetricsReport evaluate_pair(const PointCloud& pred, const PointCloud& gt, double tau) {
    MetricsReport r;
    r.cd_scaled = chamfer(pred, gt);
    r.f1 = fscore(pred, gt, tau);
    r.tau = tau;
    r.n_pred = pred.n;
    r.n_gt = gt.n;
    return r;
}

}  // namespace bdm
