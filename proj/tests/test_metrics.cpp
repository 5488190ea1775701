#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "common.hpp"
#include "metrics.hpp"
#include "rng.hpp"

using namespace bdm;

namespace {

PointCloud random_cloud(int n, int dim, uint64_t seed) {
    PointCloud c(n, dim);
    rng::Sequence rng(seed, rng::Stream::data);
    for (double& v : c.points) v = rng.normal();
    return c;
}

}  // namespace

TEST_CASE("chamfer hand-computed cases") {
    PointCloud a(1, 2), b(1, 2);
    a.points = {0.0, 0.0};
    b.points = {3.0, 4.0};
    // squared nearest distance 25 in both directions, scaled by 1e3
    CHECK(chamfer(a, b) == doctest::Approx(50000.0).epsilon(1e-12));
    CHECK(chamfer(a, a) == 0.0);
}

TEST_CASE("chamfer symmetry and nonnegativity") {
    for (uint64_t seed = 0; seed < 20; ++seed) {
        const PointCloud a = random_cloud(33, 2, seed * 2 + 1);
        const PointCloud b = random_cloud(57, 2, seed * 2 + 2);
        const double ab = chamfer(a, b);
        CHECK(ab >= 0.0);
        CHECK(ab == chamfer(b, a));
    }
}

TEST_CASE("fscore hand-computed cases") {
    PointCloud a(1, 2), b(1, 2);
    a.points = {0.0, 0.0};

    b.points = {0.0, 0.005};
    CHECK(fscore(a, b, 0.01) == 1.0);

    b.points = {1.0, 1.0};
    CHECK(fscore(a, b, 0.01) == 0.0);

    CHECK(fscore(a, a, 0.01) == 1.0);
}

TEST_CASE("fscore monotone in tau and bounded") {
    const PointCloud a = random_cloud(64, 2, 5);
    const PointCloud b = random_cloud(64, 2, 6);
    double prev = -1.0;
    for (double tau : {0.01, 0.05, 0.1, 0.5, 1.0, 4.0}) {
        const double f = fscore(a, b, tau);
        CHECK(f >= 0.0);
        CHECK(f <= 1.0);
        CHECK(f >= prev);
        prev = f;
    }
    CHECK(prev == 1.0);  // far beyond the cloud extent everything matches
}

TEST_CASE("accelerated nearest neighbors equal brute force exactly") {
    rng::Sequence sizes(99, rng::Stream::data);
    for (int trial = 0; trial < 1000; ++trial) {
        const int dim = (trial % 2 == 0) ? 2 : 3;
        const int na = 1 + static_cast<int>(sizes.below(40));
        const int nb = 1 + static_cast<int>(sizes.below(40));
        const PointCloud a = random_cloud(na, dim, 10000 + trial);
        const PointCloud b = random_cloud(nb, dim, 20000 + trial);
        const auto brute = nearest_distances_brute(a, b);
        const auto fast = nearest_distances(a, b);
        REQUIRE(brute.size() == fast.size());
        for (size_t i = 0; i < brute.size(); ++i) {
            CHECK(brute[i] == fast[i]);  // bitwise agreement
        }
    }
}

TEST_CASE("nearest distance values") {
    PointCloud a(2, 2), b(3, 2);
    a.points = {0.0, 0.0, 10.0, 0.0};
    b.points = {3.0, 4.0, 9.0, 0.0, -1.0, -1.0};
    const auto d = nearest_distances_brute(a, b);
    CHECK(d[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(d[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("metrics invariant under shared rigid motion") {
    const PointCloud a = random_cloud(48, 2, 77);
    const PointCloud b = random_cloud(48, 2, 78);
    const double theta = 0.7;
    const double tx = 0.3, ty = -1.2;
    auto transform = [&](const PointCloud& c) {
        PointCloud out(c.n, c.dim);
        for (int i = 0; i < c.n; ++i) {
            const double x = c.at(i, 0), y = c.at(i, 1);
            out.at(i, 0) = std::cos(theta) * x - std::sin(theta) * y + tx;
            out.at(i, 1) = std::sin(theta) * x + std::cos(theta) * y + ty;
        }
        return out;
    };
    const PointCloud ta = transform(a), tb = transform(b);
    CHECK(chamfer(ta, tb) == doctest::Approx(chamfer(a, b)).epsilon(1e-9));
    CHECK(fscore(ta, tb, 0.5) == doctest::Approx(fscore(a, b, 0.5)).epsilon(1e-9));
}

TEST_CASE("empty clouds and bad tau are rejected") {
    PointCloud empty;
    PointCloud one(1, 2);
    one.points = {0.0, 0.0};
    CHECK_THROWS_AS(chamfer(empty, one), InvalidArgumentError);
    CHECK_THROWS_AS(fscore(one, empty), InvalidArgumentError);
    CHECK_THROWS_AS(nearest_distances_brute(empty, one), InvalidArgumentError);
    CHECK_THROWS_AS(fscore(one, one, 0.0), InvalidArgumentError);
    PointCloud three_d(1, 3);
    three_d.points = {0.0, 0.0, 0.0};
    CHECK_THROWS_AS(chamfer(one, three_d), ShapeMismatchError);
}

TEST_CASE("evaluate_pair carries the reporting convention") {
    PointCloud a(1, 2), b(1, 2);
    a.points = {0.0, 0.0};
    b.points = {3.0, 4.0};
    const MetricsReport r = evaluate_pair(a, b, 0.01);
    CHECK(r.cd_scaled == doctest::Approx(50000.0).epsilon(1e-12));
    CHECK(r.f1 == 0.0);
    CHECK(r.tau == 0.01);
    CHECK(r.n_pred == 1);
    CHECK(r.n_gt == 1);
}
