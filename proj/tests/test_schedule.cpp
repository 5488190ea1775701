#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "common.hpp"
#include "schedule.hpp"

using namespace bdm;

namespace {

// Standalone product oracle, independent of NoiseSchedule's running product.
double alpha_bar_oracle(double beta0, double betaT, int steps, int t) {
    double prod = 1.0;
    for (int s = 1; s <= t; ++s) {
        const double frac = steps > 1 ? static_cast<double>(s - 1) / (steps - 1) : 0.0;
        prod *= 1.0 - (beta0 + frac * (betaT - beta0));
    }
    return prod;
}

}  // namespace

TEST_CASE("linear schedule endpoints") {
    const NoiseSchedule s = build_linear_schedule(1e-5, 0.008, 1000);
    CHECK(s.beta[1] == doctest::Approx(1e-5).epsilon(1e-15));
    CHECK(s.beta[1000] == doctest::Approx(0.008).epsilon(1e-15));
    CHECK(s.steps == 1000);
}

TEST_CASE("single-step schedule") {
    const NoiseSchedule s = build_linear_schedule(0.01, 0.01, 1);
    REQUIRE(s.steps == 1);
    CHECK(s.beta[1] == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(s.alpha_bar[1] == doctest::Approx(0.99).epsilon(1e-15));
}

TEST_CASE("terminal alpha_bar matches the standalone product") {
    const NoiseSchedule s = build_linear_schedule(1e-5, 0.008, 1000);
    const double oracle = alpha_bar_oracle(1e-5, 0.008, 1000, 1000);
    CHECK(std::abs(s.alpha_bar[1000] - oracle) < 1e-6);
    CHECK(oracle == doctest::Approx(0.0181).epsilon(2e-3));  // 0.01802981...
}

TEST_CASE("schedule invariants") {
    const NoiseSchedule s = build_linear_schedule(1e-4, 0.08, 100);
    CHECK(s.alpha_bar[0] == 1.0);
    for (int t = 1; t <= s.steps; ++t) {
        CHECK(s.beta[t] > 0.0);
        CHECK(s.beta[t] < 1.0);
        if (t > 1) CHECK(s.beta[t] >= s.beta[t - 1]);
        CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);  // strictly decreasing
        CHECK(s.sigma[t] == doctest::Approx(std::sqrt(s.beta[t])).epsilon(1e-15));
        const double oracle = alpha_bar_oracle(1e-4, 0.08, 100, t);
        CHECK(std::abs(s.alpha_bar[t] - oracle) <= 1e-12 * oracle);
    }
}

TEST_CASE("schedule determinism") {
    const NoiseSchedule a = build_linear_schedule(1e-5, 0.008, 500);
    const NoiseSchedule b = build_linear_schedule(1e-5, 0.008, 500);
    CHECK(std::memcmp(a.beta.data(), b.beta.data(), a.beta.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.alpha_bar.data(), b.alpha_bar.data(),
                      a.alpha_bar.size() * sizeof(double)) == 0);
}

TEST_CASE("schedule rejects bad ranges") {
    CHECK_THROWS_AS(build_linear_schedule(0.0, 0.5, 10), InvalidArgumentError);
    CHECK_THROWS_AS(build_linear_schedule(0.5, 0.1, 10), InvalidArgumentError);
    CHECK_THROWS_AS(build_linear_schedule(0.1, 1.0, 10), InvalidArgumentError);
    CHECK_THROWS_AS(build_linear_schedule(1e-5, 0.008, 0), InvalidArgumentError);
}

TEST_CASE("forward_diffuse basics") {
    const NoiseSchedule s = build_linear_schedule(1e-5, 0.008, 1000);
    PointCloud y0(3, 2);
    y0.points = {1.0, 0.0, -0.5, 0.25, 2.0, -1.0};
    PointCloud noise(3, 2);
    noise.points = {0.3, -0.2, 0.1, 0.9, -1.1, 0.4};

    SUBCASE("t = 0 returns y0 exactly") {
        const PointCloud out = forward_diffuse(y0, 0, noise, s);
        CHECK(out.points == y0.points);
    }
    SUBCASE("zero signal leaves scaled noise") {
        PointCloud zero(3, 2);
        const PointCloud out = forward_diffuse(zero, 700, noise, s);
        const double spread = std::sqrt(1.0 - s.alpha_bar[700]);
        for (size_t k = 0; k < out.points.size(); ++k) {
            CHECK(out.points[k] == doctest::Approx(spread * noise.points[k]).epsilon(1e-15));
        }
    }
    SUBCASE("closed form at the terminal step") {
        PointCloud p(1, 2);
        p.points = {1.0, 0.0};
        PointCloud e(1, 2);
        e.points = {1.0, 1.0};
        const PointCloud out = forward_diffuse(p, 1000, e, s);
        const double ab = alpha_bar_oracle(1e-5, 0.008, 1000, 1000);
        CHECK(out.points[0] ==
              doctest::Approx(std::sqrt(ab) + std::sqrt(1.0 - ab)).epsilon(1e-12));
        CHECK(out.points[1] == doctest::Approx(std::sqrt(1.0 - ab)).epsilon(1e-12));
        // display-precision values: (1.1255, 0.9909)
        CHECK(out.points[0] == doctest::Approx(1.1255).epsilon(1e-3));
        CHECK(out.points[1] == doctest::Approx(0.9909).epsilon(1e-3));
    }
    SUBCASE("errors") {
        PointCloud bad(2, 2);
        CHECK_THROWS_AS(forward_diffuse(y0, 10, bad, s), ShapeMismatchError);
        CHECK_THROWS_AS(forward_diffuse(y0, -1, noise, s), OutOfRangeError);
        CHECK_THROWS_AS(forward_diffuse(y0, 1001, noise, s), OutOfRangeError);
    }
}

TEST_CASE("forward_diffuse superposition") {
    const NoiseSchedule s = build_linear_schedule(1e-4, 0.08, 100);
    rng::Sequence rng(42, rng::Stream::data);
    PointCloud a(4, 2), b(4, 2), ea(4, 2), eb(4, 2);
    for (int i = 0; i < 4; ++i) {
        // Disjoint supports make additivity exact in floating point.
        if (i % 2 == 0) {
            a.at(i, 0) = rng.normal();
            a.at(i, 1) = rng.normal();
            ea.at(i, 0) = rng.normal();
            ea.at(i, 1) = rng.normal();
        } else {
            b.at(i, 0) = rng.normal();
            b.at(i, 1) = rng.normal();
            eb.at(i, 0) = rng.normal();
            eb.at(i, 1) = rng.normal();
        }
    }
    PointCloud ab(4, 2), eab(4, 2);
    for (size_t k = 0; k < ab.points.size(); ++k) {
        ab.points[k] = a.points[k] + b.points[k];
        eab.points[k] = ea.points[k] + eb.points[k];
    }
    const PointCloud fa = forward_diffuse(a, 50, ea, s);
    const PointCloud fb = forward_diffuse(b, 50, eb, s);
    const PointCloud fab = forward_diffuse(ab, 50, eab, s);
    for (size_t k = 0; k < fab.points.size(); ++k) {
        CHECK(fab.points[k] == fa.points[k] + fb.points[k]);
    }

    // Homogeneity with a power-of-two scale is exact as well.
    PointCloud a2 = a, ea2 = ea;
    for (double& v : a2.points) v *= 2.0;
    for (double& v : ea2.points) v *= 2.0;
    const PointCloud fa2 = forward_diffuse(a2, 50, ea2, s);
    for (size_t k = 0; k < fa2.points.size(); ++k) {
        CHECK(fa2.points[k] == 2.0 * fa.points[k]);
    }
}

TEST_CASE("iterative chain matches the closed-form marginal") {
    const NoiseSchedule s = build_linear_schedule(1e-4, 0.08, 100);
    PointCloud y0(2, 2);
    y0.points = {1.0, -0.5, 0.25, 0.75};

    SUBCASE("t = 0 is the identity") {
        rng::Sequence rng(1, rng::Stream::data);
        const PointCloud out = iterative_forward_chain(y0, 0, rng, s);
        CHECK(out.points == y0.points);
    }

    SUBCASE("Monte-Carlo moments at t = T") {
        const int trials = 10000;
        const double ab = s.alpha_bar[s.steps];
        std::vector<double> mean(y0.points.size(), 0.0);
        std::vector<double> m2(y0.points.size(), 0.0);
        for (int k = 0; k < trials; ++k) {
            rng::Sequence rng(1000 + k, rng::Stream::data);
            const PointCloud out = iterative_forward_chain(y0, s.steps, rng, s);
            for (size_t j = 0; j < out.points.size(); ++j) {
                mean[j] += out.points[j];
                m2[j] += out.points[j] * out.points[j];
            }
        }
        const double sigma = std::sqrt(1.0 - ab);
        double pooled_var = 0.0;
        for (size_t j = 0; j < mean.size(); ++j) {
            mean[j] /= trials;
            const double var = m2[j] / trials - mean[j] * mean[j];
            pooled_var += var;
            const double expected_mean = std::sqrt(ab) * y0.points[j];
            CHECK(std::abs(mean[j] - expected_mean) < 3.0 * sigma / std::sqrt(trials));
            CHECK(var == doctest::Approx(1.0 - ab).epsilon(0.02));
        }
        pooled_var /= static_cast<double>(mean.size());
        CHECK(pooled_var == doctest::Approx(1.0 - ab).epsilon(0.01));
    }
}
