#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "common.hpp"
#include "langevin.hpp"

using namespace bdm;

TEST_CASE("gaussian scores") {
    const AnalyticDensity std_normal = gaussian({0.0, 0.0}, {1.0, 1.0});
    const auto g = grad_log_density(std_normal, {0.7, -1.3});
    CHECK(g[0] == doctest::Approx(-0.7).epsilon(1e-15));
    CHECK(g[1] == doctest::Approx(1.3).epsilon(1e-15));

    const AnalyticDensity shifted = gaussian({2.0}, {0.25});
    CHECK(grad_log_density(shifted, {2.0})[0] == 0.0);

    const AnalyticDensity mix = mixture({{{-1.0}, {1.0}, 0.5}, {{1.0}, {1.0}, 0.5}});
    CHECK(grad_log_density(mix, {0.0})[0] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("scores match finite differences of the log density") {
    const AnalyticDensity mix =
        mixture({{{-0.5, 1.0}, {0.4, 2.0}, 0.3}, {{1.5, -1.0}, {1.0, 0.5}, 0.7}});
    const double h = 1e-6;
    for (const std::vector<double>& y :
         {std::vector<double>{0.0, 0.0}, {1.0, -2.0}, {-3.0, 0.5}, {0.2, 0.9}}) {
        const auto g = grad_log_density(mix, y);
        for (size_t d = 0; d < y.size(); ++d) {
            auto yp = y, ym = y;
            yp[d] += h;
            ym[d] -= h;
            const double fd = (mix.log_density(yp) - mix.log_density(ym)) / (2.0 * h);
            CHECK(std::abs(g[d] - fd) < 1e-6);
        }
    }
}

TEST_CASE("density validation") {
    CHECK_THROWS_AS(gaussian({0.0}, {0.0}), InvalidArgumentError);
    CHECK_THROWS_AS(mixture({{{0.0}, {1.0}, 0.4}, {{1.0}, {1.0}, 0.4}}), InvalidArgumentError);
    CHECK_THROWS_AS(mixture({{{0.0}, {1.0}, 0.5}, {{1.0, 2.0}, {1.0, 1.0}, 0.5}}),
                    ShapeMismatchError);
    const AnalyticDensity d = gaussian({0.0, 0.0}, {1.0, 1.0});
    CHECK_THROWS_AS(grad_log_density(d, {1.0}), ShapeMismatchError);
}

TEST_CASE("gaussian product posterior moments") {
    // prior N(0,1) x data N(2,1) -> posterior N(1, 0.5)
    LangevinConfig cfg;
    cfg.steps = 2500;
    cfg.chains = 4000;
    cfg.seed = 20240811;
    const LangevinResult r = langevin_infer(gaussian({0.0}, {1.0}), gaussian({2.0}, {1.0}), cfg);
    REQUIRE(r.n_samples >= 50000);
    CHECK(std::abs(r.mean[0] - 1.0) < 0.03);
    CHECK(std::abs(r.variance[0] - 0.5) < 0.025);
}

TEST_CASE("identical prior and data sharpen the posterior") {
    // N(mu, v) x N(mu, v) -> N(mu, v/2)
    LangevinConfig cfg;
    cfg.steps = 2500;
    cfg.chains = 3000;
    cfg.seed = 77;
    const LangevinResult r =
        langevin_infer(gaussian({2.0}, {1.0}), gaussian({2.0}, {1.0}), cfg);
    CHECK(std::abs(r.mean[0] - 2.0) < 0.03);
    CHECK(std::abs(r.variance[0] - 0.5) < 0.025);
}

TEST_CASE("zero steps returns an empty sample set") {
    LangevinConfig cfg;
    cfg.steps = 0;
    cfg.chains = 10;
    const LangevinResult r = langevin_infer(gaussian({0.0}, {1.0}), gaussian({1.0}, {1.0}), cfg);
    CHECK(r.n_samples == 0);
    CHECK(r.samples.empty());
}

TEST_CASE("determinism under a fixed seed") {
    LangevinConfig cfg;
    cfg.steps = 200;
    cfg.chains = 8;
    cfg.seed = 5;
    const LangevinResult a = langevin_infer(gaussian({0.0}, {1.0}), gaussian({2.0}, {1.0}), cfg);
    const LangevinResult b = langevin_infer(gaussian({0.0}, {1.0}), gaussian({2.0}, {1.0}), cfg);
    CHECK(a.samples == b.samples);
    CHECK(a.mean == b.mean);
}

TEST_CASE("step sizes decrease") {
    LangevinConfig cfg;
    double prev = 1e18;
    for (int t = 0; t < 1000; ++t) {
        const double eps = cfg.step_a * std::pow(cfg.step_b + t, -cfg.step_decay);
        CHECK(eps > 0.0);
        CHECK(eps < prev);
        prev = eps;
    }
}
