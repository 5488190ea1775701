#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "common.hpp"
#include "sampler.hpp"
#include "toydata.hpp"

using namespace bdm;

namespace {

const NoiseSchedule& sched() {
    static const NoiseSchedule s = build_linear_schedule(1e-4, 0.08, 50);
    return s;
}

Condition some_condition(uint64_t seed) {
    rng::Sequence rng(seed, rng::Stream::data);
    const ShapeSpec spec = random_spec(rng);
    const PointCloud cloud = gen_shape(spec, 32, rng);
    return gen_condition(cloud, spec, rng);
}

PointCloud random_cloud(int n, int dim, uint64_t seed) {
    PointCloud c(n, dim);
    rng::Sequence rng(seed, rng::Stream::data);
    for (double& v : c.points) v = rng.normal();
    return c;
}

}  // namespace

TEST_CASE("final ancestral step adds no noise") {
    const DenoiserParams params = init_denoiser(false, 2, 3);
    const PointCloud y1 = random_cloud(16, 2, 4);
    const PointCloud a = ancestral_step(params, y1, 1, CondInput::none(), sched(), 11);
    const PointCloud b = ancestral_step(params, y1, 1, CondInput::none(), sched(), 999);
    CHECK(a.points == b.points);  // different seeds, same deterministic step
}

TEST_CASE("vanishing-beta limit leaves the cloud nearly unchanged") {
    const NoiseSchedule tiny = build_linear_schedule(1e-12, 1e-12, 3);
    DenoiserParams zero_net = init_denoiser(false, 2, 5);
    for (auto& t : zero_net.tensors()) std::fill(t.data->begin(), t.data->end(), 0.0);
    const PointCloud y = random_cloud(8, 2, 6);
    const PointCloud out = ancestral_step(zero_net, y, 1, CondInput::none(), tiny, 1);
    for (size_t k = 0; k < y.points.size(); ++k) {
        CHECK(out.points[k] == doctest::Approx(y.points[k]).epsilon(1e-9));
    }
}

TEST_CASE("ancestral step validates the timestep") {
    const DenoiserParams params = init_denoiser(false, 2, 7);
    const PointCloud y = random_cloud(8, 2, 8);
    CHECK_THROWS_AS(ancestral_step(params, y, 0, CondInput::none(), sched(), 1), OutOfRangeError);
    CHECK_THROWS_AS(ancestral_step(params, y, 51, CondInput::none(), sched(), 1),
                    OutOfRangeError);
}

TEST_CASE("sampling is reproducible under a fixed seed") {
    const DenoiserParams prior = init_denoiser(false, 2, 9);
    SamplerRun r1, r2;
    r1.seed = r2.seed = 31;
    const PointCloud a = sample_unconditional(prior, sched(), 24, r1);
    const PointCloud b = sample_unconditional(prior, sched(), 24, r2);
    CHECK(a.points == b.points);
    CHECK(a.n == 24);
    CHECK(a.dim == 2);

    SamplerRun r3;
    r3.seed = 32;
    const PointCloud c = sample_unconditional(prior, sched(), 24, r3);
    CHECK(a.points != c.points);
}

TEST_CASE("single-step schedule degenerates to one deterministic denoise") {
    const NoiseSchedule one = build_linear_schedule(0.01, 0.01, 1);
    const DenoiserParams prior = init_denoiser(false, 2, 10);
    SamplerRun run;
    run.seed = 5;
    run.record_trajectory = true;
    const PointCloud out = sample_unconditional(prior, one, 8, run);
    CHECK(run.trajectory.size() == 2);  // y_1 and y_0
    CHECK(out.finite());
}

TEST_CASE("conditional sampling requires conditional params and vice versa") {
    const DenoiserParams prior = init_denoiser(false, 2, 11);
    const DenoiserParams recon = init_denoiser(true, 2, 12);
    const Condition cond = some_condition(13);
    SamplerRun run;
    run.seed = 1;
    CHECK_THROWS_AS(sample_conditional(prior, sched(), cond, 8, run), InvalidArgumentError);
    CHECK_THROWS_AS(sample_unconditional(recon, sched(), 8, run), InvalidArgumentError);
    CHECK_THROWS_AS(sample_cfg(prior, sched(), cond, 1.0, 8, run), InvalidArgumentError);
}

TEST_CASE("recorded noise log fully determines the trajectory") {
    const DenoiserParams recon = init_denoiser(true, 2, 14);
    const Condition cond = some_condition(15);
    SamplerRun run;
    run.seed = 77;
    run.record_trajectory = true;
    const PointCloud out = sample_conditional(recon, sched(), cond, 12, run);
    REQUIRE(run.trajectory.size() == static_cast<size_t>(sched().steps) + 1);
    REQUIRE(run.noise_log.size() == static_cast<size_t>(sched().steps));

    // Replay the chain from the log without touching the counter streams.
    PointCloud y = run.trajectory.front();
    for (int t = sched().steps; t >= 1; --t) {
        const PointCloud eps_hat = predict_noise(recon, y, t, CondInput::of(cond));
        const double inv_sqrt_alpha = 1.0 / std::sqrt(sched().alpha[t]);
        const double eps_coef = sched().beta[t] / std::sqrt(1.0 - sched().alpha_bar[t]);
        const PointCloud& z = run.noise_log[sched().steps - t];
        for (size_t k = 0; k < y.points.size(); ++k) {
            double v = inv_sqrt_alpha * (y.points[k] - eps_coef * eps_hat.points[k]);
            if (t > 1) v += sched().sigma[t] * z.points[k];
            y.points[k] = v;
        }
    }
    CHECK(y.points == out.points);
}

TEST_CASE("guidance weight zero is exactly the conditional sampler") {
    const DenoiserParams recon = init_denoiser(true, 2, 16);
    const Condition cond = some_condition(17);
    SamplerRun r1, r2;
    r1.seed = r2.seed = 99;
    const PointCloud plain = sample_conditional(recon, sched(), cond, 16, r1);
    const PointCloud guided = sample_cfg(recon, sched(), cond, 0.0, 16, r2);
    CHECK(plain.points == guided.points);
}

TEST_CASE("guidance weight -1 is the pure null branch") {
    const DenoiserParams recon = init_denoiser(true, 2, 18);
    const Condition cond_a = some_condition(19);
    const Condition cond_b = some_condition(20);
    SamplerRun r1, r2;
    r1.seed = r2.seed = 123;
    // At w = -1 the conditioned branch drops out entirely, so the condition
    // value cannot matter.
    const PointCloud a = sample_cfg(recon, sched(), cond_a, -1.0, 16, r1);
    const PointCloud b = sample_cfg(recon, sched(), cond_b, -1.0, 16, r2);
    CHECK(a.points == b.points);
}

TEST_CASE("shape is preserved along the trajectory") {
    const DenoiserParams recon = init_denoiser(true, 3, 21);
    const Condition cond = some_condition(22);
    SamplerRun run;
    run.seed = 55;
    const PointCloud out = sample_conditional(recon, sched(), cond, 40, run);
    CHECK(out.n == 40);
    CHECK(out.dim == 3);
    CHECK(out.finite());
}
