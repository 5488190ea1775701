#include "sampler.hpp"

#include <cmath>
#include <string>

#include "common.hpp"

namespace bdm {

namespace {

void check_finite(const PointCloud& y, int t) {
    if (!y.finite()) {
        throw NumericError("sampler: non-finite cloud at timestep " + std::to_string(t));
    }
}

PointCloud run_chain(const DenoiserParams& params, const NoiseSchedule& sched,
                     const CondInput& cond, double guidance_w, bool use_guidance, int n_points,
                     SamplerRun& run) {
    PointCloud y = initial_noise(n_points, params.dim, run.seed, sched);
    if (run.record_trajectory) {
        run.trajectory.clear();
        run.noise_log.clear();
        run.trajectory.push_back(y);
    }
    for (int t = sched.steps; t >= 1; --t) {
        PointCloud eps_hat;
        if (use_guidance) {
            const PointCloud ec = predict_noise(params, y, t, cond);
            const PointCloud eu = predict_noise(params, y, t, CondInput::null_token());
            eps_hat = PointCloud(y.n, y.dim);
            for (size_t k = 0; k < eps_hat.points.size(); ++k) {
                eps_hat.points[k] = (1.0 + guidance_w) * ec.points[k] - guidance_w * eu.points[k];
            }
        } else {
            eps_hat = predict_noise(params, y, t, cond);
        }
        PointCloud z;
        y = ancestral_step_from(y, eps_hat, t, sched, run.seed, rng::Stream::chain,
                                run.record_trajectory ? &z : nullptr);
        check_finite(y, t);
        if (run.record_trajectory) {
            run.trajectory.push_back(y);
            run.noise_log.push_back(std::move(z));
        }
    }
    return y;
}

}  // namespace

PointCloud initial_noise(int n_points, int dim, uint64_t seed, const NoiseSchedule& sched) {
    PointCloud y(n_points, dim);
    for (size_t k = 0; k < y.points.size(); ++k) {
        y.points[k] = rng::normal(seed, rng::Stream::init, static_cast<uint64_t>(sched.steps) + 1, k);
    }
    return y;
}

PointCloud ancestral_step_from(const PointCloud& y_t, const PointCloud& eps_hat, int t,
                               const NoiseSchedule& sched, uint64_t seed, rng::Stream stream,
                               PointCloud* z_out) {
    if (t < 1 || t > sched.steps) {
        throw OutOfRangeError("ancestral_step: timestep " + std::to_string(t) + " outside [1, " +
                              std::to_string(sched.steps) + "]");
    }
    require_same_shape(y_t, eps_hat, "ancestral_step");

    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha[t]);
    const double eps_coef = sched.beta[t] / std::sqrt(1.0 - sched.alpha_bar[t]);
    const double sigma = sched.sigma[t];

    PointCloud out(y_t.n, y_t.dim);
    if (z_out != nullptr) *z_out = PointCloud(y_t.n, y_t.dim);
    for (size_t k = 0; k < out.points.size(); ++k) {
        double v = inv_sqrt_alpha * (y_t.points[k] - eps_coef * eps_hat.points[k]);
        if (t > 1) {
            const double z = rng::normal(seed, stream, static_cast<uint64_t>(t), k);
            v += sigma * z;
            if (z_out != nullptr) z_out->points[k] = z;
        }
        out.points[k] = v;
    }
    check_finite(out, t);
    return out;
}

PointCloud ancestral_step(const DenoiserParams& params, const PointCloud& y_t, int t,
                          const CondInput& cond, const NoiseSchedule& sched, uint64_t seed,
                          rng::Stream stream) {
    const PointCloud eps_hat = predict_noise(params, y_t, t, cond);
    return ancestral_step_from(y_t, eps_hat, t, sched, seed, stream);
}

PointCloud sample_unconditional(const DenoiserParams& params, const NoiseSchedule& sched,
                                int n_points, SamplerRun& run) {
    if (params.conditional) {
        throw InvalidArgumentError("sample_unconditional: params are conditional");
    }
    return run_chain(params, sched, CondInput::none(), 0.0, false, n_points, run);
}

PointCloud sample_conditional(const DenoiserParams& params, const NoiseSchedule& sched,
                              const Condition& cond, int n_points, SamplerRun& run) {
    if (!params.conditional) {
        throw InvalidArgumentError("sample_conditional: params are unconditional");
    }
    return run_chain(params, sched, CondInput::of(cond), 0.0, false, n_points, run);
}

PointCloud sample_cfg(const DenoiserParams& params, const NoiseSchedule& sched,
                      const Condition& cond, double guidance_w, int n_points, SamplerRun& run) {
    if (!params.conditional) {
        throw InvalidArgumentError("sample_cfg: params are unconditional");
    }
    if (params.null_embed.empty()) {
        throw InvalidArgumentError("sample_cfg: params lack a null embedding");
    }
    return run_chain(params, sched, CondInput::of(cond), guidance_w, true, n_points, run);
}

}  // namespace bdm
