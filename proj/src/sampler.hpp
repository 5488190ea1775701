#pragma once

#include <cstdint>
#include <vector>

#include "denoiser.hpp"
#include "pointcloud.hpp"
#include "schedule.hpp"

namespace bdm {

// Sampler execution settings. All reverse-process noise is drawn from
// counter-based streams keyed by (seed, stream, timestep), so two runs with
// the same seed see the same noise at the same timestep no matter which
// sampler consumed it — the exact-equivalence tests depend on this.
struct SamplerRun {
    uint64_t seed = 0;
    bool record_trajectory = false;
    std::vector<PointCloud> trajectory;  // filled when recording, y_T first
    std::vector<PointCloud> noise_log;   // per-step z draws when recording
};

// Draws the y_T starting cloud for a run.
PointCloud initial_noise(int n_points, int dim, uint64_t seed, const NoiseSchedule& sched);

// One reverse step y_t -> y_{t-1} given a noise estimate:
//   (y_t - beta_t/sqrt(1-abar_t) * eps_hat) / sqrt(alpha_t) + sigma_t * z,
// with z = 0 at t = 1. The z draw comes from (seed, stream, t).
PointCloud ancestral_step_from(const PointCloud& y_t, const PointCloud& eps_hat, int t,
                               const NoiseSchedule& sched, uint64_t seed, rng::Stream stream,
                               PointCloud* z_out = nullptr);

PointCloud ancestral_step(const DenoiserParams& params, const PointCloud& y_t, int t,
                          const CondInput& cond, const NoiseSchedule& sched, uint64_t seed,
                          rng::Stream stream = rng::Stream::chain);

PointCloud sample_unconditional(const DenoiserParams& params, const NoiseSchedule& sched,
                                int n_points, SamplerRun& run);

PointCloud sample_conditional(const DenoiserParams& params, const NoiseSchedule& sched,
                              const Condition& cond, int n_points, SamplerRun& run);

// Classifier-free guidance: eps_hat = (1+w) * eps(cond) - w * eps(null).
// w = 0 reduces bit-exactly to sample_conditional under a shared seed.
PointCloud sample_cfg(const DenoiserParams& params, const NoiseSchedule& sched,
                      const Condition& cond, double guidance_w, int n_points, SamplerRun& run);

}  // namespace bdm
