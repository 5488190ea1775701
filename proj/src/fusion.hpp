#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "denoiser.hpp"
#include "sampler.hpp"

namespace bdm {

enum class Stage : int { early = 0, middle = 1, late = 2 };

const char* stage_name(Stage s);
Stage stage_from_name(const std::string& name);

// When and how the prior chain interacts with the reconstruction chain.
// Stage windows partition [T, 0] at fixed fractions of T: the early window
// ends at ceil(0.872 T) and the late window starts below ceil(0.128 T), which
// reproduces 1000-872 / 872-128 / 128-0 at T = 1000. Within an active stage a
// fusion segment begins every `interval` timesteps and spans `duration`
// reverse steps, truncated at the stage floor.
struct FusionSchedule {
    int steps = 1000;            // T
    std::vector<Stage> active_stages = {Stage::early, Stage::late};
    int interval = 0;            // 0 -> ceil(0.032 T)
    int duration = 0;            // 0 -> ceil(0.016 T)
    double ratio = 0.5;          // prior take-in probability per point
    bool blend_every_step = false;

    int early_floor() const;     // lowest timestep of the early window
    int late_ceiling() const;    // highest timestep of the late window
    int effective_interval() const;
    int effective_duration() const;
    void validate() const;
};

// A fusion segment covers reverse steps t = hi down to t = lo (inclusive).
struct FusionSegment {
    int hi = 0;
    int lo = 0;
};

// Segments in execution order (descending t), non-overlapping, confined to
// the active stages.
std::vector<FusionSegment> fusion_triggers(const FusionSchedule& fs);

// Per-index Bernoulli selection between two clouds: the output point i is an
// exact copy of prior[i] with probability ratio, else recon[i]. Selection
// draws come from (seed, blend stream, step_key).
PointCloud blend(const PointCloud& y_recon, const PointCloud& y_prior, double ratio,
                 uint64_t seed, uint64_t step_key);

// Blending sampler: runs the conditional ancestral chain; at each fusion
// segment the current cloud forks, one copy advances through the prior chain
// and one through the reconstruction chain, and the two results blend into
// the cloud the main chain resumes from. With ratio 0 or no active stages the
// output is bit-identical to sample_conditional under the same seed.
PointCloud bdm_blend_sample(const DenoiserParams& prior, const DenoiserParams& recon,
                            const NoiseSchedule& sched, const FusionSchedule& fs,
                            const Condition& cond, int n_points, SamplerRun& run);

// Merging sampler: inside fusion segments the reverse step uses the merged
// network (prior encoder features injected through the trained projections);
// outside them the plain reconstruction network. A zero-initialized merge is
// bit-identical to sample_conditional under the same seed.
PointCloud bdm_merge_sample(const MergedParams& merged, const NoiseSchedule& sched,
                            const FusionSchedule& fs, const Condition& cond, int n_points,
                            SamplerRun& run);

}  // namespace bdm
