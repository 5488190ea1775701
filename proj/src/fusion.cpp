#include "fusion.hpp"

#include <algorithm>
#include <cmath>

#include "common.hpp"

namespace bdm {

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::early: return "early";
        case Stage::middle: return "middle";
        case Stage::late: return "late";
    }
    return "unknown";
}

Stage stage_from_name(const std::string& name) {
    if (name == "early") return Stage::early;
    if (name == "middle") return Stage::middle;
    if (name == "late") return Stage::late;
    throw InvalidArgumentError("unknown fusion stage '" + name + "'");
}

int FusionSchedule::early_floor() const {
    return static_cast<int>(std::ceil(0.872 * steps));
}

int FusionSchedule::late_ceiling() const {
    return static_cast<int>(std::ceil(0.128 * steps));
}

int FusionSchedule::effective_interval() const {
    return interval > 0 ? interval : static_cast<int>(std::ceil(0.032 * steps));
}

int FusionSchedule::effective_duration() const {
    return duration > 0 ? duration : static_cast<int>(std::ceil(0.016 * steps));
}

void FusionSchedule::validate() const {
    if (steps < 1) throw InvalidArgumentError("FusionSchedule: steps must be >= 1");
    if (effective_duration() > effective_interval()) {
        throw InvalidArgumentError("FusionSchedule: duration " +
                                   std::to_string(effective_duration()) + " exceeds interval " +
                                   std::to_string(effective_interval()));
    }
    if (!(ratio >= 0.0 && ratio <= 1.0)) {
        throw InvalidArgumentError("FusionSchedule: ratio must lie in [0, 1]");
    }
    for (Stage s : active_stages) {
        if (s != Stage::early && s != Stage::middle && s != Stage::late) {
            throw InvalidArgumentError("FusionSchedule: invalid stage");
        }
    }
}

std::vector<FusionSegment> fusion_triggers(const FusionSchedule& fs) {
    fs.validate();
    const int interval = fs.effective_interval();
    const int duration = fs.effective_duration();

    // Stage windows as (floor, top]: a stage owns timesteps floor+1 .. top.
    auto window = [&fs](Stage s) -> std::pair<int, int> {
        switch (s) {
            case Stage::early: return {fs.early_floor(), fs.steps};
            case Stage::middle: return {fs.late_ceiling(), fs.early_floor()};
            case Stage::late: default: return {0, fs.late_ceiling()};
        }
    };

    std::vector<FusionSegment> segments;
    for (Stage s : {Stage::early, Stage::middle, Stage::late}) {
        if (std::find(fs.active_stages.begin(), fs.active_stages.end(), s) ==
            fs.active_stages.end()) {
            continue;
        }
        const auto [floor, top] = window(s);
        for (int start = top; start > floor; start -= interval) {
            FusionSegment seg;
            seg.hi = start;
            seg.lo = std::max(start - duration + 1, floor + 1);
            segments.push_back(seg);
        }
    }
    std::sort(segments.begin(), segments.end(),
              [](const FusionSegment& a, const FusionSegment& b) { return a.hi > b.hi; });
    return segments;
}

PointCloud blend(const PointCloud& y_recon, const PointCloud& y_prior, double ratio,
                 uint64_t seed, uint64_t step_key) {
    require_same_shape(y_recon, y_prior, "blend");
    if (!(ratio >= 0.0 && ratio <= 1.0)) {
        throw InvalidArgumentError("blend: ratio must lie in [0, 1]");
    }
    PointCloud out(y_recon.n, y_recon.dim);
    for (int i = 0; i < y_recon.n; ++i) {
        const double u = rng::uniform(seed, rng::Stream::blend, step_key, static_cast<uint64_t>(i));
        // u in (0, 1]: take the prior point iff u <= ratio, so ratio 0 never
        // selects it and ratio 1 always does.
        const double* src = (u <= ratio) ? y_prior.row(i) : y_recon.row(i);
        std::copy(src, src + out.dim, out.row(i));
    }
    return out;
}

PointCloud bdm_blend_sample(const DenoiserParams& prior, const DenoiserParams& recon,
                            const NoiseSchedule& sched, const FusionSchedule& fs,
                            const Condition& cond, int n_points, SamplerRun& run) {
    if (prior.conditional) throw InvalidArgumentError("bdm_blend_sample: prior must be unconditional");
    if (!recon.conditional) {
        throw InvalidArgumentError("bdm_blend_sample: reconstruction model must be conditional");
    }
    if (fs.steps != sched.steps) {
        throw InvalidArgumentError("bdm_blend_sample: fusion schedule is for T=" +
                                   std::to_string(fs.steps) + " but noise schedule has T=" +
                                   std::to_string(sched.steps));
    }
    const auto segments = fusion_triggers(fs);
    const CondInput ci = CondInput::of(cond);

    PointCloud y = initial_noise(n_points, recon.dim, run.seed, sched);
    size_t next_seg = 0;
    int t = sched.steps;
    while (t >= 1) {
        if (next_seg < segments.size() && segments[next_seg].hi == t) {
            const FusionSegment seg = segments[next_seg++];
            // Fork from the shared intermediate cloud. The reconstruction
            // branch consumes the same chain-stream noise the plain sampler
            // would, so a ratio-0 blend collapses to the baseline exactly.
            PointCloud y_recon = y;
            PointCloud y_prior = y;
            for (int s = seg.hi; s >= seg.lo; --s) {
                y_recon = ancestral_step(recon, y_recon, s, ci, sched, run.seed,
                                         rng::Stream::chain);
                y_prior = ancestral_step(prior, y_prior, s, CondInput::none(), sched, run.seed,
                                         rng::Stream::prior_fork);
                if (fs.blend_every_step && s > seg.lo) {
                    PointCloud mixed =
                        blend(y_recon, y_prior, fs.ratio, run.seed, static_cast<uint64_t>(s));
                    y_recon = mixed;
                    y_prior = std::move(mixed);
                }
            }
            y = blend(y_recon, y_prior, fs.ratio, run.seed, static_cast<uint64_t>(seg.lo));
            t = seg.lo - 1;
        } else {
            y = ancestral_step(recon, y, t, ci, sched, run.seed, rng::Stream::chain);
            --t;
        }
    }
    return y;
}

PointCloud bdm_merge_sample(const MergedParams& merged, const NoiseSchedule& sched,
                            const FusionSchedule& fs, const Condition& cond, int n_points,
                            SamplerRun& run) {
    if (fs.steps != sched.steps) {
        throw InvalidArgumentError("bdm_merge_sample: fusion schedule is for T=" +
                                   std::to_string(fs.steps) + " but noise schedule has T=" +
                                   std::to_string(sched.steps));
    }
    const auto segments = fusion_triggers(fs);
    const CondInput ci = CondInput::of(cond);

    PointCloud y = initial_noise(n_points, merged.recon.dim, run.seed, sched);
    size_t next_seg = 0;
    int t = sched.steps;
    while (t >= 1) {
        if (next_seg < segments.size() && segments[next_seg].hi == t) {
            const FusionSegment seg = segments[next_seg++];
            for (int s = seg.hi; s >= seg.lo; --s) {
                const PointCloud eps_hat = predict_noise_merged(merged, y, s, ci);
                y = ancestral_step_from(y, eps_hat, s, sched, run.seed, rng::Stream::chain);
            }
            t = seg.lo - 1;
        } else {
            y = ancestral_step(merged.recon, y, t, ci, sched, run.seed, rng::Stream::chain);
            --t;
        }
    }
    return y;
}

}  // namespace bdm
