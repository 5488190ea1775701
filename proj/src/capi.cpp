#include "bdm/bdm.h"

#include <cmath>
#include <cstring>
#include <string>

#include "common.hpp"
#include "denoiser.hpp"
#include "fusion.hpp"
#include "harness.hpp"
#include "langevin.hpp"
#include "metrics.hpp"
#include "sampler.hpp"
#include "schedule.hpp"
#include "serialize.hpp"

namespace {

thread_local std::string g_last_error;

template <typename Fn>
bdm_status guarded(Fn&& fn) {
    try {
        fn();
        return BDM_OK;
    } catch (const bdm::InvalidArgumentError& e) {
        g_last_error = e.what();
        return BDM_ERR_INVALID_ARGUMENT;
    } catch (const bdm::OutOfRangeError& e) {
        g_last_error = e.what();
        return BDM_ERR_OUT_OF_RANGE;
    } catch (const bdm::ShapeMismatchError& e) {
        g_last_error = e.what();
        return BDM_ERR_SHAPE_MISMATCH;
    } catch (const bdm::ConfigError& e) {
        g_last_error = e.what();
        return BDM_ERR_CONFIG;
    } catch (const bdm::MissingArtifactError& e) {
        g_last_error = e.what();
        return BDM_ERR_MISSING_ARTIFACT;
    } catch (const bdm::IoError& e) {
        g_last_error = e.what();
        return BDM_ERR_IO;
    } catch (const bdm::NumericError& e) {
        g_last_error = e.what();
        return BDM_ERR_NUMERIC;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return BDM_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return BDM_ERR_INTERNAL;
    }
}

bdm_status fail_invalid(const char* msg) {
    g_last_error = msg;
    return BDM_ERR_INVALID_ARGUMENT;
}

bdm::Condition condition_from_raw(const double* cond, size_t cond_len) {
    if (cond == nullptr) {
        throw bdm::InvalidArgumentError("condition vector is null");
    }
    return bdm::Condition::from_vector(cond, cond_len);
}

bdm::FusionSchedule fusion_from_raw(const bdm::NoiseSchedule& sched, uint32_t stage_mask,
                                    int32_t interval, int32_t duration, double ratio) {
    bdm::FusionSchedule fs;
    fs.steps = sched.steps;
    fs.active_stages.clear();
    if (stage_mask & 1u) fs.active_stages.push_back(bdm::Stage::early);
    if (stage_mask & 2u) fs.active_stages.push_back(bdm::Stage::middle);
    if (stage_mask & 4u) fs.active_stages.push_back(bdm::Stage::late);
    fs.interval = interval;
    fs.duration = duration;
    fs.ratio = ratio;
    fs.validate();
    return fs;
}

}  // namespace

struct bdm_schedule_s {
    bdm::NoiseSchedule impl;
};

struct bdm_cloud_s {
    bdm::PointCloud impl;
};

struct bdm_params_s {
    bdm::DenoiserParams impl;
};

struct bdm_merged_s {
    bdm::MergedParams impl;
};

extern "C" {

const char* bdm_version(void) { return bdm::kVersion; }

const char* bdm_status_name(bdm_status status) {
    switch (status) {
        case BDM_OK: return "ok";
        case BDM_ERR_INVALID_ARGUMENT: return "invalid-argument";
        case BDM_ERR_OUT_OF_RANGE: return "out-of-range";
        case BDM_ERR_SHAPE_MISMATCH: return "shape-mismatch";
        case BDM_ERR_CONFIG: return "config";
        case BDM_ERR_MISSING_ARTIFACT: return "missing-artifact";
        case BDM_ERR_IO: return "io";
        case BDM_ERR_NUMERIC: return "numeric";
        case BDM_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* bdm_last_error(void) { return g_last_error.c_str(); }

bdm_status bdm_schedule_create(double beta0, double betaT, int32_t steps, bdm_schedule** out) {
    if (out == nullptr) return fail_invalid("output pointer is null");
    *out = nullptr;
    return guarded([&]() {
        *out = new bdm_schedule_s{bdm::build_linear_schedule(beta0, betaT, steps)};
    });
}

void bdm_schedule_free(bdm_schedule* sched) { delete sched; }

int32_t bdm_schedule_steps(const bdm_schedule* sched) {
    return sched == nullptr ? -1 : sched->impl.steps;
}

double bdm_schedule_beta(const bdm_schedule* sched, int32_t t) {
    if (sched == nullptr || t < 1 || t > sched->impl.steps) return std::nan("");
    return sched->impl.beta[t];
}

double bdm_schedule_alpha_bar(const bdm_schedule* sched, int32_t t) {
    if (sched == nullptr || t < 0 || t > sched->impl.steps) return std::nan("");
    return sched->impl.alpha_bar[t];
}

double bdm_schedule_sigma(const bdm_schedule* sched, int32_t t) {
    if (sched == nullptr || t < 1 || t > sched->impl.steps) return std::nan("");
    return sched->impl.sigma[t];
}

bdm_status bdm_cloud_create(const double* coords, int32_t n_points, int32_t dim,
                            bdm_cloud** out) {
    if (out == nullptr) return fail_invalid("output pointer is null");
    *out = nullptr;
    if (coords == nullptr) return fail_invalid("coordinate pointer is null");
    if (n_points < 1 || dim < 1) return fail_invalid("need n_points >= 1 and dim >= 1");
    return guarded([&]() {
        bdm::PointCloud cloud(n_points, dim);
        std::memcpy(cloud.points.data(), coords,
                    static_cast<size_t>(n_points) * dim * sizeof(double));
        *out = new bdm_cloud_s{std::move(cloud)};
    });
}

void bdm_cloud_free(bdm_cloud* cloud) { delete cloud; }

int32_t bdm_cloud_points(const bdm_cloud* cloud) { return cloud == nullptr ? -1 : cloud->impl.n; }

int32_t bdm_cloud_dim(const bdm_cloud* cloud) { return cloud == nullptr ? -1 : cloud->impl.dim; }

bdm_status bdm_cloud_copy(const bdm_cloud* cloud, double* dst, size_t capacity) {
    if (cloud == nullptr || dst == nullptr) return fail_invalid("null argument");
    if (capacity < cloud->impl.points.size()) {
        return fail_invalid("destination buffer too small");
    }
    std::memcpy(dst, cloud->impl.points.data(), cloud->impl.points.size() * sizeof(double));
    return BDM_OK;
}

bdm_status bdm_cloud_load_xyz(const char* path, bdm_cloud** out) {
    if (out == nullptr || path == nullptr) return fail_invalid("null argument");
    *out = nullptr;
    return guarded([&]() { *out = new bdm_cloud_s{bdm::load_xyz(path)}; });
}

bdm_status bdm_cloud_save_xyz(const bdm_cloud* cloud, const char* path) {
    if (cloud == nullptr || path == nullptr) return fail_invalid("null argument");
    return guarded([&]() { bdm::save_xyz(cloud->impl, path); });
}

bdm_status bdm_chamfer(const bdm_cloud* pred, const bdm_cloud* gt, double* out) {
    if (pred == nullptr || gt == nullptr || out == nullptr) return fail_invalid("null argument");
    return guarded([&]() { *out = bdm::chamfer(pred->impl, gt->impl); });
}

bdm_status bdm_fscore(const bdm_cloud* pred, const bdm_cloud* gt, double tau, double* out) {
    if (pred == nullptr || gt == nullptr || out == nullptr) return fail_invalid("null argument");
    return guarded([&]() { *out = bdm::fscore(pred->impl, gt->impl, tau); });
}

bdm_status bdm_params_load(const char* path, bdm_params** out) {
    if (out == nullptr || path == nullptr) return fail_invalid("null argument");
    *out = nullptr;
    return guarded([&]() { *out = new bdm_params_s{bdm::load_params(path)}; });
}

void bdm_params_free(bdm_params* params) { delete params; }

int32_t bdm_params_conditional(const bdm_params* params) {
    return params == nullptr ? -1 : (params->impl.conditional ? 1 : 0);
}

bdm_status bdm_merged_load(const char* path, bdm_merged** out) {
    if (out == nullptr || path == nullptr) return fail_invalid("null argument");
    *out = nullptr;
    return guarded([&]() { *out = new bdm_merged_s{bdm::load_merged(path)}; });
}

void bdm_merged_free(bdm_merged* merged) { delete merged; }

bdm_status bdm_sample_unconditional(const bdm_params* prior, const bdm_schedule* sched,
                                    int32_t n_points, uint64_t seed, bdm_cloud** out) {
    if (prior == nullptr || sched == nullptr || out == nullptr) {
        return fail_invalid("null argument");
    }
    *out = nullptr;
    return guarded([&]() {
        bdm::SamplerRun run;
        run.seed = seed;
        *out = new bdm_cloud_s{
            bdm::sample_unconditional(prior->impl, sched->impl, n_points, run)};
    });
}

bdm_status bdm_sample_conditional(const bdm_params* recon, const bdm_schedule* sched,
                                  const double* cond, size_t cond_len, int32_t n_points,
                                  uint64_t seed, bdm_cloud** out) {
    if (recon == nullptr || sched == nullptr || out == nullptr) {
        return fail_invalid("null argument");
    }
    *out = nullptr;
    return guarded([&]() {
        const bdm::Condition c = condition_from_raw(cond, cond_len);
        bdm::SamplerRun run;
        run.seed = seed;
        *out = new bdm_cloud_s{
            bdm::sample_conditional(recon->impl, sched->impl, c, n_points, run)};
    });
}

bdm_status bdm_sample_guided(const bdm_params* recon, const bdm_schedule* sched,
                             const double* cond, size_t cond_len, double guidance_w,
                             int32_t n_points, uint64_t seed, bdm_cloud** out) {
    if (recon == nullptr || sched == nullptr || out == nullptr) {
        return fail_invalid("null argument");
    }
    *out = nullptr;
    return guarded([&]() {
        const bdm::Condition c = condition_from_raw(cond, cond_len);
        bdm::SamplerRun run;
        run.seed = seed;
        *out = new bdm_cloud_s{
            bdm::sample_cfg(recon->impl, sched->impl, c, guidance_w, n_points, run)};
    });
}

bdm_status bdm_sample_blend(const bdm_params* prior, const bdm_params* recon,
                            const bdm_schedule* sched, uint32_t stage_mask, int32_t interval,
                            int32_t duration, double ratio, const double* cond, size_t cond_len,
                            int32_t n_points, uint64_t seed, bdm_cloud** out) {
    if (prior == nullptr || recon == nullptr || sched == nullptr || out == nullptr) {
        return fail_invalid("null argument");
    }
    *out = nullptr;
    return guarded([&]() {
        const bdm::Condition c = condition_from_raw(cond, cond_len);
        const bdm::FusionSchedule fs =
            fusion_from_raw(sched->impl, stage_mask, interval, duration, ratio);
        bdm::SamplerRun run;
        run.seed = seed;
        *out = new bdm_cloud_s{bdm::bdm_blend_sample(prior->impl, recon->impl, sched->impl, fs,
                                                     c, n_points, run)};
    });
}

bdm_status bdm_sample_merge(const bdm_merged* merged, const bdm_schedule* sched,
                            uint32_t stage_mask, int32_t interval, int32_t duration,
                            const double* cond, size_t cond_len, int32_t n_points, uint64_t seed,
                            bdm_cloud** out) {
    if (merged == nullptr || sched == nullptr || out == nullptr) {
        return fail_invalid("null argument");
    }
    *out = nullptr;
    return guarded([&]() {
        const bdm::Condition c = condition_from_raw(cond, cond_len);
        const bdm::FusionSchedule fs =
            fusion_from_raw(sched->impl, stage_mask, interval, duration, 0.5);
        bdm::SamplerRun run;
        run.seed = seed;
        *out = new bdm_cloud_s{
            bdm::bdm_merge_sample(merged->impl, sched->impl, fs, c, n_points, run)};
    });
}

bdm_status bdm_langevin_gaussian_product(double prior_mean, double prior_var, double data_mean,
                                         double data_var, int32_t steps, int32_t chains,
                                         uint64_t seed, double* mean_out, double* var_out) {
    if (mean_out == nullptr || var_out == nullptr) return fail_invalid("null argument");
    return guarded([&]() {
        bdm::LangevinConfig cfg;
        cfg.steps = steps;
        cfg.chains = chains;
        cfg.seed = seed;
        const bdm::LangevinResult r = bdm::langevin_infer(
            bdm::gaussian({prior_mean}, {prior_var}), bdm::gaussian({data_mean}, {data_var}), cfg);
        *mean_out = r.mean.empty() ? 0.0 : r.mean[0];
        *var_out = r.variance.empty() ? 0.0 : r.variance[0];
    });
}

bdm_status bdm_run_stage(const char* stage, const char* config_path, const char* out_dir,
                         int32_t threads, int64_t seed_override, int32_t paper_scale_schedule) {
    if (stage == nullptr || config_path == nullptr || out_dir == nullptr) {
        return fail_invalid("null argument");
    }
    return guarded([&]() {
        bdm::harness::Options opts;
        opts.threads = threads < 1 ? 1 : threads;
        if (seed_override >= 0) opts.seed_override = static_cast<uint64_t>(seed_override);
        opts.paper_scale_schedule = paper_scale_schedule != 0;
        bdm::harness::run_stage(stage, config_path, out_dir, opts);
    });
}

size_t bdm_default_config(char* dst, size_t capacity) {
    const std::string body = bdm::harness::config_to_json(bdm::harness::default_config());
    if (dst != nullptr && capacity > 0) {
        const size_t n = std::min(capacity - 1, body.size());
        std::memcpy(dst, body.data(), n);
        dst[n] = '\0';
    }
    return body.size();
}

}  // extern "C"
