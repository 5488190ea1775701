#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "denoiser.hpp"
#include "fusion.hpp"
#include "langevin.hpp"
#include "metrics.hpp"
#include "toydata.hpp"

namespace bdm::harness {

struct DatasetConfig {
    int n_shapes = 1000;
    double pair_fraction = 0.1;
    int points = 128;
    uint64_t seed = 7;
    bool pairs_overlap = true;  // paired shapes reuse leading standalone shapes
    int n_test = 200;
    double jitter = kDefaultJitter;
    double hist_noise = kDefaultHistNoise;
};

struct MethodConfig {
    std::string name = "baseline";  // baseline | bdm_b | bdm_m | cfg | langevin_demo
    double guidance_w = 0.0;
};

struct EvalConfig {
    int n_eval = 64;        // test instances scored per run
    int n_eval_seeds = 10;  // initial noises for the seed-variance study
    double tau = 0.01;
    uint64_t eval_seed = 9000;  // instance i draws noise from eval_seed + i
};

struct SampleConfig {
    int n_clouds = 8;
    bool record_trajectory = false;
};

struct LangevinDemoConfig {
    LangevinConfig run;
    double prior_mean = 0.0;
    double prior_var = 1.0;
    double data_mean = 2.0;
    double data_var = 1.0;
};

struct ExperimentConfig {
    DatasetConfig dataset;
    double beta0 = 1e-4;  // desk default keeps the terminal signal level of
    double betaT = 0.08;  // the 1000-step profile by scaling both endpoints
    int timesteps = 100;
    TrainConfig prior_train;
    TrainConfig recon_train;
    TrainConfig merged_train;
    FusionSchedule fusion;
    MethodConfig method;
    EvalConfig eval;
    SampleConfig sample;
    LangevinDemoConfig langevin;
    std::string config_hash;  // FNV-1a of the canonical JSON, hex
};

struct Options {
    std::optional<uint64_t> seed_override;  // replaces dataset.seed
    int threads = 1;
    bool paper_scale_schedule = false;  // force the 1000-step timing constants
};

ExperimentConfig default_config();
ExperimentConfig parse_config(const std::string& json_text, const Options& opts);
ExperimentConfig load_config(const std::filesystem::path& path, const Options& opts);
std::string config_to_json(const ExperimentConfig& cfg);

struct Models {
    DenoiserParams prior;
    DenoiserParams recon;
    std::optional<MergedParams> merged;
};

struct EvalSummary {
    std::string method;
    double mean_cd = 0.0;
    double mean_f1 = 0.0;
    double var_cd = 0.0;
    double var_f1 = 0.0;
    std::vector<MetricsReport> rows;
};

// Scores one method over the first n_eval test instances. Instance i draws
// its trajectory noise from eval_seed + seed_shift + i, so different methods
// under the same config share initial noise and per-step draws.
EvalSummary evaluate_method(const ExperimentConfig& cfg, const MethodConfig& method,
                            const Models& models, const DatasetBundle& bundle,
                            const NoiseSchedule& sched, int threads, uint64_t seed_shift = 0,
                            const FusionSchedule* fusion_override = nullptr);

// Stage entry points used by the CLI (through the C API) and the tests.
void run_stage(const std::string& stage, const std::filesystem::path& config_path,
               const std::filesystem::path& out_dir, const Options& opts);

void stage_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void stage_train_prior(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                       int threads);
void stage_train_recon(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                       int threads);
void stage_train_merge(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                       int threads);
void stage_sample(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, int threads);
void stage_evaluate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                    int threads);
void stage_ablate_timing(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                         int threads);
void stage_ablate_duration(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                           int threads);
void stage_ablate_ratio(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                        int threads);
void stage_compare_cfg(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                       int threads);
void stage_seed_variance(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                         int threads);
void stage_langevin_demo(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
void stage_report(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

const std::vector<std::string>& stage_names();

// Ablation grids.
std::vector<std::vector<Stage>> timing_grid();          // 6 stage combinations
std::vector<int> duration_grid();                       // {0,1,2,4,8,16,32}
std::vector<double> ratio_grid();                       // {0,0.25,0.5,0.75,1}
std::vector<double> guidance_grid();                    // {0,0.5,1,2}

}  // namespace bdm::harness
