#include "harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "common.hpp"
#include "sampler.hpp"
#include "serialize.hpp"

namespace bdm::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

// Keys beginning with '#' are comments; anything else unknown is an error.
void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        const std::string& key = it.key();
        if (!key.empty() && key[0] == '#') continue;
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&key](const char* a) { return key == a; }) == allowed.end()) {
            throw ConfigError("config: unknown key '" + where + key + "'");
        }
    }
}

template <typename T>
void read_key(const json& obj, const char* key, const std::string& where, T& out) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: key '" + where + key + "' has the wrong type");
    }
}

void parse_train_section(const json& obj, const std::string& where, TrainConfig& out) {
    check_keys(obj, where,
               {"steps", "lr", "lr_floor", "warmup_frac", "batch", "seed", "cond_dropout"});
    read_key(obj, "steps", where, out.steps);
    read_key(obj, "lr", where, out.lr);
    read_key(obj, "lr_floor", where, out.lr_floor);
    read_key(obj, "warmup_frac", where, out.warmup_frac);
    read_key(obj, "batch", where, out.batch);
    read_key(obj, "seed", where, out.seed);
    read_key(obj, "cond_dropout", where, out.cond_dropout);
    if (out.steps < 0 || out.batch < 1) {
        throw ConfigError("config: '" + where + "steps/batch' out of range");
    }
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// ---------------------------------------------------------------------------
// Output helpers
// ---------------------------------------------------------------------------

std::string provenance_line(const ExperimentConfig& cfg) {
    return std::string("bdm ") + kVersion + " config " + cfg.config_hash;
}

void write_json_output(const ExperimentConfig& cfg, const fs::path& path, json body) {
    body["version"] = kVersion;
    body["config_hash"] = cfg.config_hash;
    write_text_file(path, body.dump(2) + "\n");
}

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void write_table(const ExperimentConfig& cfg, const fs::path& base, const Table& table,
                 const std::string& title) {
    // CSV with a provenance comment line.
    std::ostringstream csv;
    csv << "# " << provenance_line(cfg) << "\n";
    for (size_t c = 0; c < table.columns.size(); ++c) {
        if (c > 0) csv << ',';
        csv << table.columns[c];
    }
    csv << '\n';
    for (const auto& row : table.rows) {
        for (size_t c = 0; c < row.size(); ++c) {
            if (c > 0) csv << ',';
            csv << row[c];
        }
        csv << '\n';
    }
    write_text_file(fs::path(base).replace_extension(".csv"), csv.str());

    json jrows = json::array();
    for (const auto& row : table.rows) {
        json r = json::object();
        for (size_t c = 0; c < row.size(); ++c) r[table.columns[c]] = row[c];
        jrows.push_back(std::move(r));
    }
    write_json_output(cfg, fs::path(base).replace_extension(".json"),
                      json{{"title", title}, {"rows", jrows}});

    // Human-readable summary.
    std::ostringstream txt;
    txt << title << "\n" << provenance_line(cfg) << "\n\n";
    std::vector<size_t> width(table.columns.size());
    for (size_t c = 0; c < table.columns.size(); ++c) width[c] = table.columns[c].size();
    for (const auto& row : table.rows) {
        for (size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    }
    auto emit_row = [&](const std::vector<std::string>& row) {
        for (size_t c = 0; c < row.size(); ++c) {
            txt << row[c] << std::string(width[c] - row[c].size() + 2, ' ');
        }
        txt << '\n';
    };
    emit_row(table.columns);
    for (const auto& row : table.rows) emit_row(row);
    write_text_file(fs::path(base).replace_extension(".txt"), txt.str());
}

// ---------------------------------------------------------------------------
// Artifact layout
// ---------------------------------------------------------------------------

fs::path dataset_dir(const fs::path& out) { return out / "dataset"; }
fs::path models_dir(const fs::path& out) { return out / "models"; }
fs::path prior_path(const fs::path& out) { return models_dir(out) / "prior.bin"; }
fs::path recon_path(const fs::path& out) { return models_dir(out) / "recon.bin"; }
fs::path merged_path(const fs::path& out) { return models_dir(out) / "merged.bin"; }

void require_artifact(const fs::path& p, const char* producer) {
    if (!fs::exists(p)) {
        throw MissingArtifactError("missing artifact '" + p.string() + "'; run " + producer +
                                   " first");
    }
}

Models load_models(const fs::path& out, bool need_merged) {
    require_artifact(prior_path(out), "train-prior");
    require_artifact(recon_path(out), "train-recon");
    Models m{load_params(prior_path(out)), load_params(recon_path(out)), std::nullopt};
    if (need_merged) {
        require_artifact(merged_path(out), "train-merge");
        m.merged = load_merged(merged_path(out));
    }
    return m;
}

void write_trace(const ExperimentConfig& cfg, const fs::path& path, const TrainTrace& trace) {
    std::ostringstream csv;
    csv << "# " << provenance_line(cfg) << "\nstep,loss,loss_ema\n";
    for (size_t i = 0; i < trace.loss.size(); ++i) {
        csv << i << ',' << fmt(trace.loss[i]) << ',' << fmt(trace.loss_ema[i]) << '\n';
    }
    write_text_file(path, csv.str());
}

NoiseSchedule schedule_of(const ExperimentConfig& cfg) {
    return build_linear_schedule(cfg.beta0, cfg.betaT, cfg.timesteps);
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.prior_train.seed = 101;
    cfg.recon_train.seed = 202;
    cfg.recon_train.cond_dropout = 0.1;
    cfg.merged_train.seed = 303;
    cfg.merged_train.steps = 1000;  // 20% of the reconstruction budget
    cfg.prior_train.cond_dropout = 0.0;
    cfg.merged_train.cond_dropout = 0.0;
    cfg.fusion.steps = cfg.timesteps;
    cfg.langevin.run.seed = 424242;
    return cfg;
}

ExperimentConfig parse_config(const std::string& json_text, const Options& opts) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    ExperimentConfig cfg = default_config();

    check_keys(root, "", {"dataset", "schedule", "training", "fusion", "method", "eval", "sample",
                          "langevin"});

    if (root.contains("dataset")) {
        const auto& d = root["dataset"];
        check_keys(d, "dataset.", {"n_shapes", "pair_fraction", "points", "seed", "pairs_overlap",
                                   "n_test", "jitter", "hist_noise"});
        read_key(d, "n_shapes", "dataset.", cfg.dataset.n_shapes);
        read_key(d, "pair_fraction", "dataset.", cfg.dataset.pair_fraction);
        read_key(d, "points", "dataset.", cfg.dataset.points);
        read_key(d, "seed", "dataset.", cfg.dataset.seed);
        read_key(d, "pairs_overlap", "dataset.", cfg.dataset.pairs_overlap);
        read_key(d, "n_test", "dataset.", cfg.dataset.n_test);
        read_key(d, "jitter", "dataset.", cfg.dataset.jitter);
        read_key(d, "hist_noise", "dataset.", cfg.dataset.hist_noise);
        if (!(cfg.dataset.pair_fraction > 0.0) || cfg.dataset.pair_fraction > 1.0) {
            throw ConfigError("config: 'dataset.pair_fraction' must lie in (0, 1]");
        }
        if (cfg.dataset.n_shapes < 1 || cfg.dataset.points < 8) {
            throw ConfigError("config: 'dataset.n_shapes' or 'dataset.points' out of range");
        }
    }
    if (root.contains("schedule")) {
        const auto& s = root["schedule"];
        check_keys(s, "schedule.", {"beta0", "betaT", "T"});
        read_key(s, "beta0", "schedule.", cfg.beta0);
        read_key(s, "betaT", "schedule.", cfg.betaT);
        read_key(s, "T", "schedule.", cfg.timesteps);
    }
    if (root.contains("training")) {
        const auto& t = root["training"];
        check_keys(t, "training.", {"prior", "recon", "merged", "threads"});
        if (t.contains("prior")) parse_train_section(t["prior"], "training.prior.", cfg.prior_train);
        if (t.contains("recon")) parse_train_section(t["recon"], "training.recon.", cfg.recon_train);
        if (t.contains("merged")) {
            parse_train_section(t["merged"], "training.merged.", cfg.merged_train);
        }
    }
    if (root.contains("fusion")) {
        const auto& f = root["fusion"];
        check_keys(f, "fusion.",
                   {"active_stages", "interval", "duration", "ratio", "blend_every_step"});
        if (f.contains("active_stages")) {
            cfg.fusion.active_stages.clear();
            for (const auto& s : f["active_stages"]) {
                cfg.fusion.active_stages.push_back(stage_from_name(s.get<std::string>()));
            }
        }
        read_key(f, "interval", "fusion.", cfg.fusion.interval);
        read_key(f, "duration", "fusion.", cfg.fusion.duration);
        read_key(f, "ratio", "fusion.", cfg.fusion.ratio);
        read_key(f, "blend_every_step", "fusion.", cfg.fusion.blend_every_step);
    }
    if (root.contains("method")) {
        const auto& m = root["method"];
        check_keys(m, "method.", {"name", "guidance_w"});
        read_key(m, "name", "method.", cfg.method.name);
        read_key(m, "guidance_w", "method.", cfg.method.guidance_w);
        static const std::vector<std::string> known = {"baseline", "bdm_b", "bdm_m", "cfg",
                                                       "langevin_demo"};
        if (std::find(known.begin(), known.end(), cfg.method.name) == known.end()) {
            throw ConfigError("config: unknown method '" + cfg.method.name + "'");
        }
    }
    if (root.contains("eval")) {
        const auto& e = root["eval"];
        check_keys(e, "eval.", {"n_eval", "n_eval_seeds", "tau", "eval_seed"});
        read_key(e, "n_eval", "eval.", cfg.eval.n_eval);
        read_key(e, "n_eval_seeds", "eval.", cfg.eval.n_eval_seeds);
        read_key(e, "tau", "eval.", cfg.eval.tau);
        read_key(e, "eval_seed", "eval.", cfg.eval.eval_seed);
    }
    if (root.contains("sample")) {
        const auto& s = root["sample"];
        check_keys(s, "sample.", {"n_clouds", "record_trajectory"});
        read_key(s, "n_clouds", "sample.", cfg.sample.n_clouds);
        read_key(s, "record_trajectory", "sample.", cfg.sample.record_trajectory);
    }
    if (root.contains("langevin")) {
        const auto& l = root["langevin"];
        check_keys(l, "langevin.",
                   {"steps", "chains", "step_a", "step_b", "step_decay", "burn_in", "seed",
                    "prior_mean", "prior_var", "data_mean", "data_var"});
        read_key(l, "steps", "langevin.", cfg.langevin.run.steps);
        read_key(l, "chains", "langevin.", cfg.langevin.run.chains);
        read_key(l, "step_a", "langevin.", cfg.langevin.run.step_a);
        read_key(l, "step_b", "langevin.", cfg.langevin.run.step_b);
        read_key(l, "step_decay", "langevin.", cfg.langevin.run.step_decay);
        read_key(l, "burn_in", "langevin.", cfg.langevin.run.burn_in);
        read_key(l, "seed", "langevin.", cfg.langevin.run.seed);
        read_key(l, "prior_mean", "langevin.", cfg.langevin.prior_mean);
        read_key(l, "prior_var", "langevin.", cfg.langevin.prior_var);
        read_key(l, "data_mean", "langevin.", cfg.langevin.data_mean);
        read_key(l, "data_var", "langevin.", cfg.langevin.data_var);
    }

    if (opts.seed_override) cfg.dataset.seed = *opts.seed_override;
    if (opts.paper_scale_schedule) {
        cfg.beta0 = 1e-5;
        cfg.betaT = 0.008;
        cfg.timesteps = 1000;
        cfg.fusion.interval = 32;
        cfg.fusion.duration = 16;
    }
    cfg.fusion.steps = cfg.timesteps;
    cfg.fusion.validate();
    build_linear_schedule(cfg.beta0, cfg.betaT, cfg.timesteps);  // validates endpoints

    cfg.config_hash = hex64(fnv1a(config_to_json(cfg)));
    return cfg;
}

ExperimentConfig load_config(const fs::path& path, const Options& opts) {
    if (!fs::exists(path)) {
        throw MissingArtifactError("config file '" + path.string() + "' not found");
    }
    return parse_config(read_text_file(path), opts);
}

std::string config_to_json(const ExperimentConfig& cfg) {
    auto train_json = [](const TrainConfig& t) {
        return json{{"steps", t.steps},   {"lr", t.lr},
                    {"lr_floor", t.lr_floor}, {"warmup_frac", t.warmup_frac},
                    {"batch", t.batch},   {"seed", t.seed},
                    {"cond_dropout", t.cond_dropout}};
    };
    json stages = json::array();
    for (Stage s : cfg.fusion.active_stages) stages.push_back(stage_name(s));
    const json root{
        {"dataset",
         {{"n_shapes", cfg.dataset.n_shapes},
          {"pair_fraction", cfg.dataset.pair_fraction},
          {"points", cfg.dataset.points},
          {"seed", cfg.dataset.seed},
          {"pairs_overlap", cfg.dataset.pairs_overlap},
          {"n_test", cfg.dataset.n_test},
          {"jitter", cfg.dataset.jitter},
          {"hist_noise", cfg.dataset.hist_noise}}},
        {"schedule", {{"beta0", cfg.beta0}, {"betaT", cfg.betaT}, {"T", cfg.timesteps}}},
        {"training",
         {{"prior", train_json(cfg.prior_train)},
          {"recon", train_json(cfg.recon_train)},
          {"merged", train_json(cfg.merged_train)}}},
        {"fusion",
         {{"active_stages", stages},
          {"interval", cfg.fusion.interval},
          {"duration", cfg.fusion.duration},
          {"ratio", cfg.fusion.ratio},
          {"blend_every_step", cfg.fusion.blend_every_step}}},
        {"method", {{"name", cfg.method.name}, {"guidance_w", cfg.method.guidance_w}}},
        {"eval",
         {{"n_eval", cfg.eval.n_eval},
          {"n_eval_seeds", cfg.eval.n_eval_seeds},
          {"tau", cfg.eval.tau},
          {"eval_seed", cfg.eval.eval_seed}}},
        {"sample",
         {{"n_clouds", cfg.sample.n_clouds},
          {"record_trajectory", cfg.sample.record_trajectory}}},
        {"langevin",
         {{"steps", cfg.langevin.run.steps},
          {"chains", cfg.langevin.run.chains},
          {"step_a", cfg.langevin.run.step_a},
          {"step_b", cfg.langevin.run.step_b},
          {"step_decay", cfg.langevin.run.step_decay},
          {"burn_in", cfg.langevin.run.burn_in},
          {"seed", cfg.langevin.run.seed},
          {"prior_mean", cfg.langevin.prior_mean},
          {"prior_var", cfg.langevin.prior_var},
          {"data_mean", cfg.langevin.data_mean},
          {"data_var", cfg.langevin.data_var}}}};
    return root.dump(2);
}

// ---------------------------------------------------------------------------
// Evaluation core
// ---------------------------------------------------------------------------

namespace {

PointCloud sample_by_method(const MethodConfig& method, const ExperimentConfig& cfg,
                            const Models& models, const NoiseSchedule& sched,
                            const Condition& cond, int n_points, uint64_t seed,
                            const FusionSchedule* fusion_override) {
    SamplerRun run;
    run.seed = seed;
    const FusionSchedule& fusion = fusion_override ? *fusion_override : cfg.fusion;
    if (method.name == "baseline") {
        return sample_conditional(models.recon, sched, cond, n_points, run);
    }
    if (method.name == "bdm_b") {
        return bdm_blend_sample(models.prior, models.recon, sched, fusion, cond, n_points, run);
    }
    if (method.name == "bdm_m") {
        if (!models.merged) {
            throw MissingArtifactError("method bdm_m needs a trained merged model");
        }
        return bdm_merge_sample(*models.merged, sched, fusion, cond, n_points, run);
    }
    if (method.name == "cfg") {
        return sample_cfg(models.recon, sched, cond, method.guidance_w, n_points, run);
    }
    throw InvalidArgumentError("method '" + method.name + "' cannot produce samples");
}

void parallel_indices(int count, int threads, const std::function<void(int)>& fn) {
    const int n_threads = std::max(1, std::min(threads, count));
    if (n_threads <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int w = 0; w < n_threads; ++w) {
        pool.emplace_back([&, w]() {
            for (int i = w; i < count; i += n_threads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace

EvalSummary evaluate_method(const ExperimentConfig& cfg, const MethodConfig& method,
                            const Models& models, const DatasetBundle& bundle,
                            const NoiseSchedule& sched, int threads, uint64_t seed_shift,
                            const FusionSchedule* fusion_override) {
    const int n = std::min<int>(cfg.eval.n_eval, static_cast<int>(bundle.test.size()));
    if (n == 0) throw InvalidArgumentError("evaluate_method: empty test split");

    EvalSummary summary;
    summary.method = method.name;
    summary.rows.resize(n);
    parallel_indices(n, threads, [&](int i) {
        const auto& [cond, gt] = bundle.test[i];
        const uint64_t seed = cfg.eval.eval_seed + seed_shift + static_cast<uint64_t>(i);
        const PointCloud pred = sample_by_method(method, cfg, models, sched, cond, gt.n, seed,
                                                 fusion_override);
        summary.rows[i] = evaluate_pair(pred, gt, cfg.eval.tau);
    });

    double cd = 0.0, f1 = 0.0, cd2 = 0.0, f12 = 0.0;
    for (const auto& r : summary.rows) {
        cd += r.cd_scaled;
        f1 += r.f1;
        cd2 += r.cd_scaled * r.cd_scaled;
        f12 += r.f1 * r.f1;
    }
    summary.mean_cd = cd / n;
    summary.mean_f1 = f1 / n;
    summary.var_cd = cd2 / n - summary.mean_cd * summary.mean_cd;
    summary.var_f1 = f12 / n - summary.mean_f1 * summary.mean_f1;
    return summary;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

void stage_gen_data(const ExperimentConfig& cfg, const fs::path& out_dir) {
    const DatasetBundle bundle =
        make_datasets(cfg.dataset.n_shapes, cfg.dataset.pair_fraction, cfg.dataset.points,
                      cfg.dataset.seed, cfg.dataset.pairs_overlap, cfg.dataset.n_test,
                      cfg.dataset.jitter, cfg.dataset.hist_noise);
    fs::create_directories(dataset_dir(out_dir));
    save_dataset(bundle, dataset_dir(out_dir));
    write_json_output(cfg, dataset_dir(out_dir) / "info.json",
                      json{{"n_standalone", bundle.standalone.size()},
                           {"n_paired", bundle.paired.size()},
                           {"n_test", bundle.test.size()},
                           {"seed", bundle.seed}});
}

void stage_train_prior(const ExperimentConfig& cfg, const fs::path& out_dir, int threads) {
    require_artifact(dataset_dir(out_dir) / "manifest.json", "gen-data");
    const DatasetBundle bundle = load_dataset(dataset_dir(out_dir));
    TrainConfig tc = cfg.prior_train;
    tc.threads = threads;
    tc.cond_dropout = 0.0;
    TrainTrace trace;
    const NoiseSchedule sched = schedule_of(cfg);
    const DenoiserParams params = train_prior(bundle.standalone, tc, sched, &trace);
    fs::create_directories(models_dir(out_dir));
    save_params(params, prior_path(out_dir));
    write_trace(cfg, models_dir(out_dir) / "prior_trace.csv", trace);
}

void stage_train_recon(const ExperimentConfig& cfg, const fs::path& out_dir, int threads) {
    require_artifact(dataset_dir(out_dir) / "manifest.json", "gen-data");
    const DatasetBundle bundle = load_dataset(dataset_dir(out_dir));
    TrainConfig tc = cfg.recon_train;
    tc.threads = threads;
    TrainTrace trace;
    const NoiseSchedule sched = schedule_of(cfg);
    const DenoiserParams params = train_reconstruction(bundle.paired, tc, sched, &trace);
    fs::create_directories(models_dir(out_dir));
    save_params(params, recon_path(out_dir));
    write_trace(cfg, models_dir(out_dir) / "recon_trace.csv", trace);
}

void stage_train_merge(const ExperimentConfig& cfg, const fs::path& out_dir, int threads) {
    require_artifact(dataset_dir(out_dir) / "manifest.json", "gen-data");
    const DatasetBundle bundle = load_dataset(dataset_dir(out_dir));
    const Models models = load_models(out_dir, false);
    TrainConfig tc = cfg.merged_train;
    tc.threads = threads;
    tc.cond_dropout = 0.0;
    TrainTrace trace;
    const NoiseSchedule sched = schedule_of(cfg);
    const MergedParams merged =
        train_merged(models.prior, models.recon, bundle.paired, tc, sched, &trace);
    save_merged(merged, merged_path(out_dir));
    write_trace(cfg, models_dir(out_dir) / "merged_trace.csv", trace);
}

void stage_sample(const ExperimentConfig& cfg, const fs::path& out_dir, int threads) {
    require_artifact(dataset_dir(out_dir) / "manifest.json", "gen-data");
    const DatasetBundle bundle = load_dataset(dataset_dir(out_dir));
    const Models models = load_models(out_dir, cfg.method.name == "bdm_m");
    const NoiseSchedule sched = schedule_of(cfg);

    const fs::path dir = out_dir / "samples";
    fs::create_directories(dir);
    const int n = std::min<int>(cfg.sample.n_clouds, static_cast<int>(bundle.test.size()));
    json manifest = json::array();
    for (int i = 0; i < n; ++i) {
        const auto& [cond, gt] = bundle.test[i];
        const uint64_t seed = cfg.eval.eval_seed + static_cast<uint64_t>(i);
        if (cfg.sample.record_trajectory && cfg.method.name == "baseline") {
            SamplerRun run;
            run.seed = seed;
            run.record_trajectory = true;
            const PointCloud pred = sample_conditional(models.recon, sched, cond, gt.n, run);
            const fs::path traj_dir = dir / ("trajectory_" + std::to_string(i));
            fs::create_directories(traj_dir);
            for (size_t k = 0; k < run.trajectory.size(); ++k) {
                char filename[32];
                std::snprintf(filename, sizeof(filename), "t%05zu.xyz",
                              run.trajectory.size() - 1 - k);
                save_xyz(run.trajectory[k], traj_dir / filename);
            }
            char filename[32];
            std::snprintf(filename, sizeof(filename), "sample_%03d.xyz", i);
            save_xyz(pred, dir / filename);
            manifest.push_back({{"file", filename}, {"seed", seed}, {"trajectory", true}});
        } else {
            const PointCloud pred = sample_by_method(cfg.method, cfg, models, sched, cond, gt.n,
                                                     seed, nullptr);
            char filename[32];
            std::snprintf(filename, sizeof(filename), "sample_%03d.xyz", i);
            save_xyz(pred, dir / filename);
            manifest.push_back({{"file", filename}, {"seed", seed}, {"trajectory", false}});
        }
    }
    write_json_output(cfg, dir / "samples.json",
                      json{{"method", cfg.method.name}, {"clouds", manifest}});
}

void stage_evaluate(const ExperimentConfig& cfg, const fs::path& out_dir, int threads) {
    require_artifact(dataset_dir(out_dir) / "manifest.json", "gen-data");
    const DatasetBundle bundle = load_dataset(dataset_dir(out_dir));
    const Models models = load_models(out_dir, cfg.method.name == "bdm_m");
    const NoiseSchedule sched = schedule_of(cfg);

    const EvalSummary s = evaluate_method(cfg, cfg.method, models, bundle, sched, threads);
    const fs::path dir = out_dir / "eval" / cfg.method.name;
    fs::create_directories(dir);

    Table table;
    table.columns = {"instance", "cd_x1000", "f1", "tau", "n_pred", "n_gt"};
    for (size_t i = 0; i < s.rows.size(); ++i) {
        const auto& r = s.rows[i];
        table.rows.push_back({std::to_string(i), fmt(r.cd_scaled), fmt(r.f1), fmt(r.tau),
                              std::to_string(r.n_pred), std::to_string(r.n_gt)});
    }
    write_table(cfg, dir / "metrics", table, "per-instance metrics: " + cfg.method.name);
    write_json_output(cfg, dir / "summary.json",
                      json{{"method", s.method},
                           {"mean_cd", s.mean_cd},
                           {"mean_f1", s.mean_f1},
                           {"var_cd", s.var_cd},
                           {"var_f1", s.var_f1},
                           {"n_eval", s.rows.size()}});
}

std::vector<std::vector<Stage>> timing_grid() {
    return {{},
            {Stage::early},
            {Stage::middle},
            {Stage::late},
            {Stage::early, Stage::late},
            {Stage::early, Stage::middle, Stage::late}};
}

std::vector<int> duration_grid() { return {0, 1, 2, 4, 8, 16, 32}; }

std::vector<double> ratio_grid() { return {0.0, 0.25, 0.5, 0.75, 1.0}; }

std::vector<double> guidance_grid() { return {0.0, 0.5, 1.0, 2.0}; }

void stage_ablate_timing(const ExperimentConfig& cfg, const fs::path& out_dir, int threads) {
    const DatasetBundle bundle = load_dataset(dataset_dir(out_dir));
    const Models models = load_models(out_dir, false);
    const NoiseSchedule sched = schedule_of(cfg);
    fs::create_directories(out_dir / "ablations");

    Table table;
    table.columns = {"early", "middle", "late", "cd_x1000", "f1"};
    const MethodConfig method{"bdm_b", 0.0};
    for (const auto& stages : timing_grid()) {
        FusionSchedule fs_var = cfg.fusion;
        fs_var.active_stages = stages;
        const EvalSummary s =
            evaluate_method(cfg, method, models, bundle, sched, threads, 0, &fs_var);
        auto has = [&stages](Stage st) {
            return std::find(stages.begin(), stages.end(), st) != stages.end() ? "yes" : "";
        };
        table.rows.push_back(
            {has(Stage::early), has(Stage::middle), has(Stage::late), fmt(s.mean_cd),
             fmt(s.mean_f1)});
    }
    write_table(cfg, out_dir / "ablations" / "timing", table,
                "prior integration timing (blending)");
}

void stage_ablate_duration(const ExperimentConfig& cfg, const fs::path& out_dir, int threads) {
    const DatasetBundle bundle = load_dataset(dataset_dir(out_dir));
    const Models models = load_models(out_dir, false);
    const NoiseSchedule sched = schedule_of(cfg);
    fs::create_directories(out_dir / "ablations");

    Table table;
    table.columns = {"duration", "cd_x1000", "f1"};
    const MethodConfig method_b{"bdm_b", 0.0};
    const MethodConfig method_base{"baseline", 0.0};
    for (int d : duration_grid()) {
        EvalSummary s;
        if (d == 0) {
            s = evaluate_method(cfg, method_base, models, bundle, sched, threads);
        } else {
            FusionSchedule fs_var = cfg.fusion;
            fs_var.duration = d;
            // Keep segments non-overlapping when the swept duration exceeds
            // the configured trigger spacing.
            fs_var.interval = std::max(cfg.fusion.effective_interval(), d);
            const EvalSummary sv =
                evaluate_method(cfg, method_b, models, bundle, sched, threads, 0, &fs_var);
            s = sv;
        }
        table.rows.push_back({std::to_string(d), fmt(s.mean_cd), fmt(s.mean_f1)});
    }
    write_table(cfg, out_dir / "ablations" / "duration", table,
                "prior integration duration (blending)");
}

void stage_ablate_ratio(const ExperimentConfig& cfg, const fs::path& out_dir, int threads) {
    const DatasetBundle bundle = load_dataset(dataset_dir(out_dir));
    const Models models = load_models(out_dir, false);
    const NoiseSchedule sched = schedule_of(cfg);
    fs::create_directories(out_dir / "ablations");

    Table table;
    table.columns = {"ratio", "cd_x1000", "f1"};
    const MethodConfig method{"bdm_b", 0.0};
    for (double rho : ratio_grid()) {
        FusionSchedule fs_var = cfg.fusion;
        fs_var.ratio = rho;
        const EvalSummary s =
            evaluate_method(cfg, method, models, bundle, sched, threads, 0, &fs_var);
        char label[16];
        std::snprintf(label, sizeof(label), "%d%%", static_cast<int>(rho * 100));
        table.rows.push_back({label, fmt(s.mean_cd), fmt(s.mean_f1)});
    }
    write_table(cfg, out_dir / "ablations" / "ratio", table,
                "prior integration ratio (blending)");
}

void stage_compare_cfg(const ExperimentConfig& cfg, const fs::path& out_dir, int threads) {
    const DatasetBundle bundle = load_dataset(dataset_dir(out_dir));
    const bool have_merged = fs::exists(merged_path(out_dir));
    const Models models = load_models(out_dir, have_merged);
    const NoiseSchedule sched = schedule_of(cfg);
    fs::create_directories(out_dir / "ablations");

    Table table;
    table.columns = {"method", "cd_x1000", "f1"};
    auto add_row = [&](const std::string& label, const EvalSummary& s) {
        table.rows.push_back({label, fmt(s.mean_cd), fmt(s.mean_f1)});
    };
    add_row("baseline",
            evaluate_method(cfg, MethodConfig{"baseline", 0.0}, models, bundle, sched, threads));
    for (double w : guidance_grid()) {
        char label[32];
        std::snprintf(label, sizeof(label), "cfg(w=%g)", w);
        add_row(label,
                evaluate_method(cfg, MethodConfig{"cfg", w}, models, bundle, sched, threads));
    }
    add_row("bdm_b",
            evaluate_method(cfg, MethodConfig{"bdm_b", 0.0}, models, bundle, sched, threads));
    if (have_merged) {
        add_row("bdm_m",
                evaluate_method(cfg, MethodConfig{"bdm_m", 0.0}, models, bundle, sched, threads));
    }
    write_table(cfg, out_dir / "ablations" / "cfg", table, "guidance comparison");
}

void stage_seed_variance(const ExperimentConfig& cfg, const fs::path& out_dir, int threads) {
    const DatasetBundle bundle = load_dataset(dataset_dir(out_dir));
    const Models models = load_models(out_dir, false);
    const NoiseSchedule sched = schedule_of(cfg);
    fs::create_directories(out_dir / "ablations");

    Table table;
    table.columns = {"noise_seed", "baseline_cd", "baseline_f1", "bdm_b_cd", "bdm_b_f1"};
    std::vector<double> base_cd, blend_cd, base_f1, blend_f1;
    for (int k = 0; k < cfg.eval.n_eval_seeds; ++k) {
        const uint64_t shift = static_cast<uint64_t>(k) * 1000003ull;
        const EvalSummary b = evaluate_method(cfg, MethodConfig{"baseline", 0.0}, models, bundle,
                                              sched, threads, shift);
        const EvalSummary f = evaluate_method(cfg, MethodConfig{"bdm_b", 0.0}, models, bundle,
                                              sched, threads, shift);
        base_cd.push_back(b.mean_cd);
        base_f1.push_back(b.mean_f1);
        blend_cd.push_back(f.mean_cd);
        blend_f1.push_back(f.mean_f1);
        table.rows.push_back({std::to_string(k), fmt(b.mean_cd), fmt(b.mean_f1), fmt(f.mean_cd),
                              fmt(f.mean_f1)});
    }
    auto moments = [](const std::vector<double>& v) {
        double m = 0.0, s = 0.0;
        for (double x : v) m += x;
        m /= v.size();
        for (double x : v) s += (x - m) * (x - m);
        return std::pair<double, double>{m, s / v.size()};
    };
    const auto [bm, bv] = moments(base_cd);
    const auto [fm, fv] = moments(blend_cd);
    const auto [bf1m, bf1v] = moments(base_f1);
    const auto [ff1m, ff1v] = moments(blend_f1);
    table.rows.push_back({"mean", fmt(bm), fmt(bf1m), fmt(fm), fmt(ff1m)});
    table.rows.push_back({"variance", fmt(bv), fmt(bf1v), fmt(fv), fmt(ff1v)});
    write_table(cfg, out_dir / "ablations" / "seed_variance", table,
                "sensitivity to the initial noise");
}

void stage_langevin_demo(const ExperimentConfig& cfg, const fs::path& out_dir) {
    const AnalyticDensity prior =
        gaussian({cfg.langevin.prior_mean}, {cfg.langevin.prior_var});
    const AnalyticDensity data = gaussian({cfg.langevin.data_mean}, {cfg.langevin.data_var});
    const LangevinResult r = langevin_infer(prior, data, cfg.langevin.run);

    const fs::path dir = out_dir / "langevin";
    fs::create_directories(dir);
    std::ostringstream csv;
    csv << "# " << provenance_line(cfg) << "\nsample\n";
    // The sample dump is for plotting; cap it so the file stays reasonable.
    const size_t keep = std::min<size_t>(r.n_samples, 100000);
    const size_t stride = std::max<size_t>(1, r.n_samples / keep);
    for (size_t i = 0; i < r.n_samples; i += stride) {
        for (int d = 0; d < r.dim; ++d) {
            if (d > 0) csv << ',';
            csv << fmt(r.samples[i * r.dim + d]);
        }
        csv << '\n';
    }
    write_text_file(dir / "samples.csv", csv.str());
    write_json_output(cfg, dir / "moments.json",
                      json{{"note", "analytic stand-in densities; product posterior oracle"},
                           {"n_samples", r.n_samples},
                           {"mean", r.mean},
                           {"variance", r.variance}});
}

void stage_report(const ExperimentConfig& cfg, const fs::path& out_dir) {
    std::ostringstream txt;
    txt << "run report\n" << provenance_line(cfg) << "\n\n";
    bool empty = true;
    for (const char* rel :
         {"dataset/info.json", "eval/baseline/summary.json", "eval/bdm_b/summary.json",
          "eval/bdm_m/summary.json", "eval/cfg/summary.json", "ablations/timing.txt",
          "ablations/duration.txt", "ablations/ratio.txt", "ablations/cfg.txt",
          "ablations/seed_variance.txt", "langevin/moments.json"}) {
        const fs::path p = out_dir / rel;
        if (!fs::exists(p)) continue;
        empty = false;
        txt << "==== " << rel << " ====\n" << read_text_file(p) << "\n";
    }
    if (empty) {
        txt << "warning: no completed runs found under '" << out_dir.string() << "'\n";
    }
    write_text_file(out_dir / "report.txt", txt.str());
}

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {
        "gen-data",      "train-prior",    "train-recon",  "train-merge",
        "sample",        "evaluate",       "ablate-timing", "ablate-duration",
        "ablate-ratio",  "compare-cfg",    "seed-variance", "langevin-demo",
        "report"};
    return names;
}

void run_stage(const std::string& stage, const fs::path& config_path, const fs::path& out_dir,
               const Options& opts) {
    const ExperimentConfig cfg = load_config(config_path, opts);
    fs::create_directories(out_dir);
    write_text_file(out_dir / "config.snapshot.json", config_to_json(cfg) + "\n");

    if (stage == "gen-data") return stage_gen_data(cfg, out_dir);
    if (stage == "train-prior") return stage_train_prior(cfg, out_dir, opts.threads);
    if (stage == "train-recon") return stage_train_recon(cfg, out_dir, opts.threads);
    if (stage == "train-merge") return stage_train_merge(cfg, out_dir, opts.threads);
    if (stage == "sample") return stage_sample(cfg, out_dir, opts.threads);
    if (stage == "evaluate") return stage_evaluate(cfg, out_dir, opts.threads);
    if (stage == "ablate-timing") return stage_ablate_timing(cfg, out_dir, opts.threads);
    if (stage == "ablate-duration") return stage_ablate_duration(cfg, out_dir, opts.threads);
    if (stage == "ablate-ratio") return stage_ablate_ratio(cfg, out_dir, opts.threads);
    if (stage == "compare-cfg") return stage_compare_cfg(cfg, out_dir, opts.threads);
    if (stage == "seed-variance") return stage_seed_variance(cfg, out_dir, opts.threads);
    if (stage == "langevin-demo") return stage_langevin_demo(cfg, out_dir);
    if (stage == "report") return stage_report(cfg, out_dir);
    throw InvalidArgumentError("unknown stage '" + stage + "'");
}

}  // namespace bdm::harness
