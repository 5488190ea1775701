// Exercises the shared-library surface the CLI uses; links only the C API.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bdm/bdm.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / "bdm_capi_test";
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

const char* kTinyConfig = R"({
  "dataset": {"n_shapes": 30, "pair_fraction": 0.2, "points": 16, "seed": 4, "n_test": 6},
  "schedule": {"beta0": 1e-4, "betaT": 0.08, "T": 12},
  "training": {
    "prior":  {"steps": 20, "batch": 4, "seed": 21},
    "recon":  {"steps": 20, "batch": 4, "seed": 22},
    "merged": {"steps": 5, "batch": 4, "seed": 23}
  },
  "eval": {"n_eval": 3, "n_eval_seeds": 2},
  "langevin": {"steps": 50, "chains": 10}
})";

std::vector<double> flat_condition() {
    std::vector<double> cond(21, 0.0);
    cond[13] = 1.0;   // all histogram mass in one bin
    cond[16] = 1.0;   // circle indicator
    cond[20] = 0.02;  // corruption level
    return cond;
}

}  // namespace

TEST_CASE("version and status strings") {
    CHECK(std::string(bdm_version()).find('.') != std::string::npos);
    CHECK(std::string(bdm_status_name(BDM_OK)) == "ok");
    CHECK(std::string(bdm_status_name(BDM_ERR_CONFIG)) == "config");
}

TEST_CASE("schedule handles") {
    bdm_schedule* sched = nullptr;
    REQUIRE(bdm_schedule_create(1e-5, 0.008, 1000, &sched) == BDM_OK);
    CHECK(bdm_schedule_steps(sched) == 1000);
    CHECK(bdm_schedule_beta(sched, 1) == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(bdm_schedule_beta(sched, 1000) == doctest::Approx(0.008).epsilon(1e-12));
    CHECK(bdm_schedule_alpha_bar(sched, 0) == 1.0);
    CHECK(bdm_schedule_alpha_bar(sched, 1000) == doctest::Approx(0.0181).epsilon(2e-3));
    CHECK(std::isnan(bdm_schedule_beta(sched, 0)));
    CHECK(std::isnan(bdm_schedule_alpha_bar(sched, 1001)));
    bdm_schedule_free(sched);

    bdm_schedule* bad = nullptr;
    CHECK(bdm_schedule_create(0.5, 0.1, 10, &bad) == BDM_ERR_INVALID_ARGUMENT);
    CHECK(bad == nullptr);
    CHECK(std::strlen(bdm_last_error()) > 0);
}

TEST_CASE("cloud handles, metrics and xyz io") {
    const double a_pts[2] = {0.0, 0.0};
    const double b_pts[2] = {3.0, 4.0};
    bdm_cloud* a = nullptr;
    bdm_cloud* b = nullptr;
    REQUIRE(bdm_cloud_create(a_pts, 1, 2, &a) == BDM_OK);
    REQUIRE(bdm_cloud_create(b_pts, 1, 2, &b) == BDM_OK);
    CHECK(bdm_cloud_points(a) == 1);
    CHECK(bdm_cloud_dim(a) == 2);

    double cd = 0.0, f1 = 1.0;
    REQUIRE(bdm_chamfer(a, b, &cd) == BDM_OK);
    CHECK(cd == doctest::Approx(50000.0).epsilon(1e-12));
    REQUIRE(bdm_fscore(a, b, 0.01, &f1) == BDM_OK);
    CHECK(f1 == 0.0);

    TempDir tmp;
    const std::string path = (tmp.path / "cloud.xyz").string();
    REQUIRE(bdm_cloud_save_xyz(b, path.c_str()) == BDM_OK);
    bdm_cloud* loaded = nullptr;
    REQUIRE(bdm_cloud_load_xyz(path.c_str(), &loaded) == BDM_OK);
    double buf[2] = {0, 0};
    REQUIRE(bdm_cloud_copy(loaded, buf, 2) == BDM_OK);
    CHECK(buf[0] == 3.0);
    CHECK(buf[1] == 4.0);
    CHECK(bdm_cloud_copy(loaded, buf, 1) == BDM_ERR_INVALID_ARGUMENT);

    bdm_cloud_free(a);
    bdm_cloud_free(b);
    bdm_cloud_free(loaded);

    bdm_cloud* missing = nullptr;
    CHECK(bdm_cloud_load_xyz((tmp.path / "absent.xyz").string().c_str(), &missing) ==
          BDM_ERR_IO);
}

TEST_CASE("langevin product posterior through the C API") {
    double mean = 0.0, var = 0.0;
    REQUIRE(bdm_langevin_gaussian_product(0.0, 1.0, 2.0, 1.0, 2500, 2000, 42, &mean, &var) ==
            BDM_OK);
    CHECK(std::abs(mean - 1.0) < 0.05);
    CHECK(std::abs(var - 0.5) < 0.05);
}

TEST_CASE("default config is valid JSON with the expected sections") {
    const size_t needed = bdm_default_config(nullptr, 0);
    REQUIRE(needed > 0);
    std::string buf(needed + 1, '\0');
    bdm_default_config(buf.data(), buf.size());
    const std::string text(buf.c_str());
    for (const char* key : {"dataset", "schedule", "training", "fusion", "method", "eval"}) {
        CHECK(text.find(key) != std::string::npos);
    }
}

TEST_CASE("full stage pipeline and fusion samplers through the C API") {
    TempDir tmp;
    const fs::path cfg = tmp.path / "config.json";
    {
        std::ofstream out(cfg);
        out << kTinyConfig;
    }
    const std::string cfg_s = cfg.string();
    const std::string out_s = (tmp.path / "run").string();

    CHECK(bdm_run_stage("train-prior", cfg_s.c_str(), out_s.c_str(), 2, -1, 0) ==
          BDM_ERR_MISSING_ARTIFACT);

    REQUIRE(bdm_run_stage("gen-data", cfg_s.c_str(), out_s.c_str(), 2, -1, 0) == BDM_OK);
    REQUIRE(bdm_run_stage("train-prior", cfg_s.c_str(), out_s.c_str(), 2, -1, 0) == BDM_OK);
    REQUIRE(bdm_run_stage("train-recon", cfg_s.c_str(), out_s.c_str(), 2, -1, 0) == BDM_OK);
    REQUIRE(bdm_run_stage("train-merge", cfg_s.c_str(), out_s.c_str(), 2, -1, 0) == BDM_OK);
    REQUIRE(bdm_run_stage("evaluate", cfg_s.c_str(), out_s.c_str(), 2, -1, 0) == BDM_OK);
    REQUIRE(bdm_run_stage("langevin-demo", cfg_s.c_str(), out_s.c_str(), 2, -1, 0) == BDM_OK);
    REQUIRE(bdm_run_stage("report", cfg_s.c_str(), out_s.c_str(), 2, -1, 0) == BDM_OK);
    CHECK(fs::exists(tmp.path / "run" / "report.txt"));

    CHECK(bdm_run_stage("bogus-stage", cfg_s.c_str(), out_s.c_str(), 1, -1, 0) ==
          BDM_ERR_INVALID_ARGUMENT);

    // Load the trained models and drive every sampler variant.
    bdm_params* prior = nullptr;
    bdm_params* recon = nullptr;
    bdm_merged* merged = nullptr;
    const std::string prior_path = out_s + "/models/prior.bin";
    const std::string recon_path = out_s + "/models/recon.bin";
    const std::string merged_path = out_s + "/models/merged.bin";
    REQUIRE(bdm_params_load(prior_path.c_str(), &prior) == BDM_OK);
    REQUIRE(bdm_params_load(recon_path.c_str(), &recon) == BDM_OK);
    REQUIRE(bdm_merged_load(merged_path.c_str(), &merged) == BDM_OK);
    CHECK(bdm_params_conditional(prior) == 0);
    CHECK(bdm_params_conditional(recon) == 1);

    bdm_schedule* sched = nullptr;
    REQUIRE(bdm_schedule_create(1e-4, 0.08, 12, &sched) == BDM_OK);
    const auto cond = flat_condition();

    bdm_cloud* u = nullptr;
    REQUIRE(bdm_sample_unconditional(prior, sched, 16, 7, &u) == BDM_OK);
    CHECK(bdm_cloud_points(u) == 16);

    bdm_cloud* c = nullptr;
    REQUIRE(bdm_sample_conditional(recon, sched, cond.data(), cond.size(), 16, 7, &c) == BDM_OK);

    // Guidance 0 reproduces the conditional sample bit for bit.
    bdm_cloud* g = nullptr;
    REQUIRE(bdm_sample_guided(recon, sched, cond.data(), cond.size(), 0.0, 16, 7, &g) == BDM_OK);
    std::vector<double> cbuf(32), gbuf(32);
    REQUIRE(bdm_cloud_copy(c, cbuf.data(), cbuf.size()) == BDM_OK);
    REQUIRE(bdm_cloud_copy(g, gbuf.data(), gbuf.size()) == BDM_OK);
    CHECK(cbuf == gbuf);

    // Blend with ratio 0 also reproduces it (stage mask 5 = early|late).
    bdm_cloud* blend0 = nullptr;
    REQUIRE(bdm_sample_blend(prior, recon, sched, 5u, 0, 0, 0.0, cond.data(), cond.size(), 16, 7,
                             &blend0) == BDM_OK);
    std::vector<double> bbuf(32);
    REQUIRE(bdm_cloud_copy(blend0, bbuf.data(), bbuf.size()) == BDM_OK);
    CHECK(bbuf == cbuf);

    bdm_cloud* merged_out = nullptr;
    REQUIRE(bdm_sample_merge(merged, sched, 5u, 0, 0, cond.data(), cond.size(), 16, 7,
                             &merged_out) == BDM_OK);
    CHECK(bdm_cloud_points(merged_out) == 16);

    // Wrong condition length fails cleanly.
    bdm_cloud* bad = nullptr;
    CHECK(bdm_sample_conditional(recon, sched, cond.data(), 5, 16, 7, &bad) ==
          BDM_ERR_SHAPE_MISMATCH);

    bdm_cloud_free(u);
    bdm_cloud_free(c);
    bdm_cloud_free(g);
    bdm_cloud_free(blend0);
    bdm_cloud_free(merged_out);
    bdm_schedule_free(sched);
    bdm_params_free(prior);
    bdm_params_free(recon);
    bdm_merged_free(merged);
}
