// Command-line front end. Talks to the core exclusively through the C API in
// bdm/bdm.h; all orchestration lives behind the shared library.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bdm/bdm.h"

namespace {

struct StageArgs {
    std::string config;
    std::string out = "out";
    int64_t seed = -1;  // -1 keeps the config's seed
    int threads = 1;
    bool paper_scale = false;
};

const std::vector<std::string>& stage_list() {
    static const std::vector<std::string> stages = {
        "gen-data",      "train-prior",    "train-recon",   "train-merge",
        "sample",        "evaluate",       "ablate-timing", "ablate-duration",
        "ablate-ratio",  "compare-cfg",    "seed-variance", "langevin-demo",
        "report"};
    return stages;
}

int run(const std::string& stage, const StageArgs& args) {
    const bdm_status status =
        bdm_run_stage(stage.c_str(), args.config.c_str(), args.out.c_str(), args.threads,
                      args.seed, args.paper_scale ? 1 : 0);
    if (status != BDM_OK) {
        std::fprintf(stderr, "error (%s): %s\n", bdm_status_name(status), bdm_last_error());
        return 1;
    }
    std::printf("%s: done (out=%s)\n", stage.c_str(), args.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bdm: point-cloud diffusion with prior fusion"};
    app.require_subcommand(1);

    StageArgs args;
    std::string requested_stage;
    for (const auto& stage : stage_list()) {
        CLI::App* sub = app.add_subcommand(stage, "run the " + stage + " stage");
        sub->add_option("--config", args.config, "experiment config (JSON)")->required();
        sub->add_option("--out", args.out, "output directory");
        sub->add_option("--seed", args.seed, "override the dataset seed");
        sub->add_option("--threads", args.threads, "worker threads");
        sub->add_flag("--paper-scale-schedule", args.paper_scale,
                      "use the 1000-step schedule timing constants");
        sub->callback([&requested_stage, stage]() { requested_stage = stage; });
    }

    CLI::App* version = app.add_subcommand("version", "print the library version");
    version->callback([&requested_stage]() { requested_stage = "version"; });

    CLI::App* dump = app.add_subcommand("default-config", "print the built-in config");
    dump->callback([&requested_stage]() { requested_stage = "default-config"; });

    CLI11_PARSE(app, argc, argv);

    if (requested_stage == "version") {
        std::printf("bdm %s\n", bdm_version());
        return 0;
    }
    if (requested_stage == "default-config") {
        const size_t needed = bdm_default_config(nullptr, 0);
        std::string buf(needed + 1, '\0');
        bdm_default_config(buf.data(), buf.size());
        std::printf("%s\n", buf.c_str());
        return 0;
    }
    return run(requested_stage, args);
}
