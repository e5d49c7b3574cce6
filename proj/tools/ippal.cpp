#include <CLI11.hpp>

#include <string>

#include "ippal/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Informative path planning benchmark for active-learning semantic mapping"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string run_dir;
    uint64_t seed = 0;
    int jobs = 0;
    bool quiet = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "experiment config file")->required();
        cmd->add_option("--seed", seed, "override the config's seed list with one seed");
        cmd->add_option("--out", out_dir, "output directory (default: $IPPAL_OUT or config)");
        cmd->add_option("--jobs", jobs, "parallel campaign jobs");
        cmd->add_flag("--quiet", quiet, "suppress progress output");
    };

    CLI::App* run = app.add_subcommand("run", "run the configured campaign per seed");
    add_common(run);
    CLI::App* bench = app.add_subcommand(
        "benchmark", "run the planner x objective x seed matrix and summarize");
    add_common(bench);
    CLI::App* export_maps =
        app.add_subcommand("export-maps", "convert stored map snapshots to PGM layers");
    export_maps->add_option("run_dir", run_dir, "run directory holding .snap files")->required();
    export_maps->add_flag("--quiet", quiet, "suppress output listing");

    CLI11_PARSE(app, argc, argv);

    ippal::RunOptions opts;
    if (run->count("--seed") || bench->count("--seed")) opts.seed_override = seed;
    opts.out_override = out_dir;
    opts.jobs_override = jobs;
    opts.quiet = quiet;

    if (*run) return ippal::cmd_run(config_path, opts);
    if (*bench) return ippal::cmd_benchmark(config_path, opts);
    if (*export_maps) return ippal::cmd_export_maps(run_dir, quiet);
    return 1;
}
