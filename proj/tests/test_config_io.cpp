#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>

#include "ippal/cli.hpp"
#include "ippal/config.hpp"

using namespace ippal;

namespace {

const char* kMinimalConfig = R"(# minimal experiment
[terrain]
width_m = 32
height_m = 32
classes = 4
feature_dim = 6
clustering_scale_cells = 8
feature_noise = [0.3]

[camera]
fov_w = 8
fov_h = 8

[model]
latent_dim = 8
patch_factor = 4
max_epochs = 30

[planner]
kind = coverage
horizon = 2

[mission]
objective = entropy
missions = 1
budget_s = 25
test_crops = 30
split = in_domain

[run]
seeds = [0]
jobs = 1
)";

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) {
        path = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

std::set<std::string> relative_files(const std::filesystem::path& root) {
    std::set<std::string> out;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            out.insert(std::filesystem::relative(entry.path(), root).generic_string());
    return out;
}

}  // namespace

TEST_CASE("config parsing") {
    SECTION("minimal config picks up values and defaults") {
        const ExperimentConfig cfg = ExperimentConfig::from_text(kMinimalConfig);
        REQUIRE(cfg.campaign.terrain.classes == 4);
        REQUIRE(cfg.campaign.camera.fov_w == 8);
        REQUIRE(cfg.campaign.model.latent_dim == 8);
        REQUIRE(cfg.campaign.planner.kind == PlannerKind::coverage);
        REQUIRE(cfg.campaign.objective == ObjectiveKind::entropy);
        REQUIRE(cfg.campaign.missions == 1);
        REQUIRE(cfg.campaign.split == SplitRegime::in_domain);
        REQUIRE(cfg.seeds == std::vector<uint64_t>{0});
        // Untouched defaults.
        REQUIRE(cfg.campaign.kinematics.v_max == 2.0);
        REQUIRE(cfg.campaign.planner.mcts_simulations == 300);
    }

    SECTION("serialization round-trips to an equal config") {
        const ExperimentConfig cfg = ExperimentConfig::from_text(kMinimalConfig);
        const ExperimentConfig back = ExperimentConfig::from_text(cfg.serialize());
        REQUIRE(back.serialize() == cfg.serialize());
    }

    SECTION("unknown keys are rejected with the line number") {
        const std::string typo = std::string(kMinimalConfig) + "\n[terrain]\nwidht = 3\n";
        REQUIRE_THROWS_WITH(ExperimentConfig::from_text(typo),
                            Catch::Matchers::ContainsSubstring("unknown key `widht`"));
    }

    SECTION("syntax errors carry line-precise diagnostics") {
        REQUIRE_THROWS_WITH(ExperimentConfig::from_text("[terrain\nwidth_m = 3\n"),
                            Catch::Matchers::ContainsSubstring("line 1"));
        REQUIRE_THROWS_WITH(ExperimentConfig::from_text("[terrain]\nwidth_m\n"),
                            Catch::Matchers::ContainsSubstring("line 2"));
    }

    SECTION("semantic validation") {
        REQUIRE_THROWS_AS(ExperimentConfig::from_text("[run]\nseeds = []\n"), ConfigError);
        REQUIRE_THROWS_WITH(ExperimentConfig::from_text("[planner]\nkind = warp_drive\n"),
                            Catch::Matchers::ContainsSubstring("unknown planner"));
    }
}

TEST_CASE("cmd_run behavior") {
    SECTION("missing config file exits 2 and names the path") {
        REQUIRE(cmd_run("/nonexistent/ippal.conf", {}) == 2);
    }

    SECTION("a valid minimal run produces exactly the declared files") {
        TempDir dir("ippal_cli_run");
        const auto config_path = dir.path / "exp.conf";
        write_text_file(config_path, kMinimalConfig);
        RunOptions opts;
        opts.out_override = (dir.path / "out").string();
        opts.quiet = true;
        REQUIRE(cmd_run(config_path, opts) == 0);

        const std::set<std::string> files = relative_files(dir.path / "out");
        const std::set<std::string> expected{
            "coverage_entropy_0.csv",
            "coverage_entropy_0/path_mission0.csv",
            "coverage_entropy_0/map_mission0.snap",
        };
        REQUIRE(files == expected);
    }

    SECTION("reruns produce byte-identical metric CSVs") {
        TempDir dir("ippal_cli_rerun");
        const auto config_path = dir.path / "exp.conf";
        write_text_file(config_path, kMinimalConfig);
        RunOptions opts;
        opts.quiet = true;
        opts.out_override = (dir.path / "a").string();
        REQUIRE(cmd_run(config_path, opts) == 0);
        opts.out_override = (dir.path / "b").string();
        REQUIRE(cmd_run(config_path, opts) == 0);
        REQUIRE(read_text_file(dir.path / "a" / "coverage_entropy_0.csv") ==
                read_text_file(dir.path / "b" / "coverage_entropy_0.csv"));
    }
}

TEST_CASE("cmd_benchmark emits the full matrix and summary") {
    TempDir dir("ippal_cli_bench");
    const auto config_path = dir.path / "bench.conf";
    write_text_file(config_path,
                    std::string(kMinimalConfig) +
                        "planners = [coverage, random_global]\nobjectives = [entropy, novelty]\n");
    RunOptions opts;
    opts.quiet = true;
    opts.out_override = (dir.path / "out").string();
    opts.jobs_override = 2;
    REQUIRE(cmd_benchmark(config_path, opts) == 0);

    const std::string summary = read_text_file(dir.path / "out" / "benchmark_summary.csv");
    // Header + 2 planners x 2 objectives x 1 seed.
    REQUIRE(std::count(summary.begin(), summary.end(), '\n') == 1 + 4);
    for (const std::string& cell :
         {"coverage_entropy_0", "coverage_novelty_0", "random_global_entropy_0",
          "random_global_novelty_0"})
        REQUIRE(std::filesystem::exists(dir.path / "out" / (cell + ".csv")));
}

TEST_CASE("cmd_export_maps") {
    SECTION("empty run directory exits 0 and writes nothing") {
        TempDir dir("ippal_cli_export_empty");
        REQUIRE(cmd_export_maps(dir.path, true) == 0);
        REQUIRE(relative_files(dir.path).empty());
    }

    SECTION("exports are idempotent") {
        TempDir dir("ippal_cli_export");
        MultiLayerMap map = make_map({8, 8, 1.0}, 4);
        Observation obs;
        obs.footprint = {1, 1, 3, 3};
        obs.prob = ProbTensor(3, 3, 4);
        for (double& v : obs.prob.v) v = 0.25;
        obs.prob.at(0, 0, 1) = 0.7;
        obs.prob.at(0, 0, 0) = 0.1;
        obs.prob.at(0, 0, 2) = 0.1;
        obs.prob.at(0, 0, 3) = 0.1;
        obs.uncertainty = ScoreImage(3, 3, ScoreKind::mutual_information);
        obs.novelty_score = ScoreImage(3, 3, ScoreKind::novelty);
        fuse(map, obs);
        save_map_snapshot(map, dir.path / "map_mission0.snap");

        REQUIRE(cmd_export_maps(dir.path, true) == 0);
        const auto manifest = dir.path / "map_mission0_manifest.txt";
        REQUIRE(std::filesystem::exists(manifest));
        const std::string first = read_text_file(manifest);
        const std::string first_layer = read_text_file(dir.path / "map_mission0_logodds_1.pgm");

        REQUIRE(cmd_export_maps(dir.path, true) == 0);
        REQUIRE(read_text_file(manifest) == first);
        REQUIRE(read_text_file(dir.path / "map_mission0_logodds_1.pgm") == first_layer);
    }

    SECTION("corrupt snapshots fail naming the layer") {
        TempDir dir("ippal_cli_export_bad");
        MultiLayerMap map = make_map({8, 8, 1.0}, 4);
        save_map_snapshot(map, dir.path / "map.snap");
        std::string blob = read_text_file(dir.path / "map.snap");
        blob.resize(blob.size() / 2);  // truncate mid-payload
        write_text_file(dir.path / "map.snap", blob);
        REQUIRE(cmd_export_maps(dir.path, true) == 1);
    }
}
