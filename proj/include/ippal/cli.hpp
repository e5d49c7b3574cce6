#pragma once

#include <atomic>
#include <exception>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ippal/config.hpp"
#include "ippal/io.hpp"
#include "ippal/metrics.hpp"
#include "ippal/mission.hpp"

namespace ippal {

struct RunOptions {
    std::optional<uint64_t> seed_override;
    std::string out_override;  // empty = use config / environment
    int jobs_override = 0;     // 0 = use config
    bool quiet = false;
};

namespace detail {

inline std::filesystem::path resolve_out_dir(const ExperimentConfig& cfg,
                                             const RunOptions& opts) {
    if (!opts.out_override.empty()) return opts.out_override;
    if (const char* env = std::getenv("IPPAL_OUT"); env && *env)
        return std::filesystem::path(env) / cfg.out_dir;
    return cfg.out_dir;
}

inline std::string cell_name(PlannerKind planner, ObjectiveKind objective, uint64_t seed) {
    return planner_name(planner) + "_" + objective_name(objective) + "_" + std::to_string(seed);
}

inline std::string metrics_csv(const std::vector<MetricRow>& rows, int classes) {
    std::vector<std::string> header{"mission", "images_labeled", "miou", "acc", "f1", "ece"};
    for (int k = 0; k < classes; ++k) header.push_back("class_iou_" + std::to_string(k));
    header.push_back("wallclock_s");
    CsvWriter csv(header);
    for (const MetricRow& row : rows) {
        std::vector<std::string> fields{std::to_string(row.mission),
                                        std::to_string(row.images_labeled),
                                        fmt_double(row.miou),
                                        fmt_double(row.accuracy),
                                        fmt_double(row.f1),
                                        fmt_double(row.ece)};
        for (double iou : row.class_iou) fields.push_back(fmt_double(iou));
        fields.push_back(fmt_double(row.wallclock_s));
        csv.append_row(fields);
    }
    return csv.str();
}

inline std::string trace_csv(const std::vector<PathTraceRow>& rows) {
    CsvWriter csv({"t", "x", "y", "z", "cost_so_far"});
    for (const PathTraceRow& row : rows)
        csv.append_row({std::to_string(row.step), fmt_double(row.x), fmt_double(row.y),
                        fmt_double(row.z), fmt_double(row.cost_so_far)});
    return csv.str();
}

// Runs one (planner, objective, seed) cell and writes its artifacts: the
// metrics CSV next to a private subdirectory holding per-mission path traces
// and raw map snapshots. Returns the metric rows.
inline std::vector<MetricRow> run_cell(const CampaignConfig& base, PlannerKind planner,
                                       ObjectiveKind objective, uint64_t seed,
                                       const std::filesystem::path& out,
                                       std::vector<std::filesystem::path>* written) {
    CampaignConfig cfg = base;
    cfg.planner.kind = planner;
    cfg.objective = objective;

    const std::string name = cell_name(planner, objective, seed);
    const std::filesystem::path cell_dir = out / name;
    std::filesystem::create_directories(cell_dir);

    std::vector<std::filesystem::path> snaps;
    const CampaignResult result =
        run_campaign(cfg, seed, [&](int mission, const MultiLayerMap& map) {
            const std::filesystem::path snap =
                cell_dir / ("map_mission" + std::to_string(mission) + ".snap");
            save_map_snapshot(map, snap);
            snaps.push_back(snap);
        });

    const std::filesystem::path metrics_path = out / (name + ".csv");
    write_text_file(metrics_path, metrics_csv(result.rows, cfg.terrain.classes));
    if (written) written->push_back(metrics_path);
    for (size_t m = 0; m < result.traces.size(); ++m) {
        const std::filesystem::path trace_path =
            cell_dir / ("path_mission" + std::to_string(m) + ".csv");
        write_text_file(trace_path, trace_csv(result.traces[m]));
        if (written) written->push_back(trace_path);
    }
    if (written)
        for (const auto& snap : snaps) written->push_back(snap);
    return result.rows;
}

template <typename Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
    if (jobs <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (int i; (i = next.fetch_add(1)) < n;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    const int workers = std::min(jobs, n);
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

// `run`: one campaign per seed with the configured planner and objective.
inline int cmd_run(const std::filesystem::path& config_path, const RunOptions& opts = {}) {
    ExperimentConfig cfg;
    try {
        cfg = ExperimentConfig::from_file(config_path);
    } catch (const Error& e) {
        std::cerr << "ippal: invalid config " << config_path.string() << ": " << e.what() << "\n";
        return 2;
    }
    try {
        std::vector<uint64_t> seeds =
            opts.seed_override ? std::vector<uint64_t>{*opts.seed_override} : cfg.seeds;
        const std::filesystem::path out = detail::resolve_out_dir(cfg, opts);
        std::filesystem::create_directories(out);
        const int jobs = opts.jobs_override > 0 ? opts.jobs_override : cfg.jobs;

        std::vector<std::vector<std::filesystem::path>> written(seeds.size());
        detail::parallel_for(static_cast<int>(seeds.size()), jobs, [&](int i) {
            detail::run_cell(cfg.campaign, cfg.campaign.planner.kind, cfg.campaign.objective,
                             seeds[i], out, &written[i]);
        });
        if (!opts.quiet)
            for (const auto& files : written)
                for (const auto& f : files) std::cout << f.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "ippal: run failed: " << e.what() << "\n";
        return 1;
    }
}

// `benchmark`: full cross-product of configured planners x objectives x seeds
// plus a summary CSV with the normalized area under the mIoU-vs-labels curve.
inline int cmd_benchmark(const std::filesystem::path& config_path, const RunOptions& opts = {}) {
    ExperimentConfig cfg;
    try {
        cfg = ExperimentConfig::from_file(config_path);
    } catch (const Error& e) {
        std::cerr << "ippal: invalid config " << config_path.string() << ": " << e.what() << "\n";
        return 2;
    }
    try {
        const std::vector<uint64_t> seeds =
            opts.seed_override ? std::vector<uint64_t>{*opts.seed_override} : cfg.seeds;
        const std::filesystem::path out = detail::resolve_out_dir(cfg, opts);
        std::filesystem::create_directories(out);
        const int jobs = opts.jobs_override > 0 ? opts.jobs_override : cfg.jobs;

        struct Cell {
            PlannerKind planner;
            ObjectiveKind objective;
            uint64_t seed;
        };
        std::vector<Cell> cells;
        for (PlannerKind planner : cfg.planners)
            for (ObjectiveKind objective : cfg.objectives)
                for (uint64_t seed : seeds) cells.push_back({planner, objective, seed});

        std::vector<std::vector<MetricRow>> rows(cells.size());
        detail::parallel_for(static_cast<int>(cells.size()), jobs, [&](int i) {
            rows[i] = detail::run_cell(cfg.campaign, cells[i].planner, cells[i].objective,
                                       cells[i].seed, out, nullptr);
            if (!opts.quiet) {
                static std::mutex io_mutex;
                std::lock_guard<std::mutex> lock(io_mutex);
                std::cout << detail::cell_name(cells[i].planner, cells[i].objective,
                                               cells[i].seed)
                          << " done\n";
            }
        });

        CsvWriter summary(
            {"planner", "objective", "seed", "auc_miou", "final_miou", "images_labeled"});
        for (size_t i = 0; i < cells.size(); ++i) {
            std::vector<double> xs, ys;
            for (const MetricRow& row : rows[i]) {
                xs.push_back(row.images_labeled);
                ys.push_back(row.miou);
            }
            summary.append_row({planner_name(cells[i].planner),
                                objective_name(cells[i].objective),
                                std::to_string(cells[i].seed), fmt_double(curve_auc(xs, ys)),
                                fmt_double(ys.back()),
                                std::to_string(rows[i].back().images_labeled)});
        }
        summary.save(out / "benchmark_summary.csv");
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "ippal: benchmark failed: " << e.what() << "\n";
        return 1;
    }
}

// `export-maps`: converts every stored .snap under the run directory to
// per-layer 16-bit PGMs plus a manifest. Idempotent.
inline int cmd_export_maps(const std::filesystem::path& run_dir, bool quiet = false) {
    try {
        if (!std::filesystem::exists(run_dir)) {
            std::cerr << "ippal: no such run directory: " << run_dir.string() << "\n";
            return 1;
        }
        std::vector<std::filesystem::path> snaps;
        for (const auto& entry : std::filesystem::recursive_directory_iterator(run_dir))
            if (entry.is_regular_file() && entry.path().extension() == ".snap")
                snaps.push_back(entry.path());
        std::sort(snaps.begin(), snaps.end());
        for (const auto& snap : snaps) {
            const MultiLayerMap map = load_map_snapshot(snap);
            std::filesystem::path prefix = snap;
            prefix.replace_extension();
            const auto manifest = export_map_pgms(map, prefix);
            if (!quiet) std::cout << manifest.string() << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "ippal: export failed: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace ippal
