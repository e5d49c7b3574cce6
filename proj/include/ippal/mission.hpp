#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ippal/acquire.hpp"
#include "ippal/core.hpp"
#include "ippal/kinematics.hpp"
#include "ippal/map.hpp"
#include "ippal/metrics.hpp"
#include "ippal/model.hpp"
#include "ippal/planners.hpp"
#include "ippal/rng.hpp"
#include "ippal/snapshot.hpp"
#include "ippal/terrain.hpp"

namespace ippal {

enum class ObjectiveKind { bayes_mc_dropout, bayes_ensemble, entropy, novelty };

inline std::string objective_name(ObjectiveKind kind) {
    switch (kind) {
        case ObjectiveKind::bayes_mc_dropout: return "bayes_mc_dropout";
        case ObjectiveKind::bayes_ensemble: return "bayes_ensemble";
        case ObjectiveKind::entropy: return "entropy";
        case ObjectiveKind::novelty: return "novelty";
    }
    return "unknown";
}

enum class SplitRegime { generalisation, in_domain };

// Thrown if any executed step would exceed the mission budget. The planners
// and the execution loop must make this unreachable.
class BudgetViolation : public Error {
public:
    using Error::Error;
};

struct CampaignConfig {
    TerrainConfig terrain;
    CameraModel camera;
    ModelConfig model;
    KinematicModel kinematics;
    PlannerConfig planner;
    ObjectiveKind objective = ObjectiveKind::bayes_ensemble;
    int missions = 10;
    double budget_s = 120.0;
    bool informed_priors = true;
    bool stream_mapping = false;
    SplitRegime split = SplitRegime::generalisation;
    int test_crops = 500;
    int knn_k = 10;
    // Starting pose as a fraction of the flyable region (0,0 = top-left).
    double start_x_factor = 0.0;
    double start_y_factor = 0.0;
};

// Retrainable model stack: the fixed initial checkpoints plus the current
// parameters. Ensembles hold one entry per member; other objectives hold one.
struct ModelBundle {
    ModelConfig cfg;
    std::vector<ModelParams> checkpoints;
    std::vector<ModelParams> current;
};

// Per-image inference products feeding the map and the training set.
struct InferenceResult {
    ProbTensor prob;
    ScoreImage uncertainty;
    ScoreImage novelty_score;
    LatentGrid latents;
};

// Runs the objective-specific inference path: posterior mean + mutual
// information for the Bayesian objectives, deterministic softmax + entropy
// otherwise. Latent novelty is always computed against the database snapshot.
inline InferenceResult infer_image(const ModelBundle& bundle, ObjectiveKind objective,
                                   const LatentDatabase& db_snapshot, const FeatureImage& z,
                                   uint64_t seed) {
    InferenceResult out;
    switch (objective) {
        case ObjectiveKind::bayes_ensemble: {
            PosteriorPrediction post = posterior_mean(predict_ensemble(bundle.current, z));
            out.uncertainty = mutual_information(post);
            out.prob = std::move(post.mean);
            break;
        }
        case ObjectiveKind::bayes_mc_dropout: {
            PosteriorPrediction post = posterior_mean(predict_mc_dropout(
                bundle.current.front(), z, bundle.cfg.mc_samples, seed, bundle.cfg.dropout_prob));
            out.uncertainty = mutual_information(post);
            out.prob = std::move(post.mean);
            break;
        }
        case ObjectiveKind::entropy:
        case ObjectiveKind::novelty: {
            out.prob = predict(bundle.current.front(), z);
            out.uncertainty = entropy(out.prob);
            break;
        }
    }
    out.latents = encode(bundle.current.front(), z);
    out.novelty_score = novelty(db_snapshot, out.latents, bundle.cfg.patch_factor);
    return out;
}

struct PathTraceRow {
    int mission = 0;
    int step = 0;  // t
    double x = 0.0, y = 0.0, z = 0.0;
    double cost_so_far = 0.0;
};

struct MissionState {
    Waypoint pose;
    MultiLayerMap map;
    ModelBundle models;
    LatentDatabase db;
    TrainingSet training;
    std::vector<StoredImage> history;
    int images_labeled = 0;
};

struct MissionOutcome {
    std::vector<PathTraceRow> trace;
    int images_collected = 0;
    double flight_seconds = 0.0;
};

namespace detail {

inline ScoreLayer objective_layer(ObjectiveKind objective) {
    return objective == ObjectiveKind::novelty ? ScoreLayer::novelty : ScoreLayer::uncertainty;
}

struct CoverageExecutor {
    PlanPath plan;
    size_t next = 0;
};

}  // namespace detail

// One data-collection mission: at each pose the camera image is cropped,
// passed through the (frozen) model, fused into the map, and labeled by the
// ground-truth oracle; then the planner proposes the next measurement
// position. The mission ends when the budget affords no further move or the
// planner holds twice in a row.
inline MissionOutcome run_mission(MissionState& state, const SemanticTerrain& terrain,
                                  const CampaignConfig& cfg, int mission_index, uint64_t seed) {
    const CameraModel& cam = cfg.camera;
    const KinematicModel& km = cfg.kinematics;
    const FlyableRegion fly = flyable_region(terrain, cam);
    const LatentDatabase db_snapshot = state.db;  // frozen for the whole mission
    const ScoreLayer layer = detail::objective_layer(cfg.objective);

    Rng walk_rng(derive_seed(seed, 0x3a11u, mission_index));
    MissionOutcome outcome;
    double spent = 0.0;
    int holds = 0;
    int step = 0;

    ScoreImage pose_score;  // planner-facing score of the image at the pose

    auto collect_at = [&](const Waypoint& pose, bool training_sample) {
        const Footprint fp = footprint_at(terrain, cam, pose);
        auto [z, labels] = crop_image(terrain, fp);
        const InferenceResult inf = infer_image(state.models, cfg.objective, db_snapshot, z,
                                                derive_seed(seed, 0x1f0du, mission_index, step));
        Observation obs;
        obs.footprint = fp;
        obs.prob = inf.prob;
        obs.uncertainty = inf.uncertainty;
        obs.novelty_score = inf.novelty_score;
        obs.is_training_sample = training_sample;
        fuse(state.map, obs);
        state.history.push_back({z, fp, training_sample});
        if (training_sample) {
            pose_score = (layer == ScoreLayer::novelty) ? inf.novelty_score : inf.uncertainty;
            state.training.push_back({std::move(z), std::move(labels), fp});
            db_insert_image(state.db, inf.latents);
            state.images_labeled += 1;
            outcome.images_collected += 1;
        }
    };

    auto record_trace = [&]() {
        outcome.trace.push_back({mission_index, step, state.pose.x, state.pose.y, state.pose.z,
                                 spent});
    };

    detail::CoverageExecutor coverage;
    if (cfg.planner.kind == PlannerKind::coverage)
        coverage.plan = plan_coverage(fly, cam, km, cfg.budget_s, mission_index, cfg.planner);

    if (cfg.budget_s <= 0.0) return outcome;

    record_trace();
    collect_at(state.pose, true);

    while (true) {
        const double remaining = cfg.budget_s - spent;
        PlanStep next{state.pose, true};
        switch (cfg.planner.kind) {
            case PlannerKind::local: {
                const MapSnapshot snap(state.map, cam, layer);
                next = plan_local(snap, pose_score, state.pose, cfg.planner);
                break;
            }
            case PlannerKind::frontier: {
                const MapSnapshot snap(state.map, cam, layer);
                next = plan_frontier(snap, state.pose, remaining, km, cfg.planner, walk_rng);
                break;
            }
            case PlannerKind::optimisation: {
                const MapSnapshot snap(state.map, cam, layer);
                const PlanPath init =
                    plan_greedy_lattice(snap, state.pose, remaining, km, cfg.planner);
                if (init.hold) break;
                const PlanPath refined =
                    refine_path(snap, init, state.pose, remaining, km, cfg.planner,
                                derive_seed(seed, 0xc31u, mission_index, step));
                next = {refined.waypoints.front(), false};
                break;
            }
            case PlannerKind::sampling: {
                const MapSnapshot snap(state.map, cam, layer);
                next = plan_mcts(snap, state.pose, remaining, km, cfg.planner,
                                 derive_seed(seed, 0x9c7u, mission_index, step));
                break;
            }
            case PlannerKind::coverage: {
                while (coverage.next < coverage.plan.waypoints.size() &&
                       ground_distance(coverage.plan.waypoints[coverage.next], state.pose) <= 1e-9)
                    ++coverage.next;
                if (coverage.next < coverage.plan.waypoints.size())
                    next = {coverage.plan.waypoints[coverage.next], false};
                break;
            }
            case PlannerKind::random_local:
                next = plan_random_local(state.pose, fly, cam, cfg.planner, walk_rng);
                break;
            case PlannerKind::random_global:
                next = plan_random_global(state.pose, fly, cam, cfg.planner, walk_rng);
                break;
        }

        if (next.hold || ground_distance(next.target, state.pose) <= 1e-9) {
            holds += 1;
            if (holds >= 2) break;  // stall guard
            continue;
        }
        holds = 0;

        const double hop = flight_time(km, state.pose, next.target);
        if (spent + hop > cfg.budget_s) break;

        // Optional continuous sensor stream: map intermediate images along the
        // leg (exclusive of both endpoints) without labeling them.
        if (cfg.stream_mapping) {
            const double leg = ground_distance(next.target, state.pose);
            const double interval =
                0.5 * std::min(cam.fov_w * cam.gsd_m, cam.fov_h * cam.gsd_m);
            for (double d = interval; d < leg - 1e-9; d += interval) {
                const double f = d / leg;
                const Waypoint mid{state.pose.x + f * (next.target.x - state.pose.x),
                                   state.pose.y + f * (next.target.y - state.pose.y),
                                   fly.altitude_m};
                collect_at(mid, false);
            }
        }

        spent += hop;
        if (spent > cfg.budget_s + 1e-9)
            throw BudgetViolation("executed path cost exceeded the mission budget");
        state.pose = next.target;
        ++step;
        record_trace();
        collect_at(state.pose, true);
    }

    outcome.flight_seconds = spent;
    return outcome;
}

// Evaluation prediction for one test image, matching the objective's
// inference mode.
inline ProbTensor evaluate_prediction(const ModelBundle& bundle, ObjectiveKind objective,
                                      const FeatureImage& z, uint64_t eval_seed) {
    switch (objective) {
        case ObjectiveKind::bayes_ensemble:
            return posterior_mean(predict_ensemble(bundle.current, z)).mean;
        case ObjectiveKind::bayes_mc_dropout:
            return posterior_mean(predict_mc_dropout(bundle.current.front(), z,
                                                     bundle.cfg.mc_samples, eval_seed,
                                                     bundle.cfg.dropout_prob))
                .mean;
        case ObjectiveKind::entropy:
        case ObjectiveKind::novelty:
            return predict(bundle.current.front(), z);
    }
    throw ConfigError("unknown objective");
}

struct TestSet {
    std::vector<TrainingSample> crops;
};

// Fixed per-campaign test set: footprints sampled uniformly from the flyable
// region of the evaluation terrain.
inline TestSet make_test_set(const SemanticTerrain& terrain, const CameraModel& cam, int crops,
                             uint64_t seed) {
    TestSet out;
    const FlyableRegion fly = flyable_region(terrain, cam);
    Rng rng(derive_seed(seed, 0x7e57u));
    for (int i = 0; i < crops; ++i) {
        const Waypoint p{rng.uniform(fly.xmin, fly.xmax), rng.uniform(fly.ymin, fly.ymax),
                         fly.altitude_m};
        const Footprint fp = footprint_at(terrain, cam, p);
        auto [z, labels] = crop_image(terrain, fp);
        out.crops.push_back({std::move(z), std::move(labels), fp});
    }
    return out;
}

inline MetricRow evaluate(const ModelBundle& bundle, ObjectiveKind objective, const TestSet& test,
                          uint64_t eval_seed) {
    if (test.crops.empty()) throw ConfigError("test set is empty");
    Evaluator ev(bundle.cfg.classes);
    for (size_t i = 0; i < test.crops.size(); ++i) {
        const ProbTensor probs = evaluate_prediction(bundle, objective, test.crops[i].image,
                                                     derive_seed(eval_seed, 0xe7a1u, i));
        ev.add_image(probs, test.crops[i].labels);
    }
    MetricRow row;
    row.miou = ev.miou();
    row.accuracy = ev.accuracy();
    row.f1 = ev.macro_f1();
    row.ece = ev.ece();
    row.class_iou = ev.class_iou();
    return row;
}

struct CampaignResult {
    std::vector<MetricRow> rows;
    std::vector<std::vector<PathTraceRow>> traces;  // one per mission
};

// Optional per-mission sink for map snapshots (written by the CLI).
using MapSink = std::function<void(int mission, const MultiLayerMap&)>;

// Full campaign: repeated missions with retraining from the fixed checkpoint
// on the accumulated set, latent database rebuild, informed-prior
// recomputation, and held-out evaluation after each mission.
inline CampaignResult run_campaign(const CampaignConfig& cfg, uint64_t seed,
                                   const MapSink& map_sink = {}) {
    if (cfg.missions < 1) throw ConfigError("campaign needs at least one mission");
    TerrainConfig tcfg = cfg.terrain;
    if (tcfg.prototype_seed < 0)
        tcfg.prototype_seed = static_cast<int64_t>(derive_seed(seed, 0x9270u) >> 1);

    const SemanticTerrain terrain = generate_terrain(derive_seed(seed, 0x7321u), tcfg);
    const SemanticTerrain* eval_terrain = &terrain;
    SemanticTerrain holdout;
    if (cfg.split == SplitRegime::generalisation) {
        holdout = generate_terrain(derive_seed(seed, 0x7322u), tcfg);
        eval_terrain = &holdout;
    }
    const TestSet test = make_test_set(*eval_terrain, cfg.camera, cfg.test_crops, seed);

    ModelConfig mcfg = cfg.model;
    mcfg.classes = tcfg.classes;
    mcfg.feature_dim = tcfg.feature_dim;

    MissionState state;
    state.models.cfg = mcfg;
    const int members = cfg.objective == ObjectiveKind::bayes_ensemble ? mcfg.ensemble_size : 1;
    for (int t = 0; t < members; ++t)
        state.models.checkpoints.push_back(init_params(mcfg, derive_seed(seed, 0x1e17u, t)));
    state.models.current = state.models.checkpoints;

    const FlyableRegion fly = flyable_region(terrain, cfg.camera);
    const Waypoint start{fly.xmin + cfg.start_x_factor * (fly.xmax - fly.xmin),
                         fly.ymin + cfg.start_y_factor * (fly.ymax - fly.ymin), fly.altitude_m};
    state.map = make_map({terrain.rows(), terrain.cols(), terrain.cell_size_m}, tcfg.classes);
    state.db = LatentDatabase(mcfg.latent_dim, cfg.knn_k);

    CampaignResult result;
    for (int m = 0; m < cfg.missions; ++m) {
        state.pose = start;  // each mission is a fresh flight from the start
        const MissionOutcome outcome = run_mission(state, terrain, cfg, m, seed);
        result.traces.push_back(outcome.trace);

        if (!state.training.empty()) {
            for (int t = 0; t < members; ++t)
                state.models.current[t] =
                    train(state.models.checkpoints[t], state.training, mcfg,
                          derive_seed(seed, 0x7a2eu, m, t));
            state.db = rebuild_db(state.models.current.front(), state.training, cfg.knn_k);
        }

        if (cfg.informed_priors) {
            const LatentDatabase& db_now = state.db;
            const ModelBundle& bundle = state.models;
            size_t replay_index = 0;
            state.map = recompute_priors(
                state.map.geom, state.map.classes, state.history,
                [&](const StoredImage& stored) {
                    const InferenceResult inf =
                        infer_image(bundle, cfg.objective, db_now, stored.image,
                                    derive_seed(seed, 0x4e9bu, m, replay_index++));
                    Observation obs;
                    obs.footprint = stored.footprint;
                    obs.prob = inf.prob;
                    obs.uncertainty = inf.uncertainty;
                    obs.novelty_score = inf.novelty_score;
                    obs.is_training_sample = stored.is_training_sample;
                    return obs;
                });
        }

        MetricRow row = evaluate(state.models, cfg.objective, test, derive_seed(seed, 0xed4u, m));
        row.mission = m;
        row.images_labeled = state.images_labeled;
        row.wallclock_s = outcome.flight_seconds;
        result.rows.push_back(std::move(row));

        if (map_sink) map_sink(m, state.map);
    }
    return result;
}

}  // namespace ippal
