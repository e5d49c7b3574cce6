#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ippal/cmaes.hpp"
#include "ippal/core.hpp"
#include "ippal/kinematics.hpp"
#include "ippal/rng.hpp"
#include "ippal/snapshot.hpp"

namespace ippal {

enum class PlannerKind {
    local,
    frontier,
    optimisation,
    sampling,
    coverage,
    random_local,
    random_global
};

inline std::string planner_name(PlannerKind kind) {
    switch (kind) {
        case PlannerKind::local: return "local";
        case PlannerKind::frontier: return "frontier";
        case PlannerKind::optimisation: return "optimisation";
        case PlannerKind::sampling: return "sampling";
        case PlannerKind::coverage: return "coverage";
        case PlannerKind::random_local: return "random_local";
        case PlannerKind::random_global: return "random_global";
    }
    return "unknown";
}

struct PlannerConfig {
    PlannerKind kind = PlannerKind::frontier;
    int horizon = 3;  // P, measurement positions per planned path
    // Sampling-based planner.
    int mcts_simulations = 300;
    double ucb_constant = 1.4142135623730951;
    std::vector<double> action_step_factors = {0.5, 1.0};  // x fov ground size
    // Optimisation-based planner.
    int cmaes_generations = 30;
    double cmaes_sigma0_factor = 0.1;  // x min terrain extent
    // Geometric planners.
    double frontier_spacing_factor = 0.5;  // candidate spacing, x fov ground
    double local_step_factor = 0.5;        // local step size, x fov ground
    double lattice_spacing_factor = 1.0;   // greedy lattice pitch, x fov ground
    // Random-walk baselines.
    double random_min_radius_factor = 0.5;  // x fov ground
    double random_max_radius_factor = 4.0;
    // Smoothing added to train-count sums; negative selects the footprint
    // cell count, which keeps untouched ground maximally attractive.
    double count_smoothing = -1.0;

    double epsilon(const CameraModel& cam) const {
        return count_smoothing >= 0.0 ? count_smoothing
                                      : static_cast<double>(cam.fov_w) * cam.fov_h;
    }
};

struct PlanStep {
    Waypoint target;
    bool hold = false;  // planner found no feasible move
};

struct PlanPath {
    std::vector<Waypoint> waypoints;
    bool hold = false;
};

// ---- objective terms --------------------------------------------------------

// Exploration value of measuring at a footprint, no travel cost (frontier
// objective): score mass normalized by smoothed training-data counts.
inline double area_value(const MapSnapshot& snap, const Footprint& fp, double eps) {
    return snap.sum_score(fp) / (snap.sum_train_counts(fp) + eps);
}

// Per-edge information rate: score mass at the target footprint per unit
// flight time, discounted by forward-simulated training counts. Zero-length
// hops earn nothing rather than dividing by zero.
inline double step_information(const MapSnapshot& snap, const CountOverlay& overlay,
                               const KinematicModel& km, const Waypoint& from, const Waypoint& to,
                               double eps) {
    const double cost = flight_time(km, from, to);
    if (cost <= 0.0) return 0.0;
    const Footprint fp = snap.footprint(to);
    const double tc = snap.sum_train_counts(fp) + overlay.extra(fp) + eps;
    return snap.sum_score(fp) / (cost * tc);
}

// Path information: sum of step terms with the count overlay accumulated
// measurement by measurement.
inline double path_information(const MapSnapshot& snap, const KinematicModel& km,
                               const Waypoint& pose, const std::vector<Waypoint>& waypoints,
                               double eps) {
    CountOverlay overlay;
    double total = 0.0;
    Waypoint from = pose;
    for (const Waypoint& wp : waypoints) {
        total += step_information(snap, overlay, km, from, wp, eps);
        overlay.added.push_back(snap.footprint(wp));
        from = wp;
    }
    return total;
}

// ---- local planner ----------------------------------------------------------

// Follows the image edge with the highest score mass normalized by the edge
// band's training counts. Edge bands are fov/4 wide; ties resolve N, E, S, W.
// If the best direction is blocked by the flyable boundary the next-best edge
// is taken (anti-stall).
inline PlanStep plan_local(const MapSnapshot& snap, const ScoreImage& current_score,
                           const Waypoint& pose, const PlannerConfig& cfg) {
    const Footprint fp = snap.footprint(pose);
    if (current_score.rows != fp.rows || current_score.cols != fp.cols)
        throw ShapeError("score image does not match the pose footprint");
    const double eps = cfg.epsilon(snap.camera());
    const int band_r = std::max(1, fp.rows / 4);
    const int band_c = std::max(1, fp.cols / 4);

    // Local-coordinate bands: N, E, S, W.
    const Footprint bands[4] = {
        {0, 0, band_r, fp.cols},                  // north
        {0, fp.cols - band_c, fp.rows, band_c},   // east
        {fp.rows - band_r, 0, band_r, fp.cols},   // south
        {0, 0, fp.rows, band_c},                  // west
    };
    double value[4];
    for (int dir = 0; dir < 4; ++dir) {
        double score_sum = 0.0;
        for (int r = bands[dir].row0; r < bands[dir].row_end(); ++r)
            for (int c = bands[dir].col0; c < bands[dir].col_end(); ++c)
                score_sum += current_score.at(r, c);
        const Footprint global{fp.row0 + bands[dir].row0, fp.col0 + bands[dir].col0,
                               bands[dir].rows, bands[dir].cols};
        value[dir] = score_sum / (snap.sum_train_counts(global) + eps);
    }

    int order[4] = {0, 1, 2, 3};
    std::stable_sort(order, order + 4, [&](int a, int b) { return value[a] > value[b]; });

    const double step =
        cfg.local_step_factor * std::min(snap.fov_ground_x(), snap.fov_ground_y());
    const double dx[4] = {0.0, 1.0, 0.0, -1.0};
    const double dy[4] = {-1.0, 0.0, 1.0, 0.0};
    for (int i = 0; i < 4; ++i) {
        const int dir = order[i];
        const Waypoint target = snap.flyable().clamp(
            {pose.x + dx[dir] * step, pose.y + dy[dir] * step, pose.z});
        if (ground_distance(target, pose) > 1e-9) return {target, false};
    }
    return {pose, true};
}

// ---- frontier planner -------------------------------------------------------

// Frontier cells of a hit raster: observed cells with an in-grid four-neighbor
// that is unobserved. Row-major order.
inline std::vector<std::pair<int, int>> frontier_cells(const Grid<uint32_t>& hits) {
    std::vector<std::pair<int, int>> cells;
    for (int r = 0; r < hits.rows(); ++r)
        for (int c = 0; c < hits.cols(); ++c) {
            if (hits.at(r, c) == 0) continue;
            if ((r > 0 && hits.at(r - 1, c) == 0) ||
                (r + 1 < hits.rows() && hits.at(r + 1, c) == 0) ||
                (c > 0 && hits.at(r, c - 1) == 0) ||
                (c + 1 < hits.cols() && hits.at(r, c + 1) == 0))
                cells.emplace_back(r, c);
        }
    return cells;
}

inline PlanStep plan_random_global(const Waypoint& pose, const FlyableRegion& fly,
                                   const CameraModel& cam, const PlannerConfig& cfg, Rng& rng);

// Greedy selection over frontier candidates subsampled at fov/2 spacing,
// maximizing score mass over smoothed training counts; ties prefer the
// candidate nearest the pose, then the lowest cell index. Falls back to a
// global random step when no frontier exists.
inline PlanStep plan_frontier(const MapSnapshot& snap, const Waypoint& pose, double budget,
                              const KinematicModel& km, const PlannerConfig& cfg, Rng& rng) {
    const auto cells = frontier_cells(snap.hits());
    if (cells.empty()) return plan_random_global(pose, snap.flyable(), snap.camera(), cfg, rng);

    const double spacing =
        cfg.frontier_spacing_factor * std::min(snap.fov_ground_x(), snap.fov_ground_y());
    const double eps = cfg.epsilon(snap.camera());
    const double cell = snap.geom().cell_size_m;

    std::vector<Waypoint> kept;
    bool found = false;
    Waypoint best{};
    double best_value = 0.0, best_dist = 0.0;
    for (const auto& [r, c] : cells) {
        const Waypoint center{(c + 0.5) * cell, (r + 0.5) * cell, snap.flyable().altitude_m};
        bool crowded = false;
        for (const Waypoint& k : kept)
            if (ground_distance(center, k) < spacing) {
                crowded = true;
                break;
            }
        if (crowded) continue;
        kept.push_back(center);

        const Waypoint candidate = snap.flyable().clamp(center);
        if (flight_time(km, pose, candidate) > budget) continue;
        const double value = area_value(snap, snap.footprint(candidate), eps);
        const double dist = ground_distance(candidate, pose);
        if (!found || value > best_value || (value == best_value && dist < best_dist)) {
            found = true;
            best = candidate;
            best_value = value;
            best_dist = dist;
        }
    }
    if (!found) return {pose, true};
    return {best, false};
}

// ---- greedy lattice + refinement (optimisation planner) ---------------------

// Iteratively appends the lattice point with the highest per-edge information
// rate under the forward-simulated count map; stops once no candidate fits
// the remaining budget.
inline PlanPath plan_greedy_lattice(const MapSnapshot& snap, const Waypoint& pose, double budget,
                                    const KinematicModel& km, const PlannerConfig& cfg) {
    const FlyableRegion& fly = snap.flyable();
    const double sx = cfg.lattice_spacing_factor * snap.fov_ground_x();
    const double sy = cfg.lattice_spacing_factor * snap.fov_ground_y();
    std::vector<Waypoint> lattice;
    for (double y = fly.ymin; y <= fly.ymax + 1e-9; y += sy)
        for (double x = fly.xmin; x <= fly.xmax + 1e-9; x += sx)
            lattice.push_back({std::min(x, fly.xmax), std::min(y, fly.ymax), fly.altitude_m});

    const double eps = cfg.epsilon(snap.camera());
    PlanPath plan;
    CountOverlay overlay;
    Waypoint prev = pose;
    double spent = 0.0;
    for (int i = 0; i < cfg.horizon; ++i) {
        bool found = false;
        Waypoint best{};
        double best_value = -1.0, best_cost = 0.0;
        for (const Waypoint& cand : lattice) {
            if (ground_distance(cand, prev) <= 1e-9) continue;  // zero-cost revisit
            const double cost = flight_time(km, prev, cand);
            if (spent + cost > budget) continue;
            const double value = step_information(snap, overlay, km, prev, cand, eps);
            if (!found || value > best_value) {
                found = true;
                best = cand;
                best_value = value;
                best_cost = cost;
            }
        }
        if (!found) break;
        plan.waypoints.push_back(best);
        overlay.added.push_back(snap.footprint(best));
        spent += best_cost;
        prev = best;
    }
    if (plan.waypoints.empty()) {
        plan.waypoints.push_back(pose);
        plan.hold = true;
    }
    return plan;
}

// Evolutionary fine-tuning of an initial path in the continuous workspace.
// Candidates violating the budget score -infinity; the initial path is
// evaluated up front, so the result never scores below it (elitism).
inline PlanPath refine_path(const MapSnapshot& snap, const PlanPath& init, const Waypoint& pose,
                            double budget, const KinematicModel& km, const PlannerConfig& cfg,
                            uint64_t seed) {
    if (init.hold || init.waypoints.empty()) return init;
    const FlyableRegion& fly = snap.flyable();
    const size_t P = init.waypoints.size();
    std::vector<double> x0(2 * P), lo(2 * P), hi(2 * P);
    for (size_t i = 0; i < P; ++i) {
        x0[2 * i] = init.waypoints[i].x;
        x0[2 * i + 1] = init.waypoints[i].y;
        lo[2 * i] = fly.xmin;
        hi[2 * i] = fly.xmax;
        lo[2 * i + 1] = fly.ymin;
        hi[2 * i + 1] = fly.ymax;
    }
    const double eps = cfg.epsilon(snap.camera());

    auto unpack = [&](const std::vector<double>& x) {
        std::vector<Waypoint> wps(P);
        for (size_t i = 0; i < P; ++i) wps[i] = {x[2 * i], x[2 * i + 1], fly.altitude_m};
        return wps;
    };
    auto objective = [&](const std::vector<double>& x) {
        const std::vector<Waypoint> wps = unpack(x);
        double cost = flight_time(km, pose, wps.front());
        for (size_t i = 1; i < P; ++i) cost += flight_time(km, wps[i - 1], wps[i]);
        if (cost > budget) return -std::numeric_limits<double>::infinity();
        return path_information(snap, km, pose, wps, eps);
    };

    CmaesOptions opt;
    opt.generations = cfg.cmaes_generations;
    opt.seed = seed;
    opt.sigma0 = cfg.cmaes_sigma0_factor *
                 std::min(snap.geom().cols * snap.geom().cell_size_m,
                          snap.geom().rows * snap.geom().cell_size_m);
    const CmaesResult result = cmaes_maximize(x0, lo, hi, objective, opt);

    PlanPath out;
    out.waypoints = unpack(result.best_x);
    return out;
}

// ---- sampling planner (MCTS) -------------------------------------------------

namespace detail {

struct MctsAction {
    double dx, dy;
};

inline std::vector<MctsAction> mcts_actions(const MapSnapshot& snap, const PlannerConfig& cfg) {
    const double base = std::min(snap.fov_ground_x(), snap.fov_ground_y());
    const double diag = std::sqrt(0.5);
    const double hx[8] = {0.0, diag, 1.0, diag, 0.0, -diag, -1.0, -diag};
    const double hy[8] = {-1.0, -diag, 0.0, diag, 1.0, diag, 0.0, -diag};
    std::vector<MctsAction> actions;
    for (double factor : cfg.action_step_factors)
        for (int h = 0; h < 8; ++h) actions.push_back({hx[h] * factor * base, hy[h] * factor * base});
    return actions;
}

struct MctsNode {
    Waypoint pos;
    Footprint fp;
    double remaining = 0.0;
    int depth = 0;
    int parent = -1;
    std::vector<int> untried;                      // feasible action indices, ascending
    std::vector<std::pair<int, int>> children;     // (action index, node index)
    int visits = 0;
    double total_return = 0.0;
};

}  // namespace detail

// Monte-Carlo tree search over the discrete action set. Node state is the
// position, the forward-simulated count overlay along the traversed path, and
// the remaining budget. Rollouts sample actions uniformly at random; tree
// descent uses UCB1 over returns normalized by the running return range, so
// root decisions are invariant to a positive rescaling of the score layer.
inline PlanStep plan_mcts(const MapSnapshot& snap, const Waypoint& pose, double budget,
                          const KinematicModel& km, const PlannerConfig& cfg, uint64_t seed) {
    const std::vector<detail::MctsAction> actions = detail::mcts_actions(snap, cfg);
    const FlyableRegion& fly = snap.flyable();
    const double eps = cfg.epsilon(snap.camera());
    Rng rng(derive_seed(seed, 0x3c75u));

    auto feasible = [&](const Waypoint& pos, double remaining, int action,
                        Waypoint& target, double& cost) {
        target = {pos.x + actions[action].dx, pos.y + actions[action].dy, fly.altitude_m};
        if (!fly.contains(target)) return false;
        cost = flight_time(km, pos, target);
        return cost <= remaining;
    };
    auto feasible_list = [&](const Waypoint& pos, double remaining) {
        std::vector<int> out;
        Waypoint t;
        double c;
        for (int a = 0; a < static_cast<int>(actions.size()); ++a)
            if (feasible(pos, remaining, a, t, c)) out.push_back(a);
        return out;
    };

    std::vector<detail::MctsNode> tree;
    tree.push_back({pose, snap.footprint(pose), budget, 0, -1,
                    feasible_list(pose, budget), {}, 0, 0.0});
    if (tree[0].untried.empty()) return {pose, true};

    double ret_min = std::numeric_limits<double>::infinity();
    double ret_max = -std::numeric_limits<double>::infinity();

    for (int sim = 0; sim < cfg.mcts_simulations; ++sim) {
        // Selection.
        int node = 0;
        CountOverlay overlay;
        double path_return = 0.0;
        std::vector<int> visited{0};
        while (tree[node].untried.empty() && !tree[node].children.empty() &&
               tree[node].depth < cfg.horizon) {
            const double log_n = std::log(static_cast<double>(std::max(tree[node].visits, 1)));
            int best_child = -1;
            double best_ucb = -std::numeric_limits<double>::infinity();
            for (const auto& [action, child] : tree[node].children) {
                const detail::MctsNode& ch = tree[child];
                double q = ch.total_return / std::max(ch.visits, 1);
                q = (ret_max > ret_min) ? (q - ret_min) / (ret_max - ret_min) : 0.5;
                const double ucb =
                    q + cfg.ucb_constant * std::sqrt(log_n / std::max(ch.visits, 1));
                if (ucb > best_ucb) {
                    best_ucb = ucb;
                    best_child = child;
                }
            }
            const detail::MctsNode& parent = tree[node];
            const detail::MctsNode& child = tree[best_child];
            const double cost = flight_time(km, parent.pos, child.pos);
            path_return += snap.sum_score(child.fp) /
                           (cost * (snap.sum_train_counts(child.fp) + overlay.extra(child.fp) + eps));
            overlay.added.push_back(child.fp);
            node = best_child;
            visited.push_back(node);
        }

        // Expansion: next untried action in index order.
        if (!tree[node].untried.empty() && tree[node].depth < cfg.horizon) {
            const int action = tree[node].untried.front();
            tree[node].untried.erase(tree[node].untried.begin());
            Waypoint target;
            double cost = 0.0;
            feasible(tree[node].pos, tree[node].remaining, action, target, cost);
            detail::MctsNode child;
            child.pos = target;
            child.fp = snap.footprint(target);
            child.remaining = tree[node].remaining - cost;
            child.depth = tree[node].depth + 1;
            child.parent = node;
            child.untried = child.depth < cfg.horizon
                                ? feasible_list(target, child.remaining)
                                : std::vector<int>{};
            path_return += snap.sum_score(child.fp) /
                           (cost * (snap.sum_train_counts(child.fp) + overlay.extra(child.fp) + eps));
            overlay.added.push_back(child.fp);
            tree.push_back(child);
            const int child_index = static_cast<int>(tree.size()) - 1;
            tree[node].children.emplace_back(action, child_index);
            node = child_index;
            visited.push_back(node);
        }

        // Rollout: uniform random actions until the horizon or budget runs out.
        Waypoint pos = tree[node].pos;
        double remaining = tree[node].remaining;
        int depth = tree[node].depth;
        while (depth < cfg.horizon) {
            const std::vector<int> options = feasible_list(pos, remaining);
            if (options.empty()) break;
            const int action =
                options[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(options.size()) - 1))];
            Waypoint target;
            double cost = 0.0;
            feasible(pos, remaining, action, target, cost);
            const Footprint fp = snap.footprint(target);
            path_return += snap.sum_score(fp) /
                           (cost * (snap.sum_train_counts(fp) + overlay.extra(fp) + eps));
            overlay.added.push_back(fp);
            pos = target;
            remaining -= cost;
            ++depth;
        }

        // Backup.
        ret_min = std::min(ret_min, path_return);
        ret_max = std::max(ret_max, path_return);
        for (int idx : visited) {
            tree[idx].visits += 1;
            tree[idx].total_return += path_return;
        }
    }

    // Children were created in ascending action order; strict comparison keeps
    // the lowest action index on ties.
    int best_child = -1;
    double best_mean = -std::numeric_limits<double>::infinity();
    for (const auto& [action, child] : tree[0].children) {
        const double mean = tree[child].total_return / std::max(tree[child].visits, 1);
        if (mean > best_mean) {
            best_mean = mean;
            best_child = child;
        }
    }
    if (best_child < 0) return {pose, true};
    return {tree[best_child].pos, false};
}

// ---- baselines ---------------------------------------------------------------

// Boustrophedon sweep over the flyable region. Orientation alternates per
// mission; sweep-line spacing cycles through {1, 1.5} x fov. The path is
// truncated to the longest prefix whose execution cost fits the budget.
inline PlanPath plan_coverage(const FlyableRegion& fly, const CameraModel& cam,
                              const KinematicModel& km, double budget, int mission_index,
                              const PlannerConfig& cfg) {
    const bool horizontal = (mission_index % 2) == 0;
    const double spacing_factor = ((mission_index / 2) % 2 == 0) ? 1.0 : 1.5;
    const double fov_x = cam.fov_w * cam.gsd_m;
    const double fov_y = cam.fov_h * cam.gsd_m;

    std::vector<Waypoint> full;
    if (horizontal) {
        const double line_gap = spacing_factor * fov_y;
        int line = 0;
        for (double y = fly.ymin; y <= fly.ymax + 1e-9; y += line_gap, ++line) {
            std::vector<double> xs;
            for (double x = fly.xmin; x <= fly.xmax + 1e-9; x += fov_x)
                xs.push_back(std::min(x, fly.xmax));
            if (line % 2 == 1) std::reverse(xs.begin(), xs.end());
            for (double x : xs) full.push_back({x, std::min(y, fly.ymax), fly.altitude_m});
        }
    } else {
        const double line_gap = spacing_factor * fov_x;
        int line = 0;
        for (double x = fly.xmin; x <= fly.xmax + 1e-9; x += line_gap, ++line) {
            std::vector<double> ys;
            for (double y = fly.ymin; y <= fly.ymax + 1e-9; y += fov_y)
                ys.push_back(std::min(y, fly.ymax));
            if (line % 2 == 1) std::reverse(ys.begin(), ys.end());
            for (double y : ys) full.push_back({std::min(x, fly.xmax), y, fly.altitude_m});
        }
    }

    PlanPath plan;
    double spent = 0.0;
    for (size_t i = 0; i < full.size(); ++i) {
        if (i > 0) {
            const double hop = flight_time(km, full[i - 1], full[i]);
            if (spent + hop > budget) break;
            spent += hop;
        }
        plan.waypoints.push_back(full[i]);
    }
    if (plan.waypoints.empty()) plan.hold = true;
    (void)cfg;
    return plan;
}

// Random edge direction with the local step size; boundary clipping may yield
// a zero-displacement step, which the mission treats as a hold.
inline PlanStep plan_random_local(const Waypoint& pose, const FlyableRegion& fly,
                                  const CameraModel& cam, const PlannerConfig& cfg, Rng& rng) {
    const double step =
        cfg.local_step_factor * std::min(cam.fov_w * cam.gsd_m, cam.fov_h * cam.gsd_m);
    const double dx[4] = {0.0, 1.0, 0.0, -1.0};
    const double dy[4] = {-1.0, 0.0, 1.0, 0.0};
    const int dir = static_cast<int>(rng.uniform_int(0, 3));
    return {fly.clamp({pose.x + dx[dir] * step, pose.y + dy[dir] * step, pose.z}), false};
}

// Uniform heading with step size sampled uniformly between the minimum and
// maximum radius; clipped to the flyable region.
inline PlanStep plan_random_global(const Waypoint& pose, const FlyableRegion& fly,
                                   const CameraModel& cam, const PlannerConfig& cfg, Rng& rng) {
    const double base = std::min(cam.fov_w * cam.gsd_m, cam.fov_h * cam.gsd_m);
    const double heading = rng.uniform(0.0, 6.283185307179586);
    const double radius =
        rng.uniform(cfg.random_min_radius_factor * base, cfg.random_max_radius_factor * base);
    return {fly.clamp({pose.x + radius * std::cos(heading), pose.y + radius * std::sin(heading),
                       pose.z}),
            false};
}

}  // namespace ippal
