#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "ippal/core.hpp"
#include "ippal/map.hpp"
#include "ippal/terrain.hpp"

namespace ippal {

// Which mapped acquisition layer drives the planning objectives.
enum class ScoreLayer { uncertainty, novelty };

// Read-only view of the map taken at replanning time. Footprint sums are
// O(1) via summed-area tables; planners never touch the live map.
class MapSnapshot {
public:
    MapSnapshot(const MultiLayerMap& map, const CameraModel& cam, ScoreLayer layer)
        : MapSnapshot(map.geom, cam, layer == ScoreLayer::uncertainty ? map.mu_u : map.mu_r,
                      map.train_counts, map.hits) {}

    // Direct construction for tests and toy instances.
    MapSnapshot(const MapGeometry& geom, const CameraModel& cam, const Grid<double>& score,
                const Grid<uint32_t>& train_counts, const Grid<uint32_t>& hits)
        : geom_(geom), cam_(cam), hits_(hits) {
        fly_.xmin = cam.fov_w * cam.gsd_m / 2.0;
        fly_.xmax = geom.cols * geom.cell_size_m - fly_.xmin;
        fly_.ymin = cam.fov_h * cam.gsd_m / 2.0;
        fly_.ymax = geom.rows * geom.cell_size_m - fly_.ymin;
        fly_.altitude_m = cam.altitude_m;
        build_integral(score.data(), iscore_);
        std::vector<double> tc(train_counts.size());
        for (size_t i = 0; i < tc.size(); ++i) tc[i] = train_counts.data()[i];
        build_integral(tc, itc_);
    }

    const MapGeometry& geom() const { return geom_; }
    const CameraModel& camera() const { return cam_; }
    const FlyableRegion& flyable() const { return fly_; }
    const Grid<uint32_t>& hits() const { return hits_; }

    Footprint footprint(const Waypoint& p) const {
        Footprint fp;
        fp.rows = cam_.fov_h;
        fp.cols = cam_.fov_w;
        fp.row0 = static_cast<int>(std::lround(p.y / geom_.cell_size_m - cam_.fov_h / 2.0));
        fp.col0 = static_cast<int>(std::lround(p.x / geom_.cell_size_m - cam_.fov_w / 2.0));
        if (fp.row0 < 0 || fp.col0 < 0 || fp.row_end() > geom_.rows || fp.col_end() > geom_.cols)
            throw BoundsError("snapshot footprint out of bounds");
        return fp;
    }

    double sum_score(const Footprint& fp) const { return rect_sum(iscore_, fp); }
    double sum_train_counts(const Footprint& fp) const { return rect_sum(itc_, fp); }

    // Ground size of one footprint edge along x / y, in meters.
    double fov_ground_x() const { return cam_.fov_w * cam_.gsd_m; }
    double fov_ground_y() const { return cam_.fov_h * cam_.gsd_m; }

private:
    void build_integral(const std::vector<double>& cells, std::vector<double>& out) const {
        const int rows = geom_.rows, cols = geom_.cols;
        out.assign(static_cast<size_t>(rows + 1) * (cols + 1), 0.0);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                out[idx(r + 1, c + 1)] = cells[static_cast<size_t>(r) * cols + c] +
                                         out[idx(r, c + 1)] + out[idx(r + 1, c)] - out[idx(r, c)];
    }

    size_t idx(int r, int c) const { return static_cast<size_t>(r) * (geom_.cols + 1) + c; }

    double rect_sum(const std::vector<double>& integral, const Footprint& fp) const {
        if (fp.row0 < 0 || fp.col0 < 0 || fp.row_end() > geom_.rows || fp.col_end() > geom_.cols)
            throw BoundsError("footprint out of snapshot bounds");
        return integral[idx(fp.row_end(), fp.col_end())] - integral[idx(fp.row0, fp.col_end())] -
               integral[idx(fp.row_end(), fp.col0)] + integral[idx(fp.row0, fp.col0)];
    }

    MapGeometry geom_;
    CameraModel cam_;
    FlyableRegion fly_;
    Grid<uint32_t> hits_;
    std::vector<double> iscore_, itc_;
};

// Forward-simulated train-count increments: each planned measurement adds +1
// over its footprint. Queries report the extra counts inside a rectangle.
struct CountOverlay {
    std::vector<Footprint> added;

    double extra(const Footprint& fp) const {
        double total = 0.0;
        for (const Footprint& a : added) total += overlap_area(fp, a);
        return total;
    }
};

}  // namespace ippal
