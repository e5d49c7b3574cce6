#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ippal/core.hpp"
#include "ippal/io.hpp"
#include "ippal/rng.hpp"

namespace ippal {

struct TerrainConfig {
    double width_m = 64.0;
    double height_m = 64.0;
    double cell_size_m = 1.0;
    int classes = 4;
    int feature_dim = 8;
    // Side length, in cells, of the stratified Voronoi seeding grid. Larger
    // values give larger contiguous class blobs (harder exploration).
    double clustering_scale_cells = 16.0;
    // Per-class feature noise stddev. A single entry is shared by all classes.
    std::vector<double> feature_noise = {0.35};
    // Relative share of Voronoi sites per class; uniform when empty. Skewed
    // shares make high-index classes rare and spatially localized.
    std::vector<double> class_weights;
    // Prototype vectors are drawn from this seed when nonnegative, otherwise
    // from the generation seed. Two terrains generated with the same
    // prototype_seed share the feature-to-class mapping (generalisation
    // regime) while their layouts differ.
    int64_t prototype_seed = -1;

    double noise_for(int k) const {
        if (feature_noise.empty()) return 0.0;
        return feature_noise[std::min<size_t>(k, feature_noise.size() - 1)];
    }
};

// Ground-truth class raster plus per-cell feature vectors. Immutable after
// generation; safe for unrestricted concurrent reads.
struct SemanticTerrain {
    double width_m = 0.0;
    double height_m = 0.0;
    double cell_size_m = 1.0;
    int classes = 0;
    int feature_dim = 0;
    Grid<uint8_t> labels;           // rows = height cells, cols = width cells
    std::vector<double> features;   // rows * cols * feature_dim
    std::vector<double> prototypes; // classes * feature_dim

    int rows() const { return labels.rows(); }
    int cols() const { return labels.cols(); }

    double feature(int r, int c, int d) const {
        return features[(static_cast<size_t>(r) * cols() + c) * feature_dim + d];
    }
    double prototype(int k, int d) const {
        return prototypes[static_cast<size_t>(k) * feature_dim + d];
    }
};

struct CameraModel {
    int fov_w = 16;  // pixels
    int fov_h = 16;
    double altitude_m = 30.0;
    double gsd_m = 1.0;  // ground meters per pixel; equals terrain cell size
};

// Axis-aligned region of positions whose camera footprint stays inside the
// terrain. Edge handling: partial observations are never produced.
struct FlyableRegion {
    double xmin = 0.0, xmax = 0.0;
    double ymin = 0.0, ymax = 0.0;
    double altitude_m = 0.0;

    bool contains(const Waypoint& p, double tol = 1e-9) const {
        return p.x >= xmin - tol && p.x <= xmax + tol && p.y >= ymin - tol && p.y <= ymax + tol;
    }

    Waypoint clamp(Waypoint p) const {
        p.x = std::min(std::max(p.x, xmin), xmax);
        p.y = std::min(std::max(p.y, ymin), ymax);
        p.z = altitude_m;
        return p;
    }

    Waypoint top_left() const { return {xmin, ymin, altitude_m}; }
};

inline int exact_cell_count(double extent_m, double cell_size_m, const char* what) {
    const double cells = extent_m / cell_size_m;
    const double rounded = std::round(cells);
    if (rounded < 1.0 || std::abs(cells - rounded) > 1e-9)
        throw ConfigError(std::string(what) + " is not an integer number of cells");
    return static_cast<int>(rounded);
}

inline FlyableRegion flyable_region(const SemanticTerrain& terrain, const CameraModel& cam) {
    FlyableRegion fly;
    fly.xmin = cam.fov_w * cam.gsd_m / 2.0;
    fly.xmax = terrain.width_m - fly.xmin;
    fly.ymin = cam.fov_h * cam.gsd_m / 2.0;
    fly.ymax = terrain.height_m - fly.ymin;
    fly.altitude_m = cam.altitude_m;
    if (fly.xmax < fly.xmin || fly.ymax < fly.ymin)
        throw ConfigError("camera footprint larger than terrain");
    return fly;
}

inline void sample_prototypes(SemanticTerrain& terrain, Rng& rng) {
    const int K = terrain.classes;
    const int D = terrain.feature_dim;
    terrain.prototypes.assign(static_cast<size_t>(K) * D, 0.0);
    const double min_sep = 1.0;
    for (int k = 0; k < K; ++k) {
        for (int attempt = 0; attempt < 200; ++attempt) {
            double norm2 = 0.0;
            std::vector<double> cand(D);
            for (int d = 0; d < D; ++d) {
                cand[d] = rng.normal();
                norm2 += cand[d] * cand[d];
            }
            const double scale = 2.0 / std::sqrt(std::max(norm2, 1e-12));
            for (int d = 0; d < D; ++d) cand[d] *= scale;
            bool separated = true;
            for (int j = 0; j < k && separated; ++j) {
                double dist2 = 0.0;
                for (int d = 0; d < D; ++d) {
                    const double diff = cand[d] - terrain.prototype(j, d);
                    dist2 += diff * diff;
                }
                separated = dist2 >= min_sep * min_sep;
            }
            if (separated || attempt == 199) {
                std::copy(cand.begin(), cand.end(),
                          terrain.prototypes.begin() + static_cast<size_t>(k) * D);
                break;
            }
        }
    }
}

// Apportion `total` sites to K classes by the largest-remainder rule, at
// least one site each.
inline std::vector<int> apportion_sites(int total, int K, const std::vector<double>& weights) {
    std::vector<double> w(K, 1.0);
    if (!weights.empty()) {
        for (int k = 0; k < K; ++k) w[k] = std::max(weights[std::min<size_t>(k, weights.size() - 1)], 1e-12);
    }
    double wsum = 0.0;
    for (double x : w) wsum += x;
    std::vector<int> counts(K, 1);
    int assigned = K;
    std::vector<std::pair<double, int>> remainders(K);
    for (int k = 0; k < K; ++k) {
        const double share = w[k] / wsum * (total - K);
        counts[k] += static_cast<int>(share);
        assigned += static_cast<int>(share);
        remainders[k] = {share - static_cast<int>(share), k};
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (int i = 0; assigned < total; ++i, ++assigned) counts[remainders[i % K].second]++;
    return counts;
}

// Seeded-Voronoi class blobs with Gaussian feature noise. Sites are placed
// one per stratum of a clustering_scale-sized grid so blob sizes track the
// clustering scale; class shares follow config.class_weights.
inline SemanticTerrain generate_terrain(uint64_t seed, const TerrainConfig& config) {
    if (config.classes < 3) throw ConfigError("terrain requires at least 3 classes");
    if (config.feature_dim < 1) throw ConfigError("feature_dim must be positive");
    if (config.clustering_scale_cells < 1.0)
        throw ConfigError("clustering_scale_cells must be >= 1");

    SemanticTerrain terrain;
    terrain.width_m = config.width_m;
    terrain.height_m = config.height_m;
    terrain.cell_size_m = config.cell_size_m;
    terrain.classes = config.classes;
    terrain.feature_dim = config.feature_dim;

    const int cols = exact_cell_count(config.width_m, config.cell_size_m, "terrain width");
    const int rows = exact_cell_count(config.height_m, config.cell_size_m, "terrain height");
    terrain.labels = Grid<uint8_t>(rows, cols);

    Rng rng(derive_seed(seed, 0x7e88a1u, 1));
    Rng proto_rng(derive_seed(
        config.prototype_seed >= 0 ? static_cast<uint64_t>(config.prototype_seed) : seed,
        0x7e88a1u, 2));

    const int nx = std::max(1, static_cast<int>(std::round(cols / config.clustering_scale_cells)));
    const int ny = std::max(1, static_cast<int>(std::round(rows / config.clustering_scale_cells)));
    const int nsites = nx * ny;
    if (nsites < config.classes)
        throw ConfigError("clustering scale leaves fewer Voronoi sites than classes");

    struct Site {
        double x, y;
        uint8_t cls;
    };
    std::vector<Site> sites;
    sites.reserve(nsites);
    const double sw = static_cast<double>(cols) / nx;
    const double sh = static_cast<double>(rows) / ny;
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix)
            sites.push_back({(ix + rng.uniform()) * sw, (iy + rng.uniform()) * sh, 0});

    const std::vector<int> counts = apportion_sites(nsites, config.classes, config.class_weights);
    std::vector<uint8_t> class_of_site;
    class_of_site.reserve(nsites);
    for (int k = 0; k < config.classes; ++k)
        class_of_site.insert(class_of_site.end(), counts[k], static_cast<uint8_t>(k));
    rng.shuffle(class_of_site);
    for (int i = 0; i < nsites; ++i) sites[i].cls = class_of_site[i];

    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const double cx = c + 0.5, cy = r + 0.5;
            double best = std::numeric_limits<double>::infinity();
            uint8_t best_cls = 0;
            for (const Site& s : sites) {
                const double dx = cx - s.x, dy = cy - s.y;
                const double d2 = dx * dx + dy * dy;
                if (d2 < best) {
                    best = d2;
                    best_cls = s.cls;
                }
            }
            terrain.labels.at(r, c) = best_cls;
        }
    }

    sample_prototypes(terrain, proto_rng);

    const int D = config.feature_dim;
    terrain.features.assign(static_cast<size_t>(rows) * cols * D, 0.0);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const int k = terrain.labels.at(r, c);
            const double sigma = config.noise_for(k);
            for (int d = 0; d < D; ++d) {
                const double noise = sigma > 0.0 ? sigma * rng.normal() : 0.0;
                terrain.features[(static_cast<size_t>(r) * cols + c) * D + d] =
                    terrain.prototype(k, d) + noise;
            }
        }
    }
    return terrain;
}

// Footprint of the nadir camera at `position`, centered on the ground
// projection. Throws BoundsError when the rectangle would leave the terrain;
// planners are required to stay inside the flyable region.
inline Footprint footprint_at(const SemanticTerrain& terrain, const CameraModel& cam,
                              const Waypoint& position) {
    if (std::abs(cam.gsd_m - terrain.cell_size_m) > 1e-12)
        throw ConfigError("camera GSD must equal terrain cell size");
    Footprint fp;
    fp.rows = cam.fov_h;
    fp.cols = cam.fov_w;
    fp.row0 = static_cast<int>(std::lround(position.y / terrain.cell_size_m - cam.fov_h / 2.0));
    fp.col0 = static_cast<int>(std::lround(position.x / terrain.cell_size_m - cam.fov_w / 2.0));
    if (fp.row0 < 0 || fp.col0 < 0 || fp.row_end() > terrain.rows() || fp.col_end() > terrain.cols())
        throw BoundsError("camera footprint leaves the terrain");
    return fp;
}

// Feature and ground-truth label crops under a footprint; both copies.
inline std::pair<FeatureImage, LabelImage> crop_image(const SemanticTerrain& terrain,
                                                      const Footprint& fp) {
    if (fp.row0 < 0 || fp.col0 < 0 || fp.row_end() > terrain.rows() ||
        fp.col_end() > terrain.cols() || fp.rows <= 0 || fp.cols <= 0)
        throw BoundsError("crop footprint out of bounds");
    FeatureImage z(fp.rows, fp.cols, terrain.feature_dim);
    LabelImage y(fp.rows, fp.cols);
    for (int r = 0; r < fp.rows; ++r) {
        for (int c = 0; c < fp.cols; ++c) {
            y.at(r, c) = terrain.labels.at(fp.row0 + r, fp.col0 + c);
            for (int d = 0; d < terrain.feature_dim; ++d)
                z.at(r, c, d) = terrain.feature(fp.row0 + r, fp.col0 + c, d);
        }
    }
    return {std::move(z), std::move(y)};
}

// ---- export / import -------------------------------------------------------
// Labels as 8-bit PGM plus a sidecar text header carrying geometry, class
// count, and feature prototypes, so real rasters can be loaded later.

inline void save_terrain(const SemanticTerrain& terrain, const std::filesystem::path& pgm_path) {
    write_pgm8(pgm_path, terrain.labels);
    std::ostringstream ss;
    ss << "ippal-terrain v1\n";
    ss << "width_m " << fmt_double_exact(terrain.width_m) << "\n";
    ss << "height_m " << fmt_double_exact(terrain.height_m) << "\n";
    ss << "cell_size_m " << fmt_double_exact(terrain.cell_size_m) << "\n";
    ss << "classes " << terrain.classes << "\n";
    ss << "feature_dim " << terrain.feature_dim << "\n";
    for (int k = 0; k < terrain.classes; ++k) {
        ss << "prototype " << k;
        for (int d = 0; d < terrain.feature_dim; ++d)
            ss << " " << fmt_double_exact(terrain.prototype(k, d));
        ss << "\n";
    }
    std::filesystem::path header = pgm_path;
    header.replace_extension(".terrain.txt");
    write_text_file(header, ss.str());
}

// Loads labels + sidecar; features are reconstructed from the prototypes
// (noise-free), which preserves the label/feature contract for planners.
inline SemanticTerrain load_terrain(const std::filesystem::path& pgm_path) {
    SemanticTerrain terrain;
    terrain.labels = read_pgm8(pgm_path);
    std::filesystem::path header = pgm_path;
    header.replace_extension(".terrain.txt");
    std::istringstream in(read_text_file(header));
    std::string line;
    if (!std::getline(in, line) || line != "ippal-terrain v1")
        throw Error("bad terrain header: " + header.string());
    std::string key;
    while (in >> key) {
        if (key == "width_m") in >> terrain.width_m;
        else if (key == "height_m") in >> terrain.height_m;
        else if (key == "cell_size_m") in >> terrain.cell_size_m;
        else if (key == "classes") in >> terrain.classes;
        else if (key == "feature_dim") {
            in >> terrain.feature_dim;
            terrain.prototypes.assign(
                static_cast<size_t>(std::max(terrain.classes, 0)) * terrain.feature_dim, 0.0);
        } else if (key == "prototype") {
            int k = 0;
            in >> k;
            for (int d = 0; d < terrain.feature_dim; ++d)
                in >> terrain.prototypes[static_cast<size_t>(k) * terrain.feature_dim + d];
        } else {
            throw Error("unknown terrain header key: " + key);
        }
    }
    const int rows = terrain.labels.rows(), cols = terrain.labels.cols();
    terrain.features.assign(static_cast<size_t>(rows) * cols * terrain.feature_dim, 0.0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int k = terrain.labels.at(r, c);
            if (k >= terrain.classes) throw Error("label raster exceeds class count");
            for (int d = 0; d < terrain.feature_dim; ++d)
                terrain.features[(static_cast<size_t>(r) * cols + c) * terrain.feature_dim + d] =
                    terrain.prototype(k, d);
        }
    return terrain;
}

}  // namespace ippal
