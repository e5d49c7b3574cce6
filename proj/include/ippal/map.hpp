#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "ippal/core.hpp"
#include "ippal/io.hpp"

namespace ippal {

struct MapGeometry {
    int rows = 0;
    int cols = 0;
    double cell_size_m = 1.0;

    bool contains(const Footprint& fp) const {
        return fp.row0 >= 0 && fp.col0 >= 0 && fp.rows > 0 && fp.cols > 0 &&
               fp.row_end() <= rows && fp.col_end() <= cols;
    }
};

// Projected per-image measurement: class probabilities plus acquisition
// scores under one camera footprint.
struct Observation {
    Footprint footprint;
    ProbTensor prob;
    ScoreImage uncertainty;
    ScoreImage novelty_score;
    bool is_training_sample = false;
};

// Multi-layer probabilistic terrain map: K semantic log-odds layers,
// running-mean uncertainty and novelty layers, hit and train-count layers.
struct MultiLayerMap {
    MapGeometry geom;
    int classes = 0;
    double logodds_clamp = 10.0;
    double prior_logodds = 0.0;  // logit(1/K)
    double prior_uncertainty = 0.0;
    double prior_novelty = 1.0;
    std::vector<Grid<double>> logodds;  // one layer per class
    Grid<double> mu_u;
    Grid<double> mu_r;
    Grid<uint32_t> hits;
    Grid<uint32_t> train_counts;
};

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline MultiLayerMap make_map(const MapGeometry& geom, int classes, double logodds_clamp = 10.0) {
    if (classes < 3) throw ConfigError("map requires at least 3 semantic layers");
    MultiLayerMap map;
    map.geom = geom;
    map.classes = classes;
    map.logodds_clamp = logodds_clamp;
    map.prior_logodds = logit(1.0 / classes);
    map.prior_uncertainty = std::log(static_cast<double>(classes));
    map.prior_novelty = 1.0;
    map.logodds.assign(classes, Grid<double>(geom.rows, geom.cols, map.prior_logodds));
    map.mu_u = Grid<double>(geom.rows, geom.cols, map.prior_uncertainty);
    map.mu_r = Grid<double>(geom.rows, geom.cols, map.prior_novelty);
    map.hits = Grid<uint32_t>(geom.rows, geom.cols, 0);
    map.train_counts = Grid<uint32_t>(geom.rows, geom.cols, 0);
    return map;
}

// Measurement probabilities can hit 0/1 exactly after saturated softmax; the
// corresponding log odds are clamped to the layer clamp.
inline double measurement_logodds(double p, double clamp) {
    if (p <= 0.0) return -clamp;
    if (p >= 1.0) return clamp;
    return std::min(std::max(logit(p), -clamp), clamp);
}

// Sequential fusion of one observation: recursive log-odds update for each
// semantic layer, running-mean updates for uncertainty and novelty with the
// post-increment hit count (so the first hit overwrites the prior mean).
inline void fuse(MultiLayerMap& map, const Observation& obs) {
    const Footprint& fp = obs.footprint;
    if (!map.geom.contains(fp)) throw BoundsError("observation footprint out of map bounds");
    if (obs.prob.rows != fp.rows || obs.prob.cols != fp.cols || obs.prob.classes != map.classes ||
        obs.uncertainty.rows != fp.rows || obs.uncertainty.cols != fp.cols ||
        obs.novelty_score.rows != fp.rows || obs.novelty_score.cols != fp.cols)
        throw ShapeError("observation images do not match footprint shape");

    for (int r = 0; r < fp.rows; ++r) {
        for (int c = 0; c < fp.cols; ++c) {
            const int mr = fp.row0 + r, mc = fp.col0 + c;
            uint32_t& h = map.hits.at(mr, mc);
            h += 1;
            for (int k = 0; k < map.classes; ++k) {
                double& l = map.logodds[k].at(mr, mc);
                const double meas = measurement_logodds(obs.prob.at(r, c, k), map.logodds_clamp);
                l = std::min(std::max(meas + l - map.prior_logodds, -map.logodds_clamp),
                             map.logodds_clamp);
            }
            double& mu_u = map.mu_u.at(mr, mc);
            mu_u += (obs.uncertainty.at(r, c) - mu_u) / static_cast<double>(h);
            double& mu_r = map.mu_r.at(mr, mc);
            mu_r += (obs.novelty_score.at(r, c) - mu_r) / static_cast<double>(h);
            if (obs.is_training_sample) map.train_counts.at(mr, mc) += 1;
        }
    }
}

// Per-layer sigmoid of the log odds, renormalized across layers. The layers
// are independent binaries; renormalization is a reporting convention.
inline std::vector<double> semantic_posterior(const MultiLayerMap& map, int row, int col) {
    std::vector<double> p(map.classes);
    double total = 0.0;
    for (int k = 0; k < map.classes; ++k) {
        p[k] = sigmoid(map.logodds[k].at(row, col));
        total += p[k];
    }
    for (double& x : p) x /= total;
    return p;
}

// Observed cells bordering unobserved space: H > 0 with at least one
// in-grid four-neighbor where H = 0. Row-major order.
inline std::vector<std::pair<int, int>> frontier_cells(const MultiLayerMap& map) {
    std::vector<std::pair<int, int>> cells;
    const int rows = map.geom.rows, cols = map.geom.cols;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (map.hits.at(r, c) == 0) continue;
            const bool frontier = (r > 0 && map.hits.at(r - 1, c) == 0) ||
                                  (r + 1 < rows && map.hits.at(r + 1, c) == 0) ||
                                  (c > 0 && map.hits.at(r, c - 1) == 0) ||
                                  (c + 1 < cols && map.hits.at(r, c + 1) == 0);
            if (frontier) cells.emplace_back(r, c);
        }
    }
    return cells;
}

struct RegionSums {
    double sum_u = 0.0;
    double sum_r = 0.0;
    double sum_tc = 0.0;
};

// L1 sums of the uncertainty mean, novelty mean, and train counts within a
// footprint. Count smoothing is the caller's responsibility.
inline RegionSums region_sums(const MultiLayerMap& map, const Footprint& fp) {
    if (!map.geom.contains(fp)) throw BoundsError("footprint out of map bounds");
    RegionSums out;
    for (int r = fp.row0; r < fp.row_end(); ++r) {
        for (int c = fp.col0; c < fp.col_end(); ++c) {
            out.sum_u += map.mu_u.at(r, c);
            out.sum_r += map.mu_r.at(r, c);
            out.sum_tc += map.train_counts.at(r, c);
        }
    }
    return out;
}

// One stored measurement for prior recomputation across missions.
struct StoredImage {
    FeatureImage image;
    Footprint footprint;
    bool is_training_sample = false;
};

// Rebuilds the map from uniform priors by re-predicting every stored image
// with the retrained model and fusing the observations in chronological
// order. `predict_obs(stored)` must return an Observation matching the stored
// footprint.
template <typename PredictObs>
MultiLayerMap recompute_priors(const MapGeometry& geom, int classes,
                               const std::vector<StoredImage>& history, PredictObs&& predict_obs,
                               double logodds_clamp = 10.0) {
    MultiLayerMap map = make_map(geom, classes, logodds_clamp);
    for (const StoredImage& stored : history) {
        Observation obs = predict_obs(stored);
        if (obs.footprint.rows != stored.footprint.rows ||
            obs.footprint.cols != stored.footprint.cols)
            throw ShapeError("stored image shape drifted from model configuration");
        obs.footprint = stored.footprint;
        obs.is_training_sample = stored.is_training_sample;
        fuse(map, obs);
    }
    return map;
}

// ---- snapshot serialization -------------------------------------------------
// Raw binary snapshot written during runs; PGM export converts one snapshot
// to per-layer 16-bit rasters plus a text manifest with scale/offset.

inline void save_map_snapshot(const MultiLayerMap& map, const std::filesystem::path& path) {
    std::ostringstream head;
    head << "ippal-map v1\n"
         << map.classes << " " << map.geom.rows << " " << map.geom.cols << " "
         << fmt_double(map.geom.cell_size_m) << " " << fmt_double(map.logodds_clamp) << "\n";
    std::string payload = head.str();
    for (const Grid<double>& layer : map.logodds)
        for (double v : layer.data()) put_f64(payload, v);
    for (double v : map.mu_u.data()) put_f64(payload, v);
    for (double v : map.mu_r.data()) put_f64(payload, v);
    for (uint32_t v : map.hits.data()) put_f64(payload, static_cast<double>(v));
    for (uint32_t v : map.train_counts.data()) put_f64(payload, static_cast<double>(v));
    write_text_file(path, payload);
}

inline MultiLayerMap load_map_snapshot(const std::filesystem::path& path) {
    const std::string blob = read_text_file(path);
    const size_t l1 = blob.find('\n');
    if (l1 == std::string::npos || blob.substr(0, l1) != "ippal-map v1")
        throw Error("bad map snapshot header: " + path.string());
    const size_t l2 = blob.find('\n', l1 + 1);
    if (l2 == std::string::npos) throw Error("bad map snapshot header: " + path.string());
    std::istringstream meta(blob.substr(l1 + 1, l2 - l1 - 1));
    int classes = 0;
    MapGeometry geom;
    double clamp = 10.0;
    meta >> classes >> geom.rows >> geom.cols >> geom.cell_size_m >> clamp;
    if (!meta || classes < 3 || geom.rows <= 0 || geom.cols <= 0)
        throw Error("map snapshot header corrupt: " + path.string());
    MultiLayerMap map = make_map(geom, classes, clamp);
    size_t cursor = l2 + 1;
    auto read_layer = [&](const std::string& name, auto& grid) {
        try {
            for (auto& v : grid.data()) {
                using V = std::decay_t<decltype(v)>;
                v = static_cast<V>(get_f64(blob, cursor));
            }
        } catch (const Error&) {
            throw Error("map snapshot truncated in layer " + name + ": " + path.string());
        }
    };
    for (int k = 0; k < classes; ++k) read_layer("logodds_" + std::to_string(k), map.logodds[k]);
    read_layer("mu_uncertainty", map.mu_u);
    read_layer("mu_novelty", map.mu_r);
    read_layer("hits", map.hits);
    read_layer("train_counts", map.train_counts);
    return map;
}

// Writes one 16-bit PGM per layer next to `out_prefix` and a manifest listing
// file, scale, and offset per layer. Returns the manifest path.
inline std::filesystem::path export_map_pgms(const MultiLayerMap& map,
                                             const std::filesystem::path& out_prefix) {
    std::ostringstream manifest;
    manifest << "ippal-map-export v1\n";
    manifest << "rows " << map.geom.rows << "\ncols " << map.geom.cols << "\ncell_size_m "
             << fmt_double(map.geom.cell_size_m) << "\n";
    auto emit = [&](const std::string& name, const Grid<double>& layer) {
        const std::filesystem::path file = out_prefix.string() + "_" + name + ".pgm";
        const PgmQuant q = write_pgm16(file, layer);
        manifest << "layer " << file.filename().string() << " scale " << fmt_double(q.scale)
                 << " offset " << fmt_double(q.offset) << "\n";
    };
    for (int k = 0; k < map.classes; ++k) emit("logodds_" + std::to_string(k), map.logodds[k]);
    emit("mu_uncertainty", map.mu_u);
    emit("mu_novelty", map.mu_r);
    Grid<double> hits(map.geom.rows, map.geom.cols), tc(map.geom.rows, map.geom.cols);
    for (size_t i = 0; i < hits.size(); ++i) {
        hits.data()[i] = map.hits.data()[i];
        tc.data()[i] = map.train_counts.data()[i];
    }
    emit("hits", hits);
    emit("train_counts", tc);
    const std::filesystem::path manifest_path = out_prefix.string() + "_manifest.txt";
    write_text_file(manifest_path, manifest.str());
    return manifest_path;
}

}  // namespace ippal
