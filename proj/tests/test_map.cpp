#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "ippal/map.hpp"
#include "ippal/rng.hpp"

using namespace ippal;

namespace {

// Observation with constant class probabilities and scores over a footprint.
Observation flat_obs(const Footprint& fp, const std::vector<double>& prob, double u, double r,
                     bool training = false) {
    Observation obs;
    obs.footprint = fp;
    obs.prob = ProbTensor(fp.rows, fp.cols, static_cast<int>(prob.size()));
    for (int rr = 0; rr < fp.rows; ++rr)
        for (int cc = 0; cc < fp.cols; ++cc)
            for (size_t k = 0; k < prob.size(); ++k)
                obs.prob.at(rr, cc, static_cast<int>(k)) = prob[k];
    obs.uncertainty = ScoreImage(fp.rows, fp.cols, ScoreKind::mutual_information);
    std::fill(obs.uncertainty.v.begin(), obs.uncertainty.v.end(), u);
    obs.novelty_score = ScoreImage(fp.rows, fp.cols, ScoreKind::novelty);
    std::fill(obs.novelty_score.v.begin(), obs.novelty_score.v.end(), r);
    obs.is_training_sample = training;
    return obs;
}

MapGeometry geom16() { return {16, 16, 1.0}; }

}  // namespace

TEST_CASE("prior-probability measurements leave log odds unchanged") {
    MultiLayerMap map = make_map(geom16(), 4);
    const Footprint fp{2, 2, 4, 4};
    fuse(map, flat_obs(fp, {0.25, 0.25, 0.25, 0.25}, 0.1, 0.2));
    for (int k = 0; k < 4; ++k)
        REQUIRE(map.logodds[k].at(3, 3) == Catch::Approx(map.prior_logodds).margin(1e-12));
}

TEST_CASE("log-odds fusion matches the hand-evaluated recursion") {
    MultiLayerMap map = make_map(geom16(), 4);
    const Footprint fp{0, 0, 2, 2};
    fuse(map, flat_obs(fp, {0.6, 0.2, 0.1, 0.1}, 0.0, 0.0));
    REQUIRE(sigmoid(map.logodds[0].at(0, 0)) == Catch::Approx(0.6).margin(1e-9));

    fuse(map, flat_obs(fp, {0.6, 0.2, 0.1, 0.1}, 0.0, 0.0));
    // logit(0.6) + logit(0.6) - logit(0.25) = 0.4055 + 0.4055 + 1.0986 = 1.9096
    REQUIRE(map.logodds[0].at(0, 0) == Catch::Approx(1.9095425).margin(1e-6));
    REQUIRE(sigmoid(map.logodds[0].at(0, 0)) == Catch::Approx(0.871).margin(1e-3));
}

TEST_CASE("uncertainty running mean equals the batch mean") {
    MultiLayerMap map = make_map(geom16(), 4);
    const Footprint fp{5, 5, 2, 2};
    for (double u : {0.2, 0.4, 0.6}) fuse(map, flat_obs(fp, {0.25, 0.25, 0.25, 0.25}, u, 0.0));
    REQUIRE(map.mu_u.at(5, 5) == Catch::Approx(0.4).margin(1e-12));
    REQUIRE(map.hits.at(5, 5) == 3);
}

TEST_CASE("first observation overwrites the prior mean") {
    MultiLayerMap map = make_map(geom16(), 4);
    REQUIRE(map.mu_u.at(0, 0) == Catch::Approx(std::log(4.0)));
    REQUIRE(map.mu_r.at(0, 0) == 1.0);
    fuse(map, flat_obs({0, 0, 1, 1}, {0.3, 0.3, 0.2, 0.2}, 0.05, 0.9));
    REQUIRE(map.mu_u.at(0, 0) == Catch::Approx(0.05).margin(1e-15));
    REQUIRE(map.mu_r.at(0, 0) == Catch::Approx(0.9).margin(1e-15));
}

TEST_CASE("train counts track only training samples and never exceed hits") {
    MultiLayerMap map = make_map(geom16(), 4);
    const Footprint fp{1, 1, 3, 3};
    fuse(map, flat_obs(fp, {0.4, 0.2, 0.2, 0.2}, 0.1, 0.1, true));
    fuse(map, flat_obs(fp, {0.4, 0.2, 0.2, 0.2}, 0.1, 0.1, false));
    fuse(map, flat_obs(fp, {0.4, 0.2, 0.2, 0.2}, 0.1, 0.1, true));
    REQUIRE(map.train_counts.at(2, 2) == 2);
    REQUIRE(map.hits.at(2, 2) == 3);
    for (int r = 0; r < map.geom.rows; ++r)
        for (int c = 0; c < map.geom.cols; ++c)
            REQUIRE(map.train_counts.at(r, c) <= map.hits.at(r, c));
}

TEST_CASE("semantic posterior") {
    MultiLayerMap map = make_map(geom16(), 4);

    SECTION("untouched cells are uniform") {
        const std::vector<double> p = semantic_posterior(map, 8, 8);
        for (double x : p) REQUIRE(x == Catch::Approx(0.25).margin(1e-12));
    }

    SECTION("a near-one-hot measurement dominates the argmax") {
        fuse(map, flat_obs({0, 0, 1, 1}, {0.97, 0.01, 0.01, 0.01}, 0.0, 0.0));
        const std::vector<double> p = semantic_posterior(map, 0, 0);
        REQUIRE(std::max_element(p.begin(), p.end()) - p.begin() == 0);
    }

    SECTION("posterior sums to one") {
        fuse(map, flat_obs({3, 3, 2, 2}, {0.5, 0.3, 0.1, 0.1}, 0.0, 0.0));
        const std::vector<double> p = semantic_posterior(map, 3, 3);
        REQUIRE(std::accumulate(p.begin(), p.end(), 0.0) == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("frontier cells") {
    MultiLayerMap map = make_map(geom16(), 4);

    SECTION("untouched map has no frontier") { REQUIRE(frontier_cells(map).empty()); }

    SECTION("an interior footprint's frontier is its perimeter") {
        const Footprint fp{4, 6, 5, 4};
        fuse(map, flat_obs(fp, {0.25, 0.25, 0.25, 0.25}, 0.0, 0.0));
        const auto cells = frontier_cells(map);
        // Rectangle-perimeter oracle.
        std::vector<std::pair<int, int>> oracle;
        for (int r = fp.row0; r < fp.row_end(); ++r)
            for (int c = fp.col0; c < fp.col_end(); ++c)
                if (r == fp.row0 || r == fp.row_end() - 1 || c == fp.col0 ||
                    c == fp.col_end() - 1)
                    oracle.emplace_back(r, c);
        REQUIRE(cells == oracle);
    }

    SECTION("fully observed map has no frontier") {
        fuse(map, flat_obs({0, 0, 16, 16}, {0.25, 0.25, 0.25, 0.25}, 0.0, 0.0));
        REQUIRE(frontier_cells(map).empty());
    }
}

TEST_CASE("region sums") {
    MultiLayerMap map = make_map(geom16(), 4);

    SECTION("fresh-map uncertainty sum is area times ln K") {
        const RegionSums s = region_sums(map, {0, 0, 8, 8});
        REQUIRE(s.sum_u == Catch::Approx(64.0 * std::log(4.0)).margin(1e-9));
        REQUIRE(s.sum_tc == 0.0);
    }

    SECTION("sums over disjoint footprints add") {
        fuse(map, flat_obs({0, 0, 8, 8}, {0.3, 0.3, 0.2, 0.2}, 0.7, 0.4, true));
        fuse(map, flat_obs({8, 8, 8, 8}, {0.3, 0.3, 0.2, 0.2}, 0.2, 0.1, true));
        const RegionSums a = region_sums(map, {0, 0, 8, 8});
        const RegionSums b = region_sums(map, {8, 8, 8, 8});
        const RegionSums whole = region_sums(map, {0, 0, 16, 16});
        REQUIRE(a.sum_u + b.sum_u ==
                Catch::Approx(whole.sum_u - 128.0 * std::log(4.0)).margin(1e-9));
        REQUIRE(a.sum_tc + b.sum_tc == Catch::Approx(whole.sum_tc).margin(1e-12));
    }

    SECTION("out-of-bounds footprints throw") {
        REQUIRE_THROWS_AS(region_sums(map, {10, 10, 8, 8}), BoundsError);
    }
}

TEST_CASE("fusion order invariance and batch-mean property") {
    // 1000 randomized permutation trials, far below clamp saturation.
    Rng rng(1234);
    const MapGeometry geom{8, 8, 1.0};
    const int K = 4;

    std::vector<Observation> obs;
    std::vector<double> uvals;
    for (int i = 0; i < 6; ++i) {
        std::vector<double> p(K);
        double sum = 0.0;
        for (double& x : p) {
            x = 0.2 + 0.6 * rng.uniform();
            sum += x;
        }
        for (double& x : p) x /= sum;
        const double u = rng.uniform();
        uvals.push_back(u);
        obs.push_back(flat_obs({2, 2, 3, 3}, p, u, rng.uniform()));
    }

    MultiLayerMap ref = make_map(geom, K);
    for (const Observation& o : obs) fuse(ref, o);
    const double mean_u = std::accumulate(uvals.begin(), uvals.end(), 0.0) / uvals.size();
    REQUIRE(ref.mu_u.at(3, 3) == Catch::Approx(mean_u).margin(1e-12));

    std::vector<size_t> perm(obs.size());
    for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (int trial = 0; trial < 1000; ++trial) {
        rng.shuffle(perm);
        MultiLayerMap map = make_map(geom, K);
        for (size_t i : perm) fuse(map, obs[i]);
        for (int k = 0; k < K; ++k)
            REQUIRE(map.logodds[k].at(3, 3) ==
                    Catch::Approx(ref.logodds[k].at(3, 3)).margin(1e-9));
        REQUIRE(map.mu_u.at(3, 3) == Catch::Approx(mean_u).margin(1e-12));
    }
}

TEST_CASE("hit conservation and clamp safety") {
    Rng rng(77);
    MultiLayerMap map = make_map(geom16(), 4);
    long long total_area = 0;
    for (int i = 0; i < 200; ++i) {
        const int rows = 1 + static_cast<int>(rng.uniform_int(0, 5));
        const int cols = 1 + static_cast<int>(rng.uniform_int(0, 5));
        const Footprint fp{static_cast<int>(rng.uniform_int(0, 16 - rows)),
                           static_cast<int>(rng.uniform_int(0, 16 - cols)), rows, cols};
        std::vector<double> p(4);
        double sum = 0.0;
        for (double& x : p) {
            x = rng.uniform() + 1e-4;
            sum += x;
        }
        for (double& x : p) x /= sum;
        fuse(map, flat_obs(fp, p, rng.uniform(), rng.uniform()));
        total_area += fp.area();
    }
    long long hits = 0;
    for (uint32_t h : map.hits.data()) hits += h;
    REQUIRE(hits == total_area);
    for (int k = 0; k < 4; ++k)
        for (double l : map.logodds[k].data()) {
            REQUIRE(l <= 10.0);
            REQUIRE(l >= -10.0);
        }
}

TEST_CASE("prior recomputation replays stored footprints") {
    const MapGeometry geom{12, 12, 1.0};
    const int K = 4;

    std::vector<StoredImage> history;
    for (int i = 0; i < 4; ++i) {
        StoredImage s;
        s.footprint = {i, 2 * i, 3, 3};
        s.image = FeatureImage(3, 3, 2);
        s.is_training_sample = (i % 2 == 0);
        history.push_back(s);
    }

    auto predictor = [&](const StoredImage& s) {
        return flat_obs(s.footprint, {0.4, 0.3, 0.2, 0.1}, 0.25, 0.5, s.is_training_sample);
    };

    SECTION("empty history equals the pristine prior map") {
        const MultiLayerMap fresh = recompute_priors(geom, K, {}, predictor);
        const MultiLayerMap prior = make_map(geom, K);
        REQUIRE(fresh.logodds[0].data() == prior.logodds[0].data());
        REQUIRE(fresh.mu_u.data() == prior.mu_u.data());
        REQUIRE(fresh.hits.data() == prior.hits.data());
    }

    SECTION("one stored image equals one fresh fuse") {
        const MultiLayerMap got =
            recompute_priors(geom, K, {history[0]}, predictor);
        MultiLayerMap want = make_map(geom, K);
        fuse(want, predictor(history[0]));
        REQUIRE(got.logodds[1].data() == want.logodds[1].data());
        REQUIRE(got.mu_r.data() == want.mu_r.data());
    }

    SECTION("replayed hit and train counts match the original") {
        MultiLayerMap live = make_map(geom, K);
        for (const StoredImage& s : history) fuse(live, predictor(s));
        const MultiLayerMap replay = recompute_priors(geom, K, history, predictor);
        REQUIRE(replay.hits.data() == live.hits.data());
        REQUIRE(replay.train_counts.data() == live.train_counts.data());
    }
}

TEST_CASE("map snapshot round-trip and pgm export") {
    MultiLayerMap map = make_map({8, 8, 0.5}, 4);
    fuse(map, flat_obs({1, 1, 4, 4}, {0.7, 0.1, 0.1, 0.1}, 0.3, 0.6, true));

    const auto dir = std::filesystem::temp_directory_path() / "ippal_map_test";
    std::filesystem::create_directories(dir);

    save_map_snapshot(map, dir / "m.snap");
    const MultiLayerMap back = load_map_snapshot(dir / "m.snap");
    REQUIRE(back.classes == map.classes);
    for (int k = 0; k < 4; ++k) REQUIRE(back.logodds[k].data() == map.logodds[k].data());
    REQUIRE(back.mu_u.data() == map.mu_u.data());
    REQUIRE(back.hits.data() == map.hits.data());
    REQUIRE(back.train_counts.data() == map.train_counts.data());

    // Quantized export reconstructs every layer within one LSB of scale.
    const auto manifest = export_map_pgms(map, dir / "m");
    REQUIRE(std::filesystem::exists(manifest));
    const std::string text = read_text_file(manifest);
    std::istringstream ss(text);
    std::string line;
    std::getline(ss, line);
    REQUIRE(line == "ippal-map-export v1");
    // Check round-trip error on the uncertainty layer.
    double scale = 0.0, offset = 0.0;
    std::string word;
    while (ss >> word) {
        if (word == "layer") {
            std::string file, tag;
            ss >> file >> tag >> scale >> tag >> offset;
            if (file == "m_mu_uncertainty.pgm") break;
        }
    }
    const Grid<double> restored = read_pgm16(dir / "m_mu_uncertainty.pgm", {scale, offset});
    for (size_t i = 0; i < restored.size(); ++i)
        REQUIRE(std::abs(restored.data()[i] - map.mu_u.data()[i]) <= scale + 1e-12);

    std::filesystem::remove_all(dir);
}
