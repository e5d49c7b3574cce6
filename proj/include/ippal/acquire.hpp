#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ippal/core.hpp"
#include "ippal/model.hpp"

namespace ippal {

// Monte-Carlo posterior: element-wise mean of the member tensors.
struct PosteriorPrediction {
    ProbTensor mean;
    std::vector<ProbTensor> members;
};

inline PosteriorPrediction posterior_mean(std::vector<ProbTensor> members) {
    if (members.empty()) throw ConfigError("posterior requires at least one member tensor");
    const ProbTensor& first = members.front();
    for (const ProbTensor& m : members)
        if (m.rows != first.rows || m.cols != first.cols || m.classes != first.classes)
            throw ShapeError("member tensors have inconsistent shapes");
    PosteriorPrediction post;
    post.mean = ProbTensor(first.rows, first.cols, first.classes);
    const double inv_t = 1.0 / static_cast<double>(members.size());
    for (const ProbTensor& m : members)
        for (size_t i = 0; i < m.v.size(); ++i) post.mean.v[i] += m.v[i];
    for (double& x : post.mean.v) x *= inv_t;
    post.members = std::move(members);
    return post;
}

// Shannon entropy of a probability vector, natural log, 0 ln 0 := 0.
inline double shannon_entropy(const double* p, int k) {
    double h = 0.0;
    for (int i = 0; i < k; ++i)
        if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    return h;
}

// Disagreement-based model uncertainty: posterior-mean entropy minus the mean
// member entropy, per pixel. Tiny negatives from round-off are clamped to 0.
inline ScoreImage mutual_information(const PosteriorPrediction& post) {
    ScoreImage score(post.mean.rows, post.mean.cols, ScoreKind::mutual_information);
    const int K = post.mean.classes;
    const double inv_t = 1.0 / static_cast<double>(post.members.size());
    for (int r = 0; r < post.mean.rows; ++r) {
        for (int c = 0; c < post.mean.cols; ++c) {
            double mi = shannon_entropy(&post.mean.at(r, c, 0), K);
            for (const ProbTensor& m : post.members)
                mi -= inv_t * shannon_entropy(&m.at(r, c, 0), K);
            if (mi < 0.0 && mi >= -1e-9) mi = 0.0;
            score.at(r, c) = mi;
        }
    }
    return score;
}

// Per-pixel prediction entropy of a deterministic forward pass.
inline ScoreImage entropy(const ProbTensor& pred) {
    ScoreImage score(pred.rows, pred.cols, ScoreKind::entropy);
    for (int r = 0; r < pred.rows; ++r)
        for (int c = 0; c < pred.cols; ++c)
            score.at(r, c) = shannon_entropy(&pred.at(r, c, 0), pred.classes);
    return score;
}

// Database of patch latent vectors in insertion order, queried by exact
// exhaustive kNN under cosine distance. Distance ties break on insertion
// index so results are independent of pre-sorting.
class LatentDatabase {
public:
    LatentDatabase() = default;
    explicit LatentDatabase(int dim, int k = 10) : dim_(dim), k_(k) {
        if (k < 1) throw ConfigError("neighbor count k must be >= 1");
    }

    int dim() const { return dim_; }
    int k() const { return k_; }
    size_t size() const { return dim_ > 0 ? flat_.size() / dim_ : 0; }
    bool empty() const { return flat_.empty(); }

    const double* vec(size_t i) const { return &flat_[i * dim_]; }

    void insert(const double* v) {
        flat_.insert(flat_.end(), v, v + dim_);
        norms_.push_back(norm_of(v));
    }

    // Cosine distance 1 - |cos|; zero-norm vectors are maximally distant by
    // convention.
    double cosine_distance(const double* q, double qnorm, size_t i) const {
        if (qnorm <= 0.0 || norms_[i] <= 0.0) return 1.0;
        double dot = 0.0;
        const double* d = vec(i);
        for (int j = 0; j < dim_; ++j) dot += q[j] * d[j];
        return 1.0 - std::abs(dot / (qnorm * norms_[i]));
    }

    // Indices of the k nearest entries (all entries when fewer than k).
    std::vector<size_t> nearest(const double* q, int k) const {
        const double qnorm = norm_of(q);
        std::vector<std::pair<double, size_t>> scored(size());
        for (size_t i = 0; i < size(); ++i) scored[i] = {cosine_distance(q, qnorm, i), i};
        const size_t take = std::min<size_t>(k, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + take, scored.end(),
                          [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first < b.first;
                              return a.second < b.second;
                          });
        std::vector<size_t> out(take);
        for (size_t i = 0; i < take; ++i) out[i] = scored[i].second;
        return out;
    }

    // Mean cosine distance to the k nearest entries.
    double mean_knn_distance(const double* q, int k) const {
        const double qnorm = norm_of(q);
        const std::vector<size_t> nn = nearest(q, k);
        double total = 0.0;
        for (size_t i : nn) total += cosine_distance(q, qnorm, i);
        return total / static_cast<double>(nn.size());
    }

    double norm_of(const double* v) const {
        double n2 = 0.0;
        for (int j = 0; j < dim_; ++j) n2 += v[j] * v[j];
        return std::sqrt(n2);
    }

private:
    int dim_ = 0;
    int k_ = 10;
    std::vector<double> flat_;
    std::vector<double> norms_;
};

// Patch novelty scores upsampled to pixel resolution by nearest neighbor.
// An empty database yields the optimistic prior 1.0 everywhere, flagged.
// The database is not mutated.
inline ScoreImage novelty(const LatentDatabase& db, const LatentGrid& latents, int patch_factor) {
    const int rows = latents.rows * patch_factor;
    const int cols = latents.cols * patch_factor;
    ScoreImage score(rows, cols, ScoreKind::novelty);
    if (db.empty()) {
        score.prior_fill = true;
        std::fill(score.v.begin(), score.v.end(), 1.0);
        return score;
    }
    if (db.dim() != latents.dim) throw ShapeError("latent dimension does not match database");
    for (int pr = 0; pr < latents.rows; ++pr) {
        for (int pc = 0; pc < latents.cols; ++pc) {
            const double value = db.mean_knn_distance(latents.patch(pr, pc), db.k());
            for (int r = pr * patch_factor; r < (pr + 1) * patch_factor; ++r)
                for (int c = pc * patch_factor; c < (pc + 1) * patch_factor; ++c)
                    score.at(r, c) = value;
        }
    }
    return score;
}

// Appends every patch latent of an image, row-major.
inline void db_insert_image(LatentDatabase& db, const LatentGrid& latents) {
    if (db.dim() != latents.dim) throw ShapeError("latent dimension does not match database");
    for (int pr = 0; pr < latents.rows; ++pr)
        for (int pc = 0; pc < latents.cols; ++pc) db.insert(latents.patch(pr, pc));
}

// Fresh database of the training images' representations, in set order.
inline LatentDatabase rebuild_db(const ModelParams& params, const TrainingSet& data, int k = 10) {
    LatentDatabase db(params.latent_dim, k);
    for (const TrainingSample& sample : data) db_insert_image(db, encode(params, sample.image));
    return db;
}

}  // namespace ippal
