#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ippal/core.hpp"
#include "ippal/io.hpp"
#include "ippal/rng.hpp"

namespace ippal {

struct ModelConfig {
    int feature_dim = 8;   // D, input channels
    int latent_dim = 16;   // C, encoder width = patch latent dimension
    int classes = 4;       // K
    int patch_factor = 8;  // s, latent spatial downsampling; must divide fov dims
    double dropout_prob = 0.5;
    // Weight decay; negative means recompute (1 - p) / (2N) at each retraining.
    double weight_decay = -1.0;
    double learning_rate = 0.1;
    int batch_size = 8;
    int max_epochs = 200;
    // Stop once the epoch loss improves by less than this relative amount for
    // converge_patience consecutive epochs.
    double converge_rel_tol = 1e-4;
    int converge_patience = 5;
    int ensemble_size = 4;
    int mc_samples = 8;

    double effective_weight_decay(int n_images) const {
        if (weight_decay >= 0.0) return weight_decay;
        return (1.0 - dropout_prob) / (2.0 * std::max(n_images, 1));
    }
};

// Encoder: per-pixel affine + tanh, then s x s mean pooling to patch latents.
// Decoder: linear softmax over the patch latent, broadcast back to its pixels.
struct ModelParams {
    int feature_dim = 0;
    int latent_dim = 0;
    int classes = 0;
    int patch_factor = 0;
    std::vector<double> enc_w;  // latent_dim x feature_dim, row-major
    std::vector<double> enc_b;  // latent_dim
    std::vector<double> dec_w;  // classes x latent_dim, row-major
    std::vector<double> dec_b;  // classes

    bool same_shape(const ModelParams& o) const {
        return feature_dim == o.feature_dim && latent_dim == o.latent_dim &&
               classes == o.classes && patch_factor == o.patch_factor;
    }

    bool operator==(const ModelParams& o) const {
        return same_shape(o) && enc_w == o.enc_w && enc_b == o.enc_b && dec_w == o.dec_w &&
               dec_b == o.dec_b;
    }
};

struct TrainingSample {
    FeatureImage image;
    LabelImage labels;
    Footprint footprint;
};

using TrainingSet = std::vector<TrainingSample>;

inline ModelParams init_params(const ModelConfig& cfg, uint64_t seed) {
    ModelParams p;
    p.feature_dim = cfg.feature_dim;
    p.latent_dim = cfg.latent_dim;
    p.classes = cfg.classes;
    p.patch_factor = cfg.patch_factor;
    Rng rng(derive_seed(seed, 0x1417u));
    const double enc_scale = 1.0 / std::sqrt(static_cast<double>(cfg.feature_dim));
    const double dec_scale = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim));
    p.enc_w.resize(static_cast<size_t>(cfg.latent_dim) * cfg.feature_dim);
    for (double& w : p.enc_w) w = enc_scale * rng.normal();
    p.enc_b.assign(cfg.latent_dim, 0.0);
    p.dec_w.resize(static_cast<size_t>(cfg.classes) * cfg.latent_dim);
    for (double& w : p.dec_w) w = dec_scale * rng.normal();
    p.dec_b.assign(cfg.classes, 0.0);
    return p;
}

namespace detail {

inline void check_patchable(const ModelParams& p, int rows, int cols) {
    if (rows <= 0 || cols <= 0) throw ShapeError("empty image");
    if (rows % p.patch_factor != 0 || cols % p.patch_factor != 0)
        throw ShapeError("patch factor must divide image dimensions");
}

inline void check_input(const ModelParams& p, const FeatureImage& z) {
    if (z.depth != p.feature_dim) throw ShapeError("feature depth does not match model");
    check_patchable(p, z.rows, z.cols);
}

// Forward pass with optional row-dropout masks (inverted scaling already
// applied by the caller via `enc_keep`/`dec_keep` multipliers).
struct Forward {
    LatentGrid latents;          // pooled tanh activations
    std::vector<double> hidden;  // per-pixel tanh activations (rows*cols*C)
    ProbTensor probs;
};

inline Forward forward(const ModelParams& p, const FeatureImage& z,
                       const std::vector<double>* enc_row_scale = nullptr,
                       const std::vector<double>* dec_row_scale = nullptr) {
    check_input(p, z);
    const int s = p.patch_factor;
    const int C = p.latent_dim, D = p.feature_dim, K = p.classes;
    const int prows = z.rows / s, pcols = z.cols / s;

    Forward f;
    f.hidden.assign(static_cast<size_t>(z.rows) * z.cols * C, 0.0);
    f.latents = LatentGrid(prows, pcols, C);
    f.probs = ProbTensor(z.rows, z.cols, K);

    // Row dropout scales weight rows, not biases.
    for (int r = 0; r < z.rows; ++r) {
        for (int c = 0; c < z.cols; ++c) {
            double* h = &f.hidden[(static_cast<size_t>(r) * z.cols + c) * C];
            const double* feat = &z.v[(static_cast<size_t>(r) * z.cols + c) * D];
            for (int i = 0; i < C; ++i) {
                double acc = 0.0;
                const double* w = &p.enc_w[static_cast<size_t>(i) * D];
                for (int d = 0; d < D; ++d) acc += w[d] * feat[d];
                if (enc_row_scale) acc *= (*enc_row_scale)[i];
                h[i] = acc + p.enc_b[i];
            }
        }
    }
    for (double& x : f.hidden) x = std::tanh(x);

    const double inv_patch = 1.0 / (s * s);
    for (int pr = 0; pr < prows; ++pr) {
        for (int pc = 0; pc < pcols; ++pc) {
            double* lat = &f.latents.v[(static_cast<size_t>(pr) * pcols + pc) * C];
            for (int r = pr * s; r < (pr + 1) * s; ++r)
                for (int c = pc * s; c < (pc + 1) * s; ++c) {
                    const double* h = &f.hidden[(static_cast<size_t>(r) * z.cols + c) * C];
                    for (int i = 0; i < C; ++i) lat[i] += h[i];
                }
            for (int i = 0; i < C; ++i) lat[i] *= inv_patch;

            std::vector<double> logits(K);
            for (int k = 0; k < K; ++k) {
                double acc = p.dec_b[k];
                const double* w = &p.dec_w[static_cast<size_t>(k) * C];
                const double scale = dec_row_scale ? (*dec_row_scale)[k] : 1.0;
                for (int i = 0; i < C; ++i) acc += scale * w[i] * lat[i];
                logits[k] = acc;
            }
            double mx = logits[0];
            for (int k = 1; k < K; ++k) mx = std::max(mx, logits[k]);
            double zsum = 0.0;
            for (int k = 0; k < K; ++k) {
                logits[k] = std::exp(logits[k] - mx);
                zsum += logits[k];
            }
            for (int r = pr * s; r < (pr + 1) * s; ++r)
                for (int c = pc * s; c < (pc + 1) * s; ++c)
                    for (int k = 0; k < K; ++k) f.probs.at(r, c, k) = logits[k] / zsum;
        }
    }
    return f;
}

}  // namespace detail

// Deterministic inference (no dropout). Per-pixel class vectors sum to 1.
inline ProbTensor predict(const ModelParams& params, const FeatureImage& z) {
    return detail::forward(params, z).probs;
}

// Patch latents after the encoder stage; deterministic.
inline LatentGrid encode(const ModelParams& params, const FeatureImage& z) {
    return std::move(detail::forward(params, z).latents);
}

// T stochastic forward passes with row dropout on encoder and decoder weight
// matrices; surviving rows are rescaled by 1/(1-p) so p = 0 reduces exactly
// to deterministic inference.
inline std::vector<ProbTensor> predict_mc_dropout(const ModelParams& params, const FeatureImage& z,
                                                  int T, uint64_t seed, double dropout_prob) {
    if (T < 1) throw ConfigError("mc_samples must be >= 1");
    if (dropout_prob < 0.0 || dropout_prob >= 1.0)
        throw ConfigError("dropout_prob must lie in [0, 1)");
    if (dropout_prob == 0.0 && T > 1)
        std::clog << "ippal: dropout_prob = 0 with T > 1; all MC samples are identical\n";
    std::vector<ProbTensor> out;
    out.reserve(T);
    Rng rng(derive_seed(seed, 0xd801u));
    const double keep = 1.0 - dropout_prob;
    std::vector<double> enc_scale(params.latent_dim), dec_scale(params.classes);
    for (int t = 0; t < T; ++t) {
        for (double& sc : enc_scale) sc = (rng.uniform() < keep) ? 1.0 / keep : 0.0;
        for (double& sc : dec_scale) sc = (rng.uniform() < keep) ? 1.0 / keep : 0.0;
        out.push_back(detail::forward(params, z, &enc_scale, &dec_scale).probs);
    }
    return out;
}

// One deterministic tensor per ensemble member.
inline std::vector<ProbTensor> predict_ensemble(const std::vector<ModelParams>& members,
                                                const FeatureImage& z) {
    if (members.empty()) throw ConfigError("ensemble must be non-empty");
    for (const ModelParams& m : members)
        if (!m.same_shape(members.front())) throw ShapeError("heterogeneous ensemble shapes");
    std::vector<ProbTensor> out;
    out.reserve(members.size());
    for (const ModelParams& m : members) out.push_back(predict(m, z));
    return out;
}

// Cross-entropy with weight decay: mean over images of the mean per-pixel
// negative log-likelihood, plus weight_decay * squared weight norm (biases
// unregularized).
inline double training_loss(const ModelParams& params, const TrainingSet& data,
                            double weight_decay) {
    if (data.empty()) throw ConfigError("training set is empty");
    double total = 0.0;
    for (const TrainingSample& sample : data) {
        const ProbTensor probs = predict(params, sample.image);
        double ce = 0.0;
        for (int r = 0; r < probs.rows; ++r)
            for (int c = 0; c < probs.cols; ++c)
                ce -= std::log(std::max(probs.at(r, c, sample.labels.at(r, c)), 1e-300));
        total += ce / (static_cast<double>(probs.rows) * probs.cols);
    }
    total /= static_cast<double>(data.size());
    double reg = 0.0;
    for (double w : params.enc_w) reg += w * w;
    for (double w : params.dec_w) reg += w * w;
    return total + weight_decay * reg;
}

struct LossGradient {
    double loss = 0.0;
    ModelParams grad;
};

// Analytic gradient of training_loss over `data` (all images weighted 1/N).
inline LossGradient loss_and_gradient(const ModelParams& params, const TrainingSet& data,
                                      double weight_decay) {
    if (data.empty()) throw ConfigError("training set is empty");
    const int C = params.latent_dim, D = params.feature_dim, K = params.classes;
    const int s = params.patch_factor;

    LossGradient out;
    out.grad = params;
    std::fill(out.grad.enc_w.begin(), out.grad.enc_w.end(), 0.0);
    std::fill(out.grad.enc_b.begin(), out.grad.enc_b.end(), 0.0);
    std::fill(out.grad.dec_w.begin(), out.grad.dec_w.end(), 0.0);
    std::fill(out.grad.dec_b.begin(), out.grad.dec_b.end(), 0.0);

    const double inv_n = 1.0 / static_cast<double>(data.size());
    for (const TrainingSample& sample : data) {
        const FeatureImage& z = sample.image;
        detail::Forward f = detail::forward(params, z);
        const int prows = z.rows / s, pcols = z.cols / s;
        const double pixel_w = inv_n / (static_cast<double>(z.rows) * z.cols);

        for (int r = 0; r < z.rows; ++r)
            for (int c = 0; c < z.cols; ++c)
                out.loss -= inv_n / (static_cast<double>(z.rows) * z.cols) *
                            std::log(std::max(f.probs.at(r, c, sample.labels.at(r, c)), 1e-300));

        std::vector<double> dlatent(static_cast<size_t>(prows) * pcols * C, 0.0);
        for (int pr = 0; pr < prows; ++pr) {
            for (int pc = 0; pc < pcols; ++pc) {
                // dL/dlogit_k accumulated over the patch's pixels.
                std::vector<double> glogit(K, 0.0);
                for (int r = pr * s; r < (pr + 1) * s; ++r)
                    for (int c = pc * s; c < (pc + 1) * s; ++c) {
                        const int y = sample.labels.at(r, c);
                        for (int k = 0; k < K; ++k)
                            glogit[k] += pixel_w * (f.probs.at(r, c, k) - (k == y ? 1.0 : 0.0));
                    }
                const double* lat = f.latents.patch(pr, pc);
                double* dlat = &dlatent[(static_cast<size_t>(pr) * pcols + pc) * C];
                for (int k = 0; k < K; ++k) {
                    out.grad.dec_b[k] += glogit[k];
                    double* gw = &out.grad.dec_w[static_cast<size_t>(k) * C];
                    const double* w = &params.dec_w[static_cast<size_t>(k) * C];
                    for (int i = 0; i < C; ++i) {
                        gw[i] += glogit[k] * lat[i];
                        dlat[i] += glogit[k] * w[i];
                    }
                }
            }
        }

        const double inv_patch = 1.0 / (s * s);
        for (int r = 0; r < z.rows; ++r) {
            for (int c = 0; c < z.cols; ++c) {
                const double* h = &f.hidden[(static_cast<size_t>(r) * z.cols + c) * C];
                const double* feat = &z.v[(static_cast<size_t>(r) * z.cols + c) * D];
                const double* dlat = &dlatent[(static_cast<size_t>(r / s) * pcols + (c / s)) * C];
                for (int i = 0; i < C; ++i) {
                    const double dpre = dlat[i] * inv_patch * (1.0 - h[i] * h[i]);
                    out.grad.enc_b[i] += dpre;
                    double* gw = &out.grad.enc_w[static_cast<size_t>(i) * D];
                    for (int d = 0; d < D; ++d) gw[d] += dpre * feat[d];
                }
            }
        }
    }

    double reg = 0.0;
    for (size_t i = 0; i < params.enc_w.size(); ++i) {
        reg += params.enc_w[i] * params.enc_w[i];
        out.grad.enc_w[i] += 2.0 * weight_decay * params.enc_w[i];
    }
    for (size_t i = 0; i < params.dec_w.size(); ++i) {
        reg += params.dec_w[i] * params.dec_w[i];
        out.grad.dec_w[i] += 2.0 * weight_decay * params.dec_w[i];
    }
    out.loss += weight_decay * reg;
    return out;
}

// Retrains from `checkpoint` by seeded mini-batch gradient descent. Returns
// the parameters with the lowest full training loss seen, so the result is
// never worse than the checkpoint on `data`.
inline ModelParams train(const ModelParams& checkpoint, const TrainingSet& data,
                         const ModelConfig& cfg, uint64_t seed) {
    if (data.empty()) throw ConfigError("cannot train on an empty training set");
    for (const TrainingSample& sample : data) {
        detail::check_input(checkpoint, sample.image);
        if (sample.labels.rows != sample.image.rows || sample.labels.cols != sample.image.cols)
            throw ShapeError("label image does not match feature image");
    }
    const double lambda = cfg.effective_weight_decay(static_cast<int>(data.size()));

    ModelParams params = checkpoint;
    ModelParams best = checkpoint;
    double best_loss = training_loss(checkpoint, data, lambda);
    double prev_loss = best_loss;

    Rng rng(derive_seed(seed, 0x7a19u));
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    int flat_epochs = 0;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            TrainingSet batch;
            const size_t end = std::min(order.size(), start + cfg.batch_size);
            batch.reserve(end - start);
            for (size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
            const LossGradient lg = loss_and_gradient(params, batch, lambda);
            if (!std::isfinite(lg.loss)) throw TrainingDivergence("non-finite mini-batch loss");
            for (size_t i = 0; i < params.enc_w.size(); ++i)
                params.enc_w[i] -= cfg.learning_rate * lg.grad.enc_w[i];
            for (size_t i = 0; i < params.enc_b.size(); ++i)
                params.enc_b[i] -= cfg.learning_rate * lg.grad.enc_b[i];
            for (size_t i = 0; i < params.dec_w.size(); ++i)
                params.dec_w[i] -= cfg.learning_rate * lg.grad.dec_w[i];
            for (size_t i = 0; i < params.dec_b.size(); ++i)
                params.dec_b[i] -= cfg.learning_rate * lg.grad.dec_b[i];
        }
        const double cur = training_loss(params, data, lambda);
        if (!std::isfinite(cur)) throw TrainingDivergence("non-finite epoch loss");
        if (cur < best_loss) {
            best_loss = cur;
            best = params;
        }
        const double rel = (prev_loss - cur) / std::max(std::abs(prev_loss), 1e-12);
        flat_epochs = (rel < cfg.converge_rel_tol) ? flat_epochs + 1 : 0;
        prev_loss = cur;
        if (flat_epochs >= cfg.converge_patience) break;
    }
    return best;
}

// ---- checkpoint save/load ---------------------------------------------------
// Flat binary of weights with a versioned text header; row-major 64-bit
// little-endian floats.

inline uint64_t model_config_hash(const ModelParams& p) {
    uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](uint64_t v) {
        h ^= v;
        h *= 1099511628211ULL;
    };
    mix(static_cast<uint64_t>(p.feature_dim));
    mix(static_cast<uint64_t>(p.latent_dim));
    mix(static_cast<uint64_t>(p.classes));
    mix(static_cast<uint64_t>(p.patch_factor));
    return h;
}

inline void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
    std::ostringstream head;
    head << "ippal-checkpoint v1\n"
         << p.feature_dim << " " << p.latent_dim << " " << p.classes << " " << p.patch_factor
         << " " << model_config_hash(p) << "\n";
    std::string payload = head.str();
    for (double w : p.enc_w) put_f64(payload, w);
    for (double w : p.enc_b) put_f64(payload, w);
    for (double w : p.dec_w) put_f64(payload, w);
    for (double w : p.dec_b) put_f64(payload, w);
    write_text_file(path, payload);
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
    const std::string blob = read_text_file(path);
    size_t pos = blob.find('\n');
    if (pos == std::string::npos || blob.substr(0, pos) != "ippal-checkpoint v1")
        throw Error("bad checkpoint header: " + path.string());
    const size_t line2_end = blob.find('\n', pos + 1);
    if (line2_end == std::string::npos) throw Error("bad checkpoint header: " + path.string());
    std::istringstream meta(blob.substr(pos + 1, line2_end - pos - 1));
    ModelParams p;
    uint64_t stored_hash = 0;
    meta >> p.feature_dim >> p.latent_dim >> p.classes >> p.patch_factor >> stored_hash;
    if (!meta || model_config_hash(p) != stored_hash)
        throw Error("checkpoint header corrupt or inconsistent: " + path.string());
    p.enc_w.resize(static_cast<size_t>(p.latent_dim) * p.feature_dim);
    p.enc_b.resize(p.latent_dim);
    p.dec_w.resize(static_cast<size_t>(p.classes) * p.latent_dim);
    p.dec_b.resize(p.classes);
    size_t cursor = line2_end + 1;
    for (double& w : p.enc_w) w = get_f64(blob, cursor);
    for (double& w : p.enc_b) w = get_f64(blob, cursor);
    for (double& w : p.dec_w) w = get_f64(blob, cursor);
    for (double& w : p.dec_b) w = get_f64(blob, cursor);
    return p;
}

}  // namespace ippal
