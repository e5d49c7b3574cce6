#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "ippal/core.hpp"
#include "ippal/rng.hpp"

namespace ippal {

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Dimensions here are
// tiny (twice the planning horizon), so O(n^3) sweeps are fine.
inline void jacobi_eigen(std::vector<double> a, int n, std::vector<double>& eigvals,
                         std::vector<double>& eigvecs) {
    eigvecs.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) eigvecs[static_cast<size_t>(i) * n + i] = 1.0;
    auto A = [&](int r, int c) -> double& { return a[static_cast<size_t>(r) * n + c]; };
    auto V = [&](int r, int c) -> double& { return eigvecs[static_cast<size_t>(r) * n + c]; };

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(A(p, q)) < 1e-300) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = A(i, p), aiq = A(i, q);
                    A(i, p) = c * aip - s * aiq;
                    A(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    const double api = A(p, i), aqi = A(q, i);
                    A(p, i) = c * api - s * aqi;
                    A(q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = V(i, p), viq = V(i, q);
                    V(i, p) = c * vip - s * viq;
                    V(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    eigvals.resize(n);
    for (int i = 0; i < n; ++i) eigvals[i] = A(i, i);
}

}  // namespace detail

struct CmaesOptions {
    int generations = 30;
    double sigma0 = 1.0;
    int lambda = 0;  // 0 selects 4 + floor(3 ln n)
    uint64_t seed = 0;
};

struct CmaesResult {
    std::vector<double> best_x;
    double best_f = -std::numeric_limits<double>::infinity();
};

// Maximizes f over a box. Candidates are repaired onto the box before
// evaluation and adaptation. Infeasible candidates may return -infinity; the
// returned best is never worse than f(x0) (x0 is evaluated up front).
template <typename F>
CmaesResult cmaes_maximize(const std::vector<double>& x0, const std::vector<double>& lo,
                           const std::vector<double>& hi, F&& f, const CmaesOptions& opt) {
    const int n = static_cast<int>(x0.size());
    if (n < 1) throw ConfigError("cmaes requires at least one dimension");
    if (opt.sigma0 <= 0.0) throw ConfigError("cmaes sigma0 must be positive");

    auto repair = [&](std::vector<double>& x) {
        for (int i = 0; i < n; ++i) x[i] = std::min(std::max(x[i], lo[i]), hi[i]);
    };

    std::vector<double> mean = x0;
    repair(mean);

    CmaesResult result;
    result.best_x = mean;
    result.best_f = f(mean);

    const int lambda = opt.lambda > 0
                           ? opt.lambda
                           : 4 + static_cast<int>(std::floor(3.0 * std::log(static_cast<double>(n))));
    const int mu = lambda / 2;
    std::vector<double> weights(mu);
    for (int i = 0; i < mu; ++i) weights[i] = std::log(mu + 0.5) - std::log(i + 1.0);
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (double& w : weights) w /= wsum;
    double mueff = 0.0;
    for (double w : weights) mueff += w * w;
    mueff = 1.0 / mueff;

    const double cs = (mueff + 2.0) / (n + mueff + 5.0);
    const double ds = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff - 1.0) / (n + 1.0)) - 1.0) + cs;
    const double cc = (4.0 + mueff / n) / (n + 4.0 + 2.0 * mueff / n);
    const double c1 = 2.0 / ((n + 1.3) * (n + 1.3) + mueff);
    const double cmu =
        std::min(1.0 - c1, 2.0 * (mueff - 2.0 + 1.0 / mueff) / ((n + 2.0) * (n + 2.0) + mueff));
    const double chi_n = std::sqrt(static_cast<double>(n)) *
                         (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n));

    double sigma = opt.sigma0;
    std::vector<double> cov(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) cov[static_cast<size_t>(i) * n + i] = 1.0;
    std::vector<double> ps(n, 0.0), pc(n, 0.0);

    Rng rng(derive_seed(opt.seed, 0xc3a35u));
    const double neg_inf = -std::numeric_limits<double>::infinity();

    for (int gen = 0; gen < opt.generations; ++gen) {
        std::vector<double> eigvals, B;
        detail::jacobi_eigen(cov, n, eigvals, B);
        std::vector<double> d(n);
        for (int i = 0; i < n; ++i) d[i] = std::sqrt(std::max(eigvals[i], 1e-20));

        std::vector<std::vector<double>> xs(lambda, std::vector<double>(n));
        std::vector<double> fit(lambda, neg_inf);
        for (int k = 0; k < lambda; ++k) {
            std::vector<double> z(n);
            for (int i = 0; i < n; ++i) z[i] = d[i] * rng.normal();
            for (int i = 0; i < n; ++i) {
                double y = 0.0;
                for (int j = 0; j < n; ++j) y += B[static_cast<size_t>(i) * n + j] * z[j];
                xs[k][i] = mean[i] + sigma * y;
            }
            repair(xs[k]);
            fit[k] = f(xs[k]);
            if (fit[k] > result.best_f) {
                result.best_f = fit[k];
                result.best_x = xs[k];
            }
        }

        std::vector<int> order(lambda);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return fit[a] > fit[b]; });
        if (fit[order[0]] == neg_inf) {
            sigma *= 0.7;  // no feasible sample this generation; contract
            continue;
        }

        std::vector<double> new_mean(n, 0.0);
        for (int i = 0; i < mu; ++i)
            for (int j = 0; j < n; ++j) new_mean[j] += weights[i] * xs[order[i]][j];

        std::vector<double> delta(n);
        for (int j = 0; j < n; ++j) delta[j] = (new_mean[j] - mean[j]) / sigma;

        // C^{-1/2} delta = B D^{-1} B^T delta
        std::vector<double> tmp(n, 0.0), cinv_delta(n, 0.0);
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += B[static_cast<size_t>(j) * n + i] * delta[j];
            tmp[i] = acc / d[i];
        }
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += B[static_cast<size_t>(i) * n + j] * tmp[j];
            cinv_delta[i] = acc;
        }

        double ps_norm2 = 0.0;
        for (int i = 0; i < n; ++i) {
            ps[i] = (1.0 - cs) * ps[i] + std::sqrt(cs * (2.0 - cs) * mueff) * cinv_delta[i];
            ps_norm2 += ps[i] * ps[i];
        }
        const double expected = 1.0 - std::pow(1.0 - cs, 2.0 * (gen + 1));
        const bool hsig = std::sqrt(ps_norm2) / std::sqrt(expected) / chi_n < 1.4 + 2.0 / (n + 1.0);

        for (int i = 0; i < n; ++i)
            pc[i] = (1.0 - cc) * pc[i] +
                    (hsig ? std::sqrt(cc * (2.0 - cc) * mueff) * delta[i] : 0.0);

        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                double rank_mu = 0.0;
                for (int k = 0; k < mu; ++k) {
                    const double yi = (xs[order[k]][i] - mean[i]) / sigma;
                    const double yj = (xs[order[k]][j] - mean[j]) / sigma;
                    rank_mu += weights[k] * yi * yj;
                }
                double& cij = cov[static_cast<size_t>(i) * n + j];
                cij = (1.0 - c1 - cmu) * cij +
                      c1 * (pc[i] * pc[j] + (hsig ? 0.0 : cc * (2.0 - cc)) * cij) + cmu * rank_mu;
            }
        }

        sigma *= std::exp((cs / ds) * (std::sqrt(ps_norm2) / chi_n - 1.0));
        if (!std::isfinite(sigma) || sigma <= 1e-12 || sigma > 1e12) sigma = opt.sigma0;
        mean = new_mean;

        bool finite = true;
        for (double v : cov)
            if (!std::isfinite(v)) finite = false;
        if (!finite) {
            std::fill(cov.begin(), cov.end(), 0.0);
            for (int i = 0; i < n; ++i) cov[static_cast<size_t>(i) * n + i] = 1.0;
        }
    }
    return result;
}

}  // namespace ippal
