#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "ippal/core.hpp"

namespace ippal {

// K x K confusion matrix, truth-major.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int classes)
        : classes_(classes), m_(static_cast<size_t>(classes) * classes, 0) {}

    void add(int truth, int pred) { m_[static_cast<size_t>(truth) * classes_ + pred] += 1; }

    int64_t at(int truth, int pred) const {
        return m_[static_cast<size_t>(truth) * classes_ + pred];
    }

    int classes() const { return classes_; }

    int64_t row_sum(int truth) const {
        int64_t s = 0;
        for (int p = 0; p < classes_; ++p) s += at(truth, p);
        return s;
    }

    int64_t col_sum(int pred) const {
        int64_t s = 0;
        for (int t = 0; t < classes_; ++t) s += at(t, pred);
        return s;
    }

    int64_t total() const {
        int64_t s = 0;
        for (int64_t v : m_) s += v;
        return s;
    }

private:
    int classes_;
    std::vector<int64_t> m_;
};

struct MetricRow {
    int mission = 0;
    int images_labeled = 0;
    double miou = 0.0;
    double accuracy = 0.0;
    double f1 = 0.0;
    double ece = 0.0;
    std::vector<double> class_iou;
    double wallclock_s = 0.0;
};

// Streaming evaluation: confusion counts plus 10 equal-width confidence bins
// over the max-class probability for calibration.
class Evaluator {
public:
    explicit Evaluator(int classes)
        : cm_(classes), bin_count_(10, 0), bin_conf_(10, 0.0), bin_correct_(10, 0) {}

    void add_image(const ProbTensor& probs, const LabelImage& truth) {
        if (probs.rows != truth.rows || probs.cols != truth.cols)
            throw ShapeError("prediction and truth shapes differ");
        for (int r = 0; r < probs.rows; ++r) {
            for (int c = 0; c < probs.cols; ++c) {
                int pred = 0;
                for (int k = 1; k < probs.classes; ++k)
                    if (probs.at(r, c, k) > probs.at(r, c, pred)) pred = k;
                const double conf = probs.at(r, c, pred);
                const int y = truth.at(r, c);
                cm_.add(y, pred);
                const int bin = std::min(9, static_cast<int>(conf * 10.0));
                bin_count_[bin] += 1;
                bin_conf_[bin] += conf;
                if (pred == y) bin_correct_[bin] += 1;
            }
        }
    }

    const ConfusionMatrix& confusion() const { return cm_; }

    // Per-class intersection over union: TP / (TP + FP + FN). Classes absent
    // from both truth and prediction report 0 and are excluded from the mean.
    std::vector<double> class_iou() const {
        std::vector<double> iou(cm_.classes(), 0.0);
        for (int k = 0; k < cm_.classes(); ++k) {
            const int64_t tp = cm_.at(k, k);
            const int64_t denom = cm_.row_sum(k) + cm_.col_sum(k) - tp;
            iou[k] = denom > 0 ? static_cast<double>(tp) / denom : 0.0;
        }
        return iou;
    }

    // Mean IoU over classes present in the ground truth.
    double miou() const {
        const std::vector<double> iou = class_iou();
        double sum = 0.0;
        int present = 0;
        for (int k = 0; k < cm_.classes(); ++k) {
            if (cm_.row_sum(k) == 0) continue;
            sum += iou[k];
            ++present;
        }
        return present > 0 ? sum / present : 0.0;
    }

    double accuracy() const {
        const int64_t n = cm_.total();
        if (n == 0) return 0.0;
        int64_t trace = 0;
        for (int k = 0; k < cm_.classes(); ++k) trace += cm_.at(k, k);
        return static_cast<double>(trace) / n;
    }

    // Macro F1 over classes present in the ground truth.
    double macro_f1() const {
        double sum = 0.0;
        int present = 0;
        for (int k = 0; k < cm_.classes(); ++k) {
            if (cm_.row_sum(k) == 0) continue;
            const int64_t tp = cm_.at(k, k);
            const int64_t fp = cm_.col_sum(k) - tp;
            const int64_t fn = cm_.row_sum(k) - tp;
            const int64_t denom = 2 * tp + fp + fn;
            sum += denom > 0 ? 2.0 * tp / denom : 0.0;
            ++present;
        }
        return present > 0 ? sum / present : 0.0;
    }

    // Expected calibration error over 10 equal-width confidence bins.
    double ece() const {
        int64_t n = 0;
        for (int64_t c : bin_count_) n += c;
        if (n == 0) return 0.0;
        double total = 0.0;
        for (int b = 0; b < 10; ++b) {
            if (bin_count_[b] == 0) continue;
            const double acc = static_cast<double>(bin_correct_[b]) / bin_count_[b];
            const double conf = bin_conf_[b] / bin_count_[b];
            total += (static_cast<double>(bin_count_[b]) / n) * std::abs(acc - conf);
        }
        return total;
    }

private:
    ConfusionMatrix cm_;
    std::vector<int64_t> bin_count_;
    std::vector<double> bin_conf_;
    std::vector<int64_t> bin_correct_;
};

// Normalized area under a piecewise-linear curve: the mean height over the
// x range. A constant curve (or a degenerate x range) returns the constant.
inline double curve_auc(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.empty()) throw ConfigError("curve needs matching points");
    if (xs.size() == 1 || xs.back() == xs.front()) {
        double mean = 0.0;
        for (double y : ys) mean += y;
        return mean / ys.size();
    }
    double area = 0.0;
    for (size_t i = 1; i < xs.size(); ++i)
        area += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
    return area / (xs.back() - xs.front());
}

}  // namespace ippal
