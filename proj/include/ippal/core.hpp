#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ippal {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid or inconsistent configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Indexing or footprint outside the grid lattice.
class BoundsError : public Error {
public:
    using Error::Error;
};

// Incompatible tensor/image shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Non-finite loss during optimisation.
class TrainingDivergence : public Error {
public:
    using Error::Error;
};

// Row-major 2-D raster. rows() runs along y (north to south), cols() along x.
template <typename T>
class Grid {
public:
    Grid() = default;
    Grid(int rows, int cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
        if (rows < 0 || cols < 0) throw ConfigError("Grid dimensions must be nonnegative");
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    size_t size() const { return data_.size(); }

    bool in_bounds(int r, int c) const { return r >= 0 && r < rows_ && c >= 0 && c < cols_; }

    T& at(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
    const T& at(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    void fill(T v) { data_.assign(data_.size(), v); }

    bool operator==(const Grid& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

// Cell-index rectangle on the terrain lattice.
struct Footprint {
    int row0 = 0;
    int col0 = 0;
    int rows = 0;
    int cols = 0;

    int area() const { return rows * cols; }
    int row_end() const { return row0 + rows; }
    int col_end() const { return col0 + cols; }

    bool contains(int r, int c) const {
        return r >= row0 && r < row_end() && c >= col0 && c < col_end();
    }

    bool operator==(const Footprint& o) const {
        return row0 == o.row0 && col0 == o.col0 && rows == o.rows && cols == o.cols;
    }
};

// Cell count of the overlap between two footprints.
inline int overlap_area(const Footprint& a, const Footprint& b) {
    const int r0 = std::max(a.row0, b.row0);
    const int r1 = std::min(a.row_end(), b.row_end());
    const int c0 = std::max(a.col0, b.col0);
    const int c1 = std::min(a.col_end(), b.col_end());
    if (r1 <= r0 || c1 <= c0) return 0;
    return (r1 - r0) * (c1 - c0);
}

// 3-D measurement position in meters. z is a fixed flight altitude.
struct Waypoint {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    bool operator==(const Waypoint& o) const { return x == o.x && y == o.y && z == o.z; }
};

inline double ground_distance(const Waypoint& a, const Waypoint& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

inline double distance3(const Waypoint& a, const Waypoint& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// D-channel feature raster, indexed (row, col, channel), row-major.
struct FeatureImage {
    int rows = 0;
    int cols = 0;
    int depth = 0;
    std::vector<double> v;

    FeatureImage() = default;
    FeatureImage(int r, int c, int d)
        : rows(r), cols(c), depth(d), v(static_cast<size_t>(r) * c * d, 0.0) {}

    double& at(int r, int c, int d) { return v[(static_cast<size_t>(r) * cols + c) * depth + d]; }
    const double& at(int r, int c, int d) const {
        return v[(static_cast<size_t>(r) * cols + c) * depth + d];
    }
};

struct LabelImage {
    int rows = 0;
    int cols = 0;
    std::vector<uint8_t> v;

    LabelImage() = default;
    LabelImage(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0) {}

    uint8_t& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    const uint8_t& at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

// Per-pixel class probabilities, indexed (row, col, class).
struct ProbTensor {
    int rows = 0;
    int cols = 0;
    int classes = 0;
    std::vector<double> v;

    ProbTensor() = default;
    ProbTensor(int r, int c, int k)
        : rows(r), cols(c), classes(k), v(static_cast<size_t>(r) * c * k, 0.0) {}

    double& at(int r, int c, int k) { return v[(static_cast<size_t>(r) * cols + c) * classes + k]; }
    const double& at(int r, int c, int k) const {
        return v[(static_cast<size_t>(r) * cols + c) * classes + k];
    }
};

// Patch latents, indexed (row, col, channel); one vector per s x s pixel patch.
struct LatentGrid {
    int rows = 0;
    int cols = 0;
    int dim = 0;
    std::vector<double> v;

    LatentGrid() = default;
    LatentGrid(int r, int c, int d)
        : rows(r), cols(c), dim(d), v(static_cast<size_t>(r) * c * d, 0.0) {}

    double& at(int r, int c, int d) { return v[(static_cast<size_t>(r) * cols + c) * dim + d]; }
    const double& at(int r, int c, int d) const {
        return v[(static_cast<size_t>(r) * cols + c) * dim + d];
    }

    const double* patch(int r, int c) const { return &v[(static_cast<size_t>(r) * cols + c) * dim]; }
};

enum class ScoreKind { mutual_information, entropy, novelty };

// Per-pixel nonnegative acquisition scores.
struct ScoreImage {
    int rows = 0;
    int cols = 0;
    ScoreKind kind = ScoreKind::entropy;
    // True when the score is the empty-database novelty prior.
    bool prior_fill = false;
    std::vector<double> v;

    ScoreImage() = default;
    ScoreImage(int r, int c, ScoreKind k)
        : rows(r), cols(c), kind(k), v(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    const double& at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
};

}  // namespace ippal
