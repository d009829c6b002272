#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptycho {

using cdouble = std::complex<double>;

/// Thrown when an array argument has the wrong shape.
struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Thrown when a scalar argument violates a precondition.
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Thrown when an iterative method fails to reach its tolerance.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Dense row-major complex 2-D array. Used for objects, masks, masked
/// patches and frequency blocks alike.
class ComplexImage {
public:
    ComplexImage() = default;

    ComplexImage(int rows, int cols)
        : rows_(rows), cols_(cols), data_(check_size(rows, cols)) {}

    ComplexImage(int rows, int cols, cdouble fill)
        : rows_(rows), cols_(cols), data_(check_size(rows, cols), fill) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool is_square() const { return rows_ == cols_; }

    cdouble& operator()(int r, int c) { return data_[idx(r, c)]; }
    const cdouble& operator()(int r, int c) const { return data_[idx(r, c)]; }

    cdouble& operator[](std::size_t i) { return data_[i]; }
    const cdouble& operator[](std::size_t i) const { return data_[i]; }

    cdouble* data() { return data_.data(); }
    const cdouble* data() const { return data_.data(); }

    bool same_shape(const ComplexImage& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

private:
    static std::size_t check_size(int rows, int cols) {
        if (rows < 1 || cols < 1)
            throw DimensionError("ComplexImage: rows and cols must be positive");
        return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    }

    std::size_t idx(int r, int c) const {
        return static_cast<std::size_t>(r) * cols_ + c;
    }

    int rows_ = 0;
    int cols_ = 0;
    std::vector<cdouble> data_;
};

/// Rectangular window into a periodic array: origin may be any integers,
/// indexing wraps modulo the host array size.
struct Grid {
    int row0 = 0;
    int col0 = 0;
    int rows = 0;
    int cols = 0;
};

inline int wrap_index(int i, int n) {
    int r = i % n;
    return r < 0 ? r + n : r;
}

inline double norm(const ComplexImage& x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::norm(x[i]);
    return std::sqrt(s);
}

/// <a, b> = sum conj(a_i) b_i.
inline cdouble dot(const ComplexImage& a, const ComplexImage& b) {
    if (!a.same_shape(b)) throw DimensionError("dot: shape mismatch");
    cdouble s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s;
}

inline ComplexImage hadamard(const ComplexImage& a, const ComplexImage& b) {
    if (!a.same_shape(b)) throw DimensionError("hadamard: shape mismatch");
    ComplexImage out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

inline bool all_finite(const ComplexImage& x) {
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i].real()) || !std::isfinite(x[i].imag())) return false;
    return true;
}

/// Extract the g-sized patch of x starting at g's origin, wrapping
/// periodically at the array edges.
inline ComplexImage wrap_extract(const ComplexImage& x, const Grid& g) {
    if (g.rows < 1 || g.cols < 1)
        throw DimensionError("wrap_extract: grid size must be positive");
    ComplexImage out(g.rows, g.cols);
    for (int r = 0; r < g.rows; ++r) {
        int sr = wrap_index(g.row0 + r, x.rows());
        for (int c = 0; c < g.cols; ++c)
            out(r, c) = x(sr, wrap_index(g.col0 + c, x.cols()));
    }
    return out;
}

/// Adjoint of wrap_extract: add patch into acc at g's origin with
/// periodic wrap. Accumulates in place.
inline void wrap_embed_add(ComplexImage& acc, const ComplexImage& patch, const Grid& g) {
    if (patch.rows() != g.rows || patch.cols() != g.cols)
        throw DimensionError("wrap_embed_add: patch shape does not match grid");
    for (int r = 0; r < g.rows; ++r) {
        int dr = wrap_index(g.row0 + r, acc.rows());
        for (int c = 0; c < g.cols; ++c)
            acc(dr, wrap_index(g.col0 + c, acc.cols())) += patch(r, c);
    }
}

}  // namespace ptycho
