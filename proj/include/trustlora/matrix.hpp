#pragma once

// Dense row-major matrix of 64-bit floats: the single numeric carrier for
// weights, activations and gradients. Everything is value-semantic; published
// matrices are treated as immutable.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "trustlora/errors.hpp"

namespace trustlora {

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, data.size() == rows * cols

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> init) {
        Matrix m;
        m.rows = init.size();
        m.cols = init.size() == 0 ? 0 : init.begin()->size();
        m.data.reserve(m.rows * m.cols);
        for (const auto& row : init) {
            if (row.size() != m.cols) {
                throw DimensionError("from_rows: ragged initializer");
            }
            m.data.insert(m.data.end(), row.begin(), row.end());
        }
        return m;
    }

    static Matrix row_vector(std::initializer_list<double> init) {
        Matrix m(1, init.size());
        std::copy(init.begin(), init.end(), m.data.begin());
        return m;
    }

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) {
            m.data[i * n + i] = 1.0;
        }
        return m;
    }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::size_t size() const { return rows * cols; }
    bool empty() const { return size() == 0; }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

    Matrix row(std::size_t i) const {
        Matrix r(1, cols);
        std::copy(data.begin() + static_cast<std::ptrdiff_t>(i * cols),
                  data.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols), r.data.begin());
        return r;
    }
};

namespace detail {
inline void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}
}  // namespace detail

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw DimensionError("matmul: inner dimensions disagree, " + a.shape_str() + " x " + b.shape_str());
    }
    Matrix c(a.rows, b.cols);
    // ikj order keeps the inner loop contiguous over b and c.
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[i * a.cols];
        double* crow = &c.data[i * c.cols];
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) {
                continue;
            }
            const double* brow = &b.data[k * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            t.data[j * t.cols + i] = a.data[i * a.cols + j];
        }
    }
    return t;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
    detail::require_same_shape(a, b, "add");
    Matrix c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) {
        c.data[i] += b.data[i];
    }
    return c;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
    detail::require_same_shape(a, b, "sub");
    Matrix c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) {
        c.data[i] -= b.data[i];
    }
    return c;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
    detail::require_same_shape(a, b, "hadamard");
    Matrix c = a;
    for (std::size_t i = 0; i < c.data.size(); ++i) {
        c.data[i] *= b.data[i];
    }
    return c;
}

inline Matrix scale(const Matrix& a, double s) {
    Matrix c = a;
    for (double& v : c.data) {
        v *= s;
    }
    return c;
}

// Adds a 1 x cols bias row to every row of `a`.
inline Matrix add_row(const Matrix& a, const Matrix& bias) {
    if (bias.rows != 1 || bias.cols != a.cols) {
        throw DimensionError("add_row: bias " + bias.shape_str() + " does not broadcast over " + a.shape_str());
    }
    Matrix c = a;
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            c.data[i * a.cols + j] += bias.data[j];
        }
    }
    return c;
}

inline Matrix relu(const Matrix& a) {
    Matrix c = a;
    for (double& v : c.data) {
        v = v > 0.0 ? v : 0.0;
    }
    return c;
}

// Row softmax with max-subtraction plus log of the partition function.
// Input must be a single non-empty row.
inline std::pair<Matrix, double> softmax_logsumexp(const Matrix& logits) {
    if (logits.rows != 1 || logits.cols == 0) {
        throw DimensionError("softmax_logsumexp: expected a non-empty row, got " + logits.shape_str());
    }
    const double mx = *std::max_element(logits.data.begin(), logits.data.end());
    Matrix p(1, logits.cols);
    double z = 0.0;
    for (std::size_t j = 0; j < logits.cols; ++j) {
        p.data[j] = std::exp(logits.data[j] - mx);
        z += p.data[j];
    }
    for (double& v : p.data) {
        v /= z;
    }
    return {p, mx + std::log(z)};
}

// Row-wise softmax over a batch of logits.
inline Matrix softmax_rows(const Matrix& logits) {
    if (logits.cols == 0) {
        throw DimensionError("softmax_rows: zero-width input");
    }
    Matrix p(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double* in = &logits.data[i * logits.cols];
        double* out = &p.data[i * logits.cols];
        const double mx = *std::max_element(in, in + logits.cols);
        double z = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            out[j] = std::exp(in[j] - mx);
            z += out[j];
        }
        for (std::size_t j = 0; j < logits.cols; ++j) {
            out[j] /= z;
        }
    }
    return p;
}

inline bool all_finite(const Matrix& a) {
    for (const double v : a.data) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

// True when both matrices hold bit-identical payloads (distinguishes -0.0).
inline bool bit_equal(const Matrix& a, const Matrix& b) {
    return a.same_shape(b) &&
           (a.data.empty() ||
            std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(double)) == 0);
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    detail::require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    }
    return m;
}

inline bool is_zero(const Matrix& a) {
    return std::all_of(a.data.begin(), a.data.end(), [](double v) { return v == 0.0; });
}

}  // namespace trustlora
