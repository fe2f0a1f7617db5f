#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ugmm {

/// Dense row-major matrix of doubles. All numeric state in this library
/// (batches, layer parameters, gradients, optimizer moments) lives in these.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // row-major, length rows*cols

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    static Matrix zeros_like(const Matrix& o) { return Matrix(o.rows, o.cols); }
};

inline void require_shape(const Matrix& m, std::size_t r, std::size_t c, const char* what) {
    if (m.rows != r || m.cols != c) {
        throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(r) + "x" +
                                    std::to_string(c) + ", got " + std::to_string(m.rows) + "x" +
                                    std::to_string(m.cols));
    }
}

/// C = A * B. Inner dimensions must agree.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) {
        throw std::invalid_argument("matmul: inner dimensions disagree (" + std::to_string(a.cols) +
                                    " vs " + std::to_string(b.rows) + ")");
    }
    Matrix c(a.rows, b.cols);
#pragma omp parallel for schedule(static) if (a.rows * a.cols * b.cols > (1u << 16))
    for (long long ii = 0; ii < static_cast<long long>(a.rows); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* crow = c.data.data() + i * c.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.data.data() + k * b.cols;
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

inline Matrix relu(const Matrix& a) {
    Matrix r = a;
    for (double& x : r.data) x = std::max(x, 0.0);
    return r;
}

}  // namespace ugmm
