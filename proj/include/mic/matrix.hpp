#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "mic/error.hpp"

namespace mic {

// Row-major dense matrix of doubles. All learned state in this library
// lives in these; 64-bit reals throughout so the finite-difference
// oracles have headroom.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double x : data)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline void check_shape(bool ok, const std::string& what) {
    if (!ok) throw ShapeError("shape mismatch: " + what);
}

// c = a * b, plain triple loop with the k-loop hoisted.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    check_shape(a.cols == b.rows, "matmul " + std::to_string(a.rows) + "x" +
                                      std::to_string(a.cols) + " * " + std::to_string(b.rows) +
                                      "x" + std::to_string(b.cols));
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.data.data() + i * a.cols;
        double* crow = c.data.data() + i * b.cols;
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
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

inline void add_inplace(Matrix& a, const Matrix& b) {
    check_shape(a.same_shape(b), "add_inplace");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

inline void axpy_inplace(Matrix& a, double alpha, const Matrix& b) {
    check_shape(a.same_shape(b), "axpy_inplace");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += alpha * b.data[i];
}

inline void scale_inplace(Matrix& a, double alpha) {
    for (double& x : a.data) x *= alpha;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    check_shape(a.size() == b.size(), "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// sim(u, v) = u.v / (|u| |v|), the similarity every channel ranks by.
inline double cosine_sim(std::span<const double> a, std::span<const double> b) {
    check_shape(a.size() == b.size(), "cosine_sim");
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw DegenerateVectorError("cosine_sim on zero-norm vector");
    return dot(a, b) / (na * nb);
}

inline double cosine_sim(const std::vector<double>& a, const std::vector<double>& b) {
    return cosine_sim(std::span<const double>(a), std::span<const double>(b));
}

// Accumulates d sim(a,b)/da scaled by `coeff` into grad_a.
// d sim/da = b/(|a||b|) - sim * a/|a|^2.
inline void cosine_sim_grad_a(std::span<const double> a, std::span<const double> b, double coeff,
                              std::span<double> grad_a) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) throw DegenerateVectorError("cosine_sim_grad on zero-norm vector");
    const double s = dot(a, b) / (na * nb);
    const double inv_ab = 1.0 / (na * nb);
    const double inv_aa = s / (na * na);
    for (std::size_t i = 0; i < a.size(); ++i) grad_a[i] += coeff * (b[i] * inv_ab - a[i] * inv_aa);
}

inline void normalize_inplace(std::span<double> v) {
    const double n = norm(v);
    if (n == 0.0) throw DegenerateVectorError("normalize of zero-norm vector");
    for (double& x : v) x /= n;
}

inline std::vector<double> normalized(std::span<const double> v) {
    std::vector<double> out(v.begin(), v.end());
    normalize_inplace(out);
    return out;
}

}  // namespace mic
