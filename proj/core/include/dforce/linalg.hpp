#pragma once

#include <cmath>
#include <cstddef>

// Small dense helpers on raw rows-major buffers. Shapes are small (hidden
// widths of a few dozen), so simple loops are both fast enough and exactly
// reproducible; no BLAS dependency.
namespace dforce::la {

// y = W x, W is r x c
inline void matvec(const double* W, const double* x, double* y, int r, int c) {
    for (int i = 0; i < r; ++i) {
        const double* row = W + static_cast<std::size_t>(i) * c;
        double acc = 0.0;
        for (int j = 0; j < c; ++j) acc += row[j] * x[j];
        y[i] = acc;
    }
}

// y += W x
inline void matvec_add(const double* W, const double* x, double* y, int r, int c) {
    for (int i = 0; i < r; ++i) {
        const double* row = W + static_cast<std::size_t>(i) * c;
        double acc = 0.0;
        for (int j = 0; j < c; ++j) acc += row[j] * x[j];
        y[i] += acc;
    }
}

// out += W^T g, W is r x c, g has length r, out has length c
inline void matvec_t_add(const double* W, const double* g, double* out, int r, int c) {
    for (int i = 0; i < r; ++i) {
        const double* row = W + static_cast<std::size_t>(i) * c;
        const double gi = g[i];
        for (int j = 0; j < c; ++j) out[j] += row[j] * gi;
    }
}

// W += g x^T (outer-product accumulate), W is r x c
inline void outer_add(double* W, const double* g, const double* x, int r, int c) {
    for (int i = 0; i < r; ++i) {
        double* row = W + static_cast<std::size_t>(i) * c;
        const double gi = g[i];
        for (int j = 0; j < c; ++j) row[j] += gi * x[j];
    }
}

inline double dot(const double* a, const double* b, int n) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

// y += a * x
inline void axpy(double a, const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

inline double sq_norm(const double* a, int n) { return dot(a, a, n); }

}  // namespace dforce::la
