#pragma once

// Tiny numeric kernels shared by the backbone and the decoding towers.

#include <cmath>

namespace genrec::nn {

// Exact-erf GELU; keeps finite-difference checks tight.
inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865476));
}

inline double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865476));
    const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014327;
    return cdf + x * pdf;
}

// y[o] += sum_i x[i] * w[i*out + o]; w stored row-major (in, out).
inline void affine_forward(const double* x, const double* w, const double* b, int in, int out,
                           double* y) {
    for (int o = 0; o < out; ++o) y[o] = b != nullptr ? b[o] : 0.0;
    for (int i = 0; i < in; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* row = w + static_cast<long>(i) * out;
        for (int o = 0; o < out; ++o) y[o] += xi * row[o];
    }
}

// Accumulates dw += x^T dy, db += dy, dx += W dy for one position.
inline void affine_backward(const double* x, const double* w, const double* dy, int in, int out,
                            double* dw, double* db, double* dx) {
    if (db != nullptr)
        for (int o = 0; o < out; ++o) db[o] += dy[o];
    for (int i = 0; i < in; ++i) {
        const double* row = w + static_cast<long>(i) * out;
        double* drow = dw + static_cast<long>(i) * out;
        const double xi = x[i];
        double acc = 0.0;
        for (int o = 0; o < out; ++o) {
            drow[o] += xi * dy[o];
            acc += row[o] * dy[o];
        }
        if (dx != nullptr) dx[i] += acc;
    }
}

}  // namespace genrec::nn
