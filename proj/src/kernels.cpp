#include "soupkit/kernels.hpp"

#include <cmath>
#include <cstring>

namespace soupkit::kernels {

namespace {

// Below these sizes the parallel-for fork costs more than the loop.
constexpr std::size_t kElemGrain = 8192;
constexpr std::size_t kRowGrain = 8;

inline float activate(double v, Activation act) {
    switch (act) {
        case Activation::Tanh: return static_cast<float>(std::tanh(v));
        case Activation::Identity: break;
    }
    return static_cast<float>(v);
}

inline std::size_t argmax_row(const float* row, std::size_t classes) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
        if (row[c] > row[best]) best = c;
    }
    return best;
}

inline double dot_row(const float* x, const float* w, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(w[i]);
    return acc;
}

}  // namespace

namespace ref {

void axpby(double a, const float* x, double b, const float* y, float* out, std::size_t n) {
    if (a == 1.0 && b == 0.0) {
        if (out != x) std::memcpy(out, x, n * sizeof(float));
        return;
    }
    if (a == 0.0 && b == 1.0) {
        if (out != y) std::memcpy(out, y, n * sizeof(float));
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = static_cast<float>(a * static_cast<double>(x[i]) + b * static_cast<double>(y[i]));
    }
}

void pool_mean(const float* const* xs, std::size_t k, float* out, std::size_t n) {
    const double inv = 1.0 / static_cast<double>(k);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += static_cast<double>(xs[j][i]);
        out[i] = static_cast<float>(acc * inv);
    }
}

void dense_forward(const float* x, std::size_t rows, std::size_t in_dim,
                   const float* w, const float* b, std::size_t out_dim,
                   float* y, Activation act) {
    for (std::size_t r = 0; r < rows; ++r) {
        const float* xr = x + r * in_dim;
        float* yr = y + r * out_dim;
        for (std::size_t o = 0; o < out_dim; ++o) {
            yr[o] = activate(dot_row(xr, w + o * in_dim, in_dim) + static_cast<double>(b[o]), act);
        }
    }
}

std::size_t count_correct(const float* logits, std::size_t rows, std::size_t classes,
                          const int32_t* labels) {
    std::size_t correct = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (static_cast<int32_t>(argmax_row(logits + r * classes, classes)) == labels[r]) ++correct;
    }
    return correct;
}

}  // namespace ref

void axpby(double a, const float* x, double b, const float* y, float* out, std::size_t n) {
    if (a == 1.0 && b == 0.0) {
        if (out != x) std::memcpy(out, x, n * sizeof(float));
        return;
    }
    if (a == 0.0 && b == 1.0) {
        if (out != y) std::memcpy(out, y, n * sizeof(float));
        return;
    }
#pragma omp parallel for schedule(static) if (n >= kElemGrain)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        out[i] = static_cast<float>(a * static_cast<double>(x[i]) + b * static_cast<double>(y[i]));
    }
}

void pool_mean(const float* const* xs, std::size_t k, float* out, std::size_t n) {
    const double inv = 1.0 / static_cast<double>(k);
#pragma omp parallel for schedule(static) if (n >= kElemGrain)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < k; ++j) acc += static_cast<double>(xs[j][i]);
        out[i] = static_cast<float>(acc * inv);
    }
}

void dense_forward(const float* x, std::size_t rows, std::size_t in_dim,
                   const float* w, const float* b, std::size_t out_dim,
                   float* y, Activation act) {
#pragma omp parallel for schedule(static) if (rows >= kRowGrain)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r) {
        const float* xr = x + r * in_dim;
        float* yr = y + r * out_dim;
        for (std::size_t o = 0; o < out_dim; ++o) {
            yr[o] = activate(dot_row(xr, w + o * in_dim, in_dim) + static_cast<double>(b[o]), act);
        }
    }
}

std::size_t count_correct(const float* logits, std::size_t rows, std::size_t classes,
                          const int32_t* labels) {
    long long correct = 0;
#pragma omp parallel for schedule(static) reduction(+ : correct) if (rows >= kRowGrain)
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r) {
        if (static_cast<int32_t>(argmax_row(logits + r * classes, classes)) == labels[r]) ++correct;
    }
    return static_cast<std::size_t>(correct);
}

}  // namespace soupkit::kernels
