#pragma once

#include <cstddef>
#include <cstdint>

namespace soupkit::kernels {

enum class Activation { Identity, Tanh };

// Serial reference kernels. These are the ground truth the OpenMP variants
// are tested against; keep them dumb and obviously correct.
namespace ref {

// out[i] = f32(a*x[i] + b*y[i]), accumulated in double.
// (a,b) == (1,0) and (0,1) are exact copies, preserving -0.0 payloads.
void axpby(double a, const float* x, double b, const float* y, float* out, std::size_t n);

// out[i] = f32(mean_k xs[k][i]), accumulated in double.
void pool_mean(const float* const* xs, std::size_t k, float* out, std::size_t n);

// Row-major dense layer: y[r,o] = act(sum_i x[r,i]*w[o,i] + b[o]).
// x is rows x in_dim, w is out_dim x in_dim, y is rows x out_dim.
void dense_forward(const float* x, std::size_t rows, std::size_t in_dim,
                   const float* w, const float* b, std::size_t out_dim,
                   float* y, Activation act);

// Count rows whose argmax(logits[r,:]) equals labels[r]. Ties resolve to the
// lowest class index.
std::size_t count_correct(const float* logits, std::size_t rows, std::size_t classes,
                          const int32_t* labels);

}  // namespace ref

// OpenMP-parallel kernels. Every output element (or integer partial sum) is
// computed independently, so results are bit-identical to ref:: for any
// thread count.
void axpby(double a, const float* x, double b, const float* y, float* out, std::size_t n);
void pool_mean(const float* const* xs, std::size_t k, float* out, std::size_t n);
void dense_forward(const float* x, std::size_t rows, std::size_t in_dim,
                   const float* w, const float* b, std::size_t out_dim,
                   float* y, Activation act);
std::size_t count_correct(const float* logits, std::size_t rows, std::size_t classes,
                          const int32_t* labels);

}  // namespace soupkit::kernels
