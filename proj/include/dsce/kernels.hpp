#pragma once

// Dense inner loops of the autoencoder and the neighbor scans of the
// clusterer. Each kernel exists twice: `serial` is the reference, `parallel`
// splits the outer loop across OpenMP threads. Every output element is
// produced by the same sequence of floating-point operations in both, so the
// two agree bit-for-bit regardless of thread count.

#include <cmath>
#include <cstddef>
#include <span>

namespace dsce::kernels {

enum class Backend { Serial, Parallel };

// Shapes use row-major storage throughout:
//   weights   out_dim x in_dim
//   inputs    batch x in_dim
//   outputs   batch x out_dim

namespace serial {

// out = act(inputs . weights^T + bias), accumulated in double.
// `pre_activation` (optional, may be empty) receives the value before relu.
template <typename T>
void affine(std::span<const T> weights, std::span<const T> bias, std::span<const T> inputs,
            std::size_t batch, std::size_t in_dim, std::size_t out_dim, bool relu,
            std::span<T> outputs, std::span<T> pre_activation);

// grad_weights[o][i] = sum_b delta[b][o] * inputs[b][i]   (b ascending)
// grad_bias[o]       = sum_b delta[b][o]
template <typename T>
void weight_gradient(std::span<const T> delta, std::span<const T> inputs, std::size_t batch,
                     std::size_t in_dim, std::size_t out_dim, std::span<T> grad_weights,
                     std::span<T> grad_bias);

// back[b][i] = sum_o delta[b][o] * weights[o][i]   (o ascending)
template <typename T>
void backprop_input(std::span<const T> delta, std::span<const T> weights, std::size_t batch,
                    std::size_t in_dim, std::size_t out_dim, std::span<T> back);

// Number of rows of `points` (n x dim) whose Euclidean distance to `query` is <= radius.
std::size_t count_within(std::span<const double> points, std::size_t dim,
                         std::span<const double> query, double radius);

// distances[n] = Euclidean distance from each row of `points` to `query`.
void distances(std::span<const double> points, std::size_t dim, std::span<const double> query,
               std::span<double> out);

}  // namespace serial

namespace parallel {

template <typename T>
void affine(std::span<const T> weights, std::span<const T> bias, std::span<const T> inputs,
            std::size_t batch, std::size_t in_dim, std::size_t out_dim, bool relu,
            std::span<T> outputs, std::span<T> pre_activation);

template <typename T>
void weight_gradient(std::span<const T> delta, std::span<const T> inputs, std::size_t batch,
                     std::size_t in_dim, std::size_t out_dim, std::span<T> grad_weights,
                     std::span<T> grad_bias);

template <typename T>
void backprop_input(std::span<const T> delta, std::span<const T> weights, std::size_t batch,
                    std::size_t in_dim, std::size_t out_dim, std::span<T> back);

std::size_t count_within(std::span<const double> points, std::size_t dim,
                         std::span<const double> query, double radius);

void distances(std::span<const double> points, std::size_t dim, std::span<const double> query,
               std::span<double> out);

}  // namespace parallel

// Euclidean distance, accumulated in index order. All clusterer comparisons
// go through this so boundary cases are decided identically everywhere.
inline double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return std::sqrt(s);
}

// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();
void set_threads(int n);

}  // namespace dsce::kernels
