#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dsce/kernels.hpp"

namespace dsce::kernels {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

namespace parallel {

template <typename T>
void affine(std::span<const T> weights, std::span<const T> bias, std::span<const T> inputs,
            std::size_t batch, std::size_t in_dim, std::size_t out_dim, bool relu,
            std::span<T> outputs, std::span<T> pre_activation) {
  const auto total = static_cast<std::ptrdiff_t>(batch * out_dim);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t idx = 0; idx < total; ++idx) {
    const std::size_t b = static_cast<std::size_t>(idx) / out_dim;
    const std::size_t o = static_cast<std::size_t>(idx) % out_dim;
    const T* x = inputs.data() + b * in_dim;
    const T* w = weights.data() + o * in_dim;
    double acc = 0.0;
    for (std::size_t i = 0; i < in_dim; ++i) acc += double(w[i]) * double(x[i]);
    const T z = static_cast<T>(acc + double(bias[o]));
    if (!pre_activation.empty()) pre_activation[b * out_dim + o] = z;
    outputs[b * out_dim + o] = (relu && !(z > T(0))) ? T(0) : z;
  }
}

template <typename T>
void weight_gradient(std::span<const T> delta, std::span<const T> inputs, std::size_t batch,
                     std::size_t in_dim, std::size_t out_dim, std::span<T> grad_weights,
                     std::span<T> grad_bias) {
#pragma omp parallel
  {
    std::vector<double> acc(in_dim);
#pragma omp for schedule(static)
    for (std::ptrdiff_t oo = 0; oo < static_cast<std::ptrdiff_t>(out_dim); ++oo) {
      const auto o = static_cast<std::size_t>(oo);
      std::fill(acc.begin(), acc.end(), 0.0);
      double bias_acc = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double g = delta[b * out_dim + o];
        if (g == 0.0) continue;
        const T* x = inputs.data() + b * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) acc[i] += g * double(x[i]);
        bias_acc += g;
      }
      for (std::size_t i = 0; i < in_dim; ++i) {
        grad_weights[o * in_dim + i] = static_cast<T>(acc[i]);
      }
      grad_bias[o] = static_cast<T>(bias_acc);
    }
  }
}

template <typename T>
void backprop_input(std::span<const T> delta, std::span<const T> weights, std::size_t batch,
                    std::size_t in_dim, std::size_t out_dim, std::span<T> back) {
#pragma omp parallel
  {
    std::vector<double> acc(in_dim);
#pragma omp for schedule(static)
    for (std::ptrdiff_t bb = 0; bb < static_cast<std::ptrdiff_t>(batch); ++bb) {
      const auto b = static_cast<std::size_t>(bb);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double g = delta[b * out_dim + o];
        if (g == 0.0) continue;
        const T* w = weights.data() + o * in_dim;
        for (std::size_t i = 0; i < in_dim; ++i) acc[i] += g * double(w[i]);
      }
      for (std::size_t i = 0; i < in_dim; ++i) back[b * in_dim + i] = static_cast<T>(acc[i]);
    }
  }
}

std::size_t count_within(std::span<const double> points, std::size_t dim,
                         std::span<const double> query, double radius) {
  const auto n = static_cast<std::ptrdiff_t>(dim == 0 ? 0 : points.size() / dim);
  std::size_t count = 0;
#pragma omp parallel for schedule(static) reduction(+ : count)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    if (euclidean(points.subspan(static_cast<std::size_t>(r) * dim, dim), query) <= radius) {
      ++count;
    }
  }
  return count;
}

void distances(std::span<const double> points, std::size_t dim, std::span<const double> query,
               std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(dim == 0 ? 0 : points.size() / dim);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    out[r] = euclidean(points.subspan(static_cast<std::size_t>(r) * dim, dim), query);
  }
}

#define DSCE_INSTANTIATE(T)                                                                      \
  template void affine<T>(std::span<const T>, std::span<const T>, std::span<const T>,            \
                          std::size_t, std::size_t, std::size_t, bool, std::span<T>,             \
                          std::span<T>);                                                         \
  template void weight_gradient<T>(std::span<const T>, std::span<const T>, std::size_t,          \
                                   std::size_t, std::size_t, std::span<T>, std::span<T>);        \
  template void backprop_input<T>(std::span<const T>, std::span<const T>, std::size_t,           \
                                  std::size_t, std::size_t, std::span<T>);

DSCE_INSTANTIATE(float)
DSCE_INSTANTIATE(double)
#undef DSCE_INSTANTIATE

}  // namespace parallel
}  // namespace dsce::kernels
