#include <vector>

#include "dsce/kernels.hpp"

namespace dsce::kernels::serial {

template <typename T>
void affine(std::span<const T> weights, std::span<const T> bias, std::span<const T> inputs,
            std::size_t batch, std::size_t in_dim, std::size_t out_dim, bool relu,
            std::span<T> outputs, std::span<T> pre_activation) {
  for (std::size_t b = 0; b < batch; ++b) {
    const T* x = inputs.data() + b * in_dim;
    for (std::size_t o = 0; o < out_dim; ++o) {
      const T* w = weights.data() + o * in_dim;
      double acc = 0.0;
      for (std::size_t i = 0; i < in_dim; ++i) acc += double(w[i]) * double(x[i]);
      const T z = static_cast<T>(acc + double(bias[o]));
      if (!pre_activation.empty()) pre_activation[b * out_dim + o] = z;
      outputs[b * out_dim + o] = (relu && !(z > T(0))) ? T(0) : z;
    }
  }
}

template <typename T>
void weight_gradient(std::span<const T> delta, std::span<const T> inputs, std::size_t batch,
                     std::size_t in_dim, std::size_t out_dim, std::span<T> grad_weights,
                     std::span<T> grad_bias) {
  std::vector<double> acc(in_dim);
  for (std::size_t o = 0; o < out_dim; ++o) {
    std::fill(acc.begin(), acc.end(), 0.0);
    double bias_acc = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double g = delta[b * out_dim + o];
      if (g == 0.0) continue;
      const T* x = inputs.data() + b * in_dim;
      for (std::size_t i = 0; i < in_dim; ++i) acc[i] += g * double(x[i]);
      bias_acc += g;
    }
    for (std::size_t i = 0; i < in_dim; ++i) grad_weights[o * in_dim + i] = static_cast<T>(acc[i]);
    grad_bias[o] = static_cast<T>(bias_acc);
  }
}

template <typename T>
void backprop_input(std::span<const T> delta, std::span<const T> weights, std::size_t batch,
                    std::size_t in_dim, std::size_t out_dim, std::span<T> back) {
  std::vector<double> acc(in_dim);
  for (std::size_t b = 0; b < batch; ++b) {
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

std::size_t count_within(std::span<const double> points, std::size_t dim,
                         std::span<const double> query, double radius) {
  const std::size_t n = dim == 0 ? 0 : points.size() / dim;
  std::size_t count = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (euclidean(points.subspan(r * dim, dim), query) <= radius) ++count;
  }
  return count;
}

void distances(std::span<const double> points, std::size_t dim, std::span<const double> query,
               std::span<double> out) {
  const std::size_t n = dim == 0 ? 0 : points.size() / dim;
  for (std::size_t r = 0; r < n; ++r) out[r] = euclidean(points.subspan(r * dim, dim), query);
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

}  // namespace dsce::kernels::serial
