// Serial versus OpenMP kernels, and clusterer probe throughput.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dsce/autoencoder.hpp"
#include "dsce/kernels.hpp"
#include "dsce/mcod.hpp"

using namespace dsce;

namespace {

std::vector<float> random_floats(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal;
  std::vector<float> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

template <kernels::Backend B>
void BM_Affine(benchmark::State& state) {
  const std::size_t batch = 64, in = static_cast<std::size_t>(state.range(0)), out = 100;
  const auto w = random_floats(out * in, 1), b = random_floats(out, 2), x = random_floats(batch * in, 3);
  std::vector<float> y(batch * out), z(batch * out);
  for (auto _ : state) {
    if constexpr (B == kernels::Backend::Serial) {
      kernels::serial::affine<float>(w, b, x, batch, in, out, true, y, z);
    } else {
      kernels::parallel::affine<float>(w, b, x, batch, in, out, true, y, z);
    }
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_Affine<kernels::Backend::Serial>)->Arg(512)->Arg(4096);
BENCHMARK(BM_Affine<kernels::Backend::Parallel>)->Arg(512)->Arg(4096);

template <kernels::Backend B>
void BM_Gradients(benchmark::State& state) {
  const std::size_t in = static_cast<std::size_t>(state.range(0)), code = 100, rows = 64;
  AutoencoderParams<float> p = Autoencoder::init(in, code, 4).params();
  const auto batch = random_floats(rows * in, 5);
  for (auto _ : state) {
    auto g = compute_gradients<float>(p, batch, rows, B);
    benchmark::DoNotOptimize(g.loss);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(rows));
}
BENCHMARK(BM_Gradients<kernels::Backend::Serial>)->Arg(1024);
BENCHMARK(BM_Gradients<kernels::Backend::Parallel>)->Arg(1024);

template <kernels::Backend B>
void BM_Probe(benchmark::State& state) {
  const std::size_t dim = 100, stored = static_cast<std::size_t>(state.range(0));
  Clusterer c(80, 0.04, stored + 1);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u;
  std::vector<double> p(dim);
  for (std::size_t i = 0; i < stored; ++i) {
    for (auto& x : p) x = u(rng);
    c.add(p);
  }
  for (auto _ : state) {
    for (auto& x : p) x = u(rng);
    benchmark::DoNotOptimize(c.probe(p, ProbeMode::McodStandard, B).neighbor_count);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Probe<kernels::Backend::Serial>)->Arg(5000);
BENCHMARK(BM_Probe<kernels::Backend::Parallel>)->Arg(5000);

}  // namespace

BENCHMARK_MAIN();
