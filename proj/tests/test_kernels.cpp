#include <doctest.h>

#include <random>
#include <vector>

#include "dsce/kernels.hpp"

using namespace dsce::kernels;

namespace {

template <typename T>
std::vector<T> random_vec(std::size_t n, std::mt19937_64& rng, bool sparse = false) {
  std::normal_distribution<double> normal;
  std::vector<T> v(n);
  for (auto& x : v) x = (sparse && rng() % 3 == 0) ? T(0) : static_cast<T>(normal(rng));
  return v;
}

}  // namespace

TEST_CASE_TEMPLATE("parallel kernels match the serial reference bit for bit", T, float, double) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t batch = 1 + rng() % 40, in = 1 + rng() % 70, out = 1 + rng() % 30;
    const auto w = random_vec<T>(out * in, rng);
    const auto b = random_vec<T>(out, rng);
    const auto x = random_vec<T>(batch * in, rng);
    const auto delta = random_vec<T>(batch * out, rng, true);

    for (const bool relu : {false, true}) {
      std::vector<T> y1(batch * out), y2(batch * out), z1(batch * out), z2(batch * out);
      serial::affine<T>(w, b, x, batch, in, out, relu, y1, z1);
      parallel::affine<T>(w, b, x, batch, in, out, relu, y2, z2);
      CHECK(y1 == y2);
      CHECK(z1 == z2);
    }

    std::vector<T> gw1(out * in), gb1(out), gw2(out * in), gb2(out);
    serial::weight_gradient<T>(delta, x, batch, in, out, gw1, gb1);
    parallel::weight_gradient<T>(delta, x, batch, in, out, gw2, gb2);
    CHECK(gw1 == gw2);
    CHECK(gb1 == gb2);

    std::vector<T> back1(batch * in), back2(batch * in);
    serial::backprop_input<T>(delta, w, batch, in, out, back1);
    parallel::backprop_input<T>(delta, w, batch, in, out, back2);
    CHECK(back1 == back2);
  }
}

TEST_CASE("affine computes a dense layer with optional relu") {
  // w = [[1, 2], [-1, 0]], b = [0.5, 0], x = [1, 1]
  const std::vector<double> w = {1, 2, -1, 0}, b = {0.5, 0}, x = {1, 1};
  std::vector<double> y(2), z(2);
  serial::affine<double>(w, b, x, 1, 2, 2, true, y, z);
  CHECK(z == std::vector<double>{3.5, -1});
  CHECK(y == std::vector<double>{3.5, 0});
}

TEST_CASE("count_within agrees between serial and parallel scans") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t dim = 1 + rng() % 12, n = rng() % 500;
    const auto pts = random_vec<double>(n * dim, rng);
    const auto q = random_vec<double>(dim, rng);
    const double r = 0.5 + double(rng() % 100) / 25.0;
    const auto a = serial::count_within(pts, dim, q, r);
    CHECK(a == parallel::count_within(pts, dim, q, r));
    std::vector<double> d1(n), d2(n);
    serial::distances(pts, dim, q, d1);
    parallel::distances(pts, dim, q, d2);
    CHECK(d1 == d2);
    CHECK(std::size_t(std::count_if(d1.begin(), d1.end(), [r](double d) { return d <= r; })) == a);
  }
}
