#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "dsce/openmax.hpp"
#include "oracles.hpp"

using namespace dsce;

namespace {

ClassModel model(std::uint32_t id, std::vector<double> mav, Weibull w) {
  return {id, std::move(mav), w, 9};
}

double sum_scores(const OpenMaxScores& s) {
  return std::accumulate(s.known.begin(), s.known.end(), s.unknown);
}

}  // namespace

TEST_CASE("mean activation vectors") {
  const std::vector<std::vector<double>> one = {{1, 2, 3}};
  CHECK(compute_mav(one) == std::vector<double>{1, 2, 3});
  const std::vector<std::vector<double>> two = {{0, 4}, {2, 0}};
  CHECK(compute_mav(two) == std::vector<double>{1, 2});
  const std::vector<std::vector<double>> ragged = {{0, 4}, {2}};
  CHECK_THROWS_AS(compute_mav(ragged), DimensionError);
}

TEST_CASE("Weibull MLE recovers known parameters") {
  const auto samples = oracle::weibull_samples(2.0, 1.5, 5000, 77);
  const auto w = fit_weibull_mle(samples);
  CHECK(std::abs(w.shape - 2.0) / 2.0 < 0.05);
  CHECK(std::abs(w.scale - 1.5) / 1.5 < 0.05);
  CHECK(w.shift == 0.0);

  const auto other = oracle::weibull_samples(0.7, 4.0, 5000, 78);
  const auto v = fit_weibull_mle(other);
  CHECK(std::abs(v.shape - 0.7) / 0.7 < 0.05);
  CHECK(std::abs(v.scale - 4.0) / 4.0 < 0.05);
}

TEST_CASE("the fit is a local likelihood maximum") {
  const auto samples = oracle::weibull_samples(1.3, 0.8, 300, 79);
  const auto w = fit_weibull_mle(samples);
  const double best = w.log_likelihood(samples);
  for (const double f : {0.9, 0.95, 1.05, 1.1}) {
    CHECK(Weibull{w.shape * f, w.scale, 0}.log_likelihood(samples) < best);
    CHECK(Weibull{w.shape, w.scale * f, 0}.log_likelihood(samples) < best);
  }
}

TEST_CASE("degenerate and invalid samples are rejected") {
  const std::vector<double> equal(9, 0.5);
  CHECK_THROWS_AS(fit_weibull_mle(equal), WeibullFitError);
  try {
    weibull_fit_tail(equal, 9);
    FAIL("expected a degenerate tail error");
  } catch (const WeibullFitError& e) {
    CHECK(e.kind() == WeibullFitError::Kind::Degenerate);
  }
  const std::vector<double> negative = {1.0, -1.0, 2.0};
  CHECK_THROWS_AS(fit_weibull_mle(negative), WeibullFitError);
  const std::vector<double> few = {1.0, 2.0};
  CHECK_THROWS_AS(weibull_fit_tail(few, 5), WeibullFitError);
  // Only the minimum differs: after the shift a single positive value remains.
  const std::vector<double> one_distinct = {0.1, 0.2, 0.9, 0.9, 0.9};
  CHECK_THROWS_AS(weibull_fit_tail(one_distinct, 4), WeibullFitError);
}

TEST_CASE("tail fitting uses the largest distances shifted by their minimum") {
  std::vector<double> distances = oracle::weibull_samples(2.0, 1.0, 50, 80);
  const auto w = weibull_fit_tail(distances, 10);
  std::sort(distances.begin(), distances.end());
  CHECK(w.shift == distances[40]);
  std::vector<double> shifted;
  for (std::size_t i = 41; i < 50; ++i) shifted.push_back(distances[i] - distances[40]);
  const auto direct = fit_weibull_mle(shifted);
  CHECK(w.shape == direct.shape);
  CHECK(w.scale == direct.scale);
  CHECK(w.cdf(w.shift) == 0.0);
  CHECK(w.cdf(w.shift + 100.0) == doctest::Approx(1.0));
}

TEST_CASE("recalibration matches a hand computation") {
  // Two classes, alpha 2. Class 1 has the larger activation.
  const std::vector<double> v = {1.0, 3.0};
  const Weibull w0{1.0, 1.0, 0.0}, w1{2.0, 2.0, 0.0};
  const std::vector<ClassModel> models = {model(0, {0.0, 0.0}, w0), model(1, {1.0, 3.0}, w1)};
  const auto s = openmax_recalibrate(v, models, 2);

  const double d0 = std::sqrt(10.0), d1 = 0.0;
  const double om1 = 1.0 - 1.0 * (1.0 - std::exp(-std::pow(d1 / 2.0, 2.0)));
  const double om0 = 1.0 - 0.5 * (1.0 - std::exp(-d0));
  const double l1 = 3.0 * om1, l0 = 1.0 * om0;
  const double lu = 3.0 * (1 - om1) + 1.0 * (1 - om0);
  const double z = std::exp(lu) + std::exp(l0) + std::exp(l1);
  CHECK(s.unknown == doctest::Approx(std::exp(lu) / z).epsilon(1e-12));
  CHECK(s.known[0] == doctest::Approx(std::exp(l0) / z).epsilon(1e-12));
  CHECK(s.known[1] == doctest::Approx(std::exp(l1) / z).epsilon(1e-12));
}

TEST_CASE("scores form a distribution and the inlier limit keeps the raw argmax") {
  std::mt19937_64 rng(81);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t classes = 2 + rng() % 8;
    std::vector<ClassModel> models, inliers;
    for (std::uint32_t j = 0; j < classes; ++j) {
      std::vector<double> mav(classes);
      for (auto& x : mav) x = normal(rng);
      models.push_back(model(j, mav, {0.5 + double(rng() % 40) / 10.0, 0.5 + double(rng() % 40) / 10.0,
                                      double(rng() % 5)}));
      inliers.push_back(model(j, mav, {2.0, 1.0, 1e9}));
    }
    std::vector<double> v(classes);
    for (auto& x : v) x = normal(rng);
    const std::size_t alpha = 1 + rng() % classes;

    const auto s = openmax_recalibrate(v, models, alpha);
    CHECK(sum_scores(s) == doctest::Approx(1.0).epsilon(1e-9));
    for (const double p : s.known) CHECK(p >= 0.0);

    const auto in = openmax_recalibrate(v, inliers, alpha);
    const auto raw = std::max_element(v.begin(), v.end()) - v.begin();
    const auto got = std::max_element(in.known.begin(), in.known.end()) - in.known.begin();
    CHECK(raw == got);
  }
}

TEST_CASE("recalibration validates alpha and models") {
  const std::vector<double> v = {1.0, 2.0};
  const std::vector<ClassModel> models = {model(0, {0, 0}, {}), model(1, {0, 0}, {})};
  CHECK_THROWS_AS(openmax_recalibrate(v, models, 0), InvalidArgument);
  CHECK_THROWS_AS(openmax_recalibrate(v, models, 3), InvalidArgument);
  const std::vector<ClassModel> partial = {model(0, {0, 0}, {})};
  CHECK_THROWS_AS(openmax_recalibrate(v, partial, 2), InvalidArgument);
  const std::vector<ClassModel> wrong_dim = {model(0, {0}, {}), model(1, {0}, {})};
  CHECK_THROWS_AS(openmax_recalibrate(v, wrong_dim, 1), DimensionError);
}

TEST_CASE("decision rule") {
  CHECK(openmax_decide({0.2, {0.5, 0.3}}).unknown == false);
  CHECK(openmax_decide({0.2, {0.5, 0.3}}).class_id == 0);
  CHECK(openmax_decide({0.5, {0.4, 0.1}}).unknown);
  CHECK(openmax_decide({0.4, {0.4, 0.2}}).unknown);  // ties go to unknown
  CHECK(openmax_decide({0.1, {0.45, 0.45}}).class_id == 0);
  CHECK(openmax_decide({0.1, {0.5, 0.4}}, 0.6).unknown);
  CHECK_FALSE(openmax_decide({0.1, {0.5, 0.4}}, 0.3).unknown);
}

TEST_CASE("fitting uses correctly classified rows and round-trips through JSON") {
  std::mt19937_64 rng(83);
  std::normal_distribution<double> noise(0.0, 0.5);
  std::vector<float> data;
  std::vector<std::uint32_t> labels;
  for (std::uint32_t j = 0; j < 3; ++j) {
    for (int i = 0; i < 40; ++i) {
      for (std::uint32_t d = 0; d < 3; ++d) data.push_back(float((d == j ? 4.0 : 0.0) + noise(rng)));
      labels.push_back(j);
    }
  }
  // A misclassified row that would drag class 0's mean far away.
  data.insert(data.end(), {0.0f, 100.0f, 0.0f});
  labels.push_back(0);
  const LabeledSet train{ActivationMatrix(121, 3, data), labels, {"a", "b", "c"}};
  const auto models = openmax_fit(train, 9);
  REQUIRE(models.size() == 3);
  CHECK(models[0].mav[1] < 1.0);
  CHECK(models[0].mav[0] > 3.0);

  const auto path = std::filesystem::temp_directory_path() / "dsce_openmax_models.json";
  save_openmax_models(models, path);
  const auto back = load_openmax_models(path);
  REQUIRE(back.size() == 3);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(back[j].mav == models[j].mav);
    CHECK(back[j].weibull.shape == models[j].weibull.shape);
    CHECK(back[j].weibull.scale == models[j].weibull.scale);
    CHECK(back[j].weibull.shift == models[j].weibull.shift);
    CHECK(back[j].tail_size == 9);
  }
}
