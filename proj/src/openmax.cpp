#include "dsce/openmax.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "dsce/kernels.hpp"

namespace dsce {

double Weibull::cdf(double x) const {
  if (!(x > shift)) return 0.0;
  return -std::expm1(-std::pow((x - shift) / scale, shape));
}

double Weibull::log_likelihood(std::span<const double> samples) const {
  double ll = 0.0;
  for (const double raw : samples) {
    const double x = raw - shift;
    const double z = x / scale;
    ll += std::log(shape / scale) + (shape - 1.0) * std::log(z) - std::pow(z, shape);
  }
  return ll;
}

namespace {

constexpr double kTolerance = 1e-9;
constexpr int kMaxIterations = 200;

// Profile score for the shape on samples scaled into (0, 1]:
//   g(k) = sum y^k ln y / sum y^k - 1/k - mean(ln y)
// g is strictly increasing, negative near 0 and positive for large k unless
// all samples are equal.
struct ShapeProfile {
  std::span<const double> log_y;
  double mean_log;

  void eval(double k, double& g, double& dg) const {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (const double l : log_y) {
      const double w = std::exp(k * l);
      s0 += w;
      s1 += w * l;
      s2 += w * l * l;
    }
    const double ratio = s1 / s0;
    g = ratio - 1.0 / k - mean_log;
    dg = (s2 / s0 - ratio * ratio) + 1.0 / (k * k);
  }
};

}  // namespace

Weibull fit_weibull_mle(std::span<const double> samples) {
  if (samples.size() < 2) {
    throw WeibullFitError(WeibullFitError::Kind::InvalidInput,
                          "Weibull fit needs at least 2 samples");
  }
  for (const double x : samples) {
    if (!(x > 0.0) || !std::isfinite(x)) {
      throw WeibullFitError(WeibullFitError::Kind::InvalidInput,
                            "Weibull fit needs finite, strictly positive samples");
    }
  }
  const double x_max = *std::max_element(samples.begin(), samples.end());
  const double x_min = *std::min_element(samples.begin(), samples.end());
  if (x_max == x_min) {
    throw WeibullFitError(WeibullFitError::Kind::Degenerate,
                          "Weibull tail is degenerate: all values equal");
  }

  std::vector<double> log_y(samples.size());
  std::transform(samples.begin(), samples.end(), log_y.begin(),
                 [x_max](double x) { return std::log(x / x_max); });
  const double mean_log = std::accumulate(log_y.begin(), log_y.end(), 0.0) / double(log_y.size());
  double var_log = 0.0;
  for (const double l : log_y) var_log += (l - mean_log) * (l - mean_log);
  var_log /= double(log_y.size());
  const ShapeProfile profile{log_y, mean_log};

  // Moment estimate from the Gumbel law of ln X as a starting point.
  double k = std::numbers::pi / std::sqrt(6.0 * var_log);
  if (!std::isfinite(k) || k <= 0.0) k = 1.0;
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  std::vector<double> trace{k};

  bool converged = false;
  for (int it = 0; it < kMaxIterations; ++it) {
    double g, dg;
    profile.eval(k, g, dg);
    if (g < 0.0) lo = std::max(lo, k);
    else hi = std::min(hi, k);
    double next = k - g / dg;
    // Fall back to bisection (or doubling) whenever Newton leaves the bracket.
    if (!std::isfinite(next) || next <= lo || next >= hi) {
      next = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * k;
    }
    trace.push_back(next);
    if (std::abs(next - k) <= kTolerance * std::max(1.0, k)) {
      k = next;
      converged = true;
      break;
    }
    k = next;
  }
  if (!converged) {
    throw WeibullFitError(WeibullFitError::Kind::NotConverged,
                          "Weibull shape iteration did not converge in " +
                              std::to_string(kMaxIterations) + " iterations",
                          std::move(trace));
  }

  double mean_pow = 0.0;
  for (const double l : log_y) mean_pow += std::exp(k * l);
  mean_pow /= double(log_y.size());
  Weibull w;
  w.shape = k;
  w.scale = x_max * std::pow(mean_pow, 1.0 / k);
  w.shift = 0.0;
  return w;
}

Weibull weibull_fit_tail(std::span<const double> distances, std::size_t tail_size,
                         TailShift shift) {
  if (tail_size < 2) {
    throw WeibullFitError(WeibullFitError::Kind::InvalidInput, "tail size must be >= 2");
  }
  if (distances.size() < tail_size) {
    throw WeibullFitError(WeibullFitError::Kind::InvalidInput,
                          "need at least " + std::to_string(tail_size) + " distances, got " +
                              std::to_string(distances.size()));
  }
  for (const double d : distances) {
    if (!(d >= 0.0) || !std::isfinite(d)) {
      throw WeibullFitError(WeibullFitError::Kind::InvalidInput,
                            "distances must be finite and non-negative");
    }
  }
  std::vector<double> tail(distances.begin(), distances.end());
  std::nth_element(tail.begin(), tail.end() - static_cast<std::ptrdiff_t>(tail_size), tail.end());
  tail.erase(tail.begin(), tail.end() - static_cast<std::ptrdiff_t>(tail_size));
  std::sort(tail.begin(), tail.end());
  if (tail.front() == tail.back()) {
    throw WeibullFitError(WeibullFitError::Kind::Degenerate,
                          "Weibull tail is degenerate: all values equal");
  }

  const double tau = shift == TailShift::MinTail ? tail.front() : 0.0;
  std::vector<double> shifted;
  for (const double d : tail) {
    if (d - tau > 0.0) shifted.push_back(d - tau);
  }
  if (shifted.size() < 2 ||
      *std::min_element(shifted.begin(), shifted.end()) ==
          *std::max_element(shifted.begin(), shifted.end())) {
    throw WeibullFitError(WeibullFitError::Kind::Degenerate,
                          "Weibull tail is degenerate: fewer than two distinct values above "
                          "the shift");
  }
  Weibull w = fit_weibull_mle(shifted);
  w.shift = tau;
  return w;
}

std::vector<double> compute_mav(std::span<const std::vector<double>> activations) {
  if (activations.empty()) throw InvalidArgument("mean activation vector of no instances");
  const std::size_t dim = activations.front().size();
  std::vector<double> sum(dim, 0.0);
  for (const auto& a : activations) {
    if (a.size() != dim) throw DimensionError("activation vectors have ragged dimensions");
    for (std::size_t d = 0; d < dim; ++d) sum[d] += a[d];
  }
  for (auto& s : sum) s /= double(activations.size());
  return sum;
}

OpenMaxScores openmax_recalibrate(std::span<const double> activation,
                                  std::span<const ClassModel> models, std::size_t alpha) {
  const std::size_t num_classes = activation.size();
  if (alpha < 1) throw InvalidArgument("alpha must be >= 1");
  if (alpha > num_classes) {
    throw InvalidArgument("alpha " + std::to_string(alpha) + " exceeds class count " +
                          std::to_string(num_classes));
  }
  std::vector<const ClassModel*> by_class(num_classes, nullptr);
  for (const auto& m : models) {
    if (m.class_id < num_classes) by_class[m.class_id] = &m;
  }

  std::vector<std::size_t> ranked(num_classes);
  std::iota(ranked.begin(), ranked.end(), 0);
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](std::size_t a, std::size_t b) { return activation[a] > activation[b]; });

  std::vector<double> logits(num_classes + 1, 0.0);
  for (std::size_t j = 0; j < num_classes; ++j) logits[j + 1] = activation[j];
  for (std::size_t s = 1; s <= alpha; ++s) {
    const std::size_t j = ranked[s - 1];
    const ClassModel* model = by_class[j];
    if (model == nullptr) {
      throw InvalidArgument("no OpenMax model for class " + std::to_string(j));
    }
    if (model->mav.size() != num_classes) {
      throw DimensionError("class " + std::to_string(j) + " mean activation vector has dimension " +
                           std::to_string(model->mav.size()) + ", expected " +
                           std::to_string(num_classes));
    }
    const double dist = kernels::euclidean(activation, model->mav);
    const double weight = double(alpha - s + 1) / double(alpha);
    const double omega = 1.0 - weight * model->weibull.cdf(dist);
    logits[j + 1] = activation[j] * omega;
    logits[0] += activation[j] * (1.0 - omega);
  }

  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (auto& l : logits) {
    l = std::exp(l - top);
    total += l;
  }
  OpenMaxScores scores;
  scores.unknown = logits[0] / total;
  scores.known.resize(num_classes);
  for (std::size_t j = 0; j < num_classes; ++j) scores.known[j] = logits[j + 1] / total;
  return scores;
}

OpenMaxDecision openmax_decide(const OpenMaxScores& scores, std::optional<double> threshold) {
  OpenMaxDecision decision;
  if (scores.known.empty()) {
    decision.unknown = true;
    return decision;
  }
  const auto best = std::max_element(scores.known.begin(), scores.known.end());
  decision.class_id = static_cast<std::uint32_t>(best - scores.known.begin());
  decision.unknown = scores.unknown >= *best || (threshold && *best < *threshold);
  return decision;
}

std::vector<ClassModel> openmax_fit(const LabeledSet& train, std::size_t tail_size) {
  train.validate();
  const std::size_t dim = train.matrix.dim();
  std::vector<ClassModel> models;
  for (std::uint32_t j = 0; j < train.num_classes(); ++j) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < train.matrix.rows(); ++i) {
      if (train.labels[i] != j) continue;
      const auto row = train.matrix.row(i);
      const auto argmax = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      if (argmax != j) continue;
      rows.emplace_back(row.begin(), row.end());
    }
    if (rows.empty()) {
      throw InvalidArgument("class " + std::to_string(j) + " has no correctly classified instances");
    }
    ClassModel m;
    m.class_id = j;
    m.mav = compute_mav(rows);
    std::vector<double> dist(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) dist[r] = kernels::euclidean(rows[r], m.mav);
    m.tail_size = tail_size;
    m.weibull = weibull_fit_tail(dist, tail_size);
    if (m.mav.size() != dim) throw DimensionError("mean activation vector dimension mismatch");
    models.push_back(std::move(m));
  }
  return models;
}

void save_openmax_models(std::span<const ClassModel> models, const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& m : models) {
    j.push_back({{"class_id", m.class_id},
                 {"mav", m.mav},
                 {"kappa", m.weibull.shape},
                 {"lambda", m.weibull.scale},
                 {"tau", m.weibull.shift},
                 {"eta", m.tail_size}});
  }
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << j.dump(2) << '\n';
}

std::vector<ClassModel> load_openmax_models(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(LoadError::Kind::Io, path.string() + ": cannot open");
  try {
    const auto j = nlohmann::json::parse(in);
    std::vector<ClassModel> models;
    for (const auto& e : j) {
      ClassModel m;
      m.class_id = e.at("class_id").get<std::uint32_t>();
      m.mav = e.at("mav").get<std::vector<double>>();
      m.weibull.shape = e.at("kappa").get<double>();
      m.weibull.scale = e.at("lambda").get<double>();
      m.weibull.shift = e.at("tau").get<double>();
      m.tail_size = e.at("eta").get<std::size_t>();
      if (!(m.weibull.shape > 0.0) || !(m.weibull.scale > 0.0) || !(m.weibull.shift >= 0.0)) {
        throw LoadError(LoadError::Kind::Malformed,
                        path.string() + ": Weibull parameters out of range for class " +
                            std::to_string(m.class_id));
      }
      models.push_back(std::move(m));
    }
    return models;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(LoadError::Kind::Malformed, path.string() + ": " + e.what());
  }
}

}  // namespace dsce
