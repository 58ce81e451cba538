#pragma once

// OpenMax-style open-set baseline: per-class mean activation vectors, Weibull
// tails fitted to distances from them, and rank-weighted recalibration of the
// activation vector into J known-class probabilities plus an "unknown" one.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsce/dataio.hpp"
#include "dsce/error.hpp"

namespace dsce {

struct Weibull {
  double shape = 1.0;  // kappa
  double scale = 1.0;  // lambda
  double shift = 0.0;  // tau

  // 1 - exp(-((x - shift) / scale)^shape) for x > shift, else 0.
  double cdf(double x) const;
  double log_likelihood(std::span<const double> samples) const;
};

class WeibullFitError : public Error {
 public:
  enum class Kind { Degenerate, NotConverged, InvalidInput };

  WeibullFitError(Kind kind, const std::string& what, std::vector<double> trace = {})
      : Error(what), kind_(kind), trace_(std::move(trace)) {}
  Kind kind() const noexcept { return kind_; }
  // Shape iterates visited by Newton before giving up.
  const std::vector<double>& trace() const noexcept { return trace_; }

 private:
  Kind kind_;
  std::vector<double> trace_;
};

// Two-parameter maximum-likelihood fit (shift 0) to strictly positive samples.
// Newton iteration on the shape profile equation; tolerance 1e-9, at most
// 200 iterations.
Weibull fit_weibull_mle(std::span<const double> samples);

enum class TailShift {
  MinTail,  // shift by the smallest tail value
  None,
};

// Fits the `tail_size` largest distances. With MinTail the shifted samples
// that land exactly on 0 carry no likelihood information and are skipped.
Weibull weibull_fit_tail(std::span<const double> distances, std::size_t tail_size,
                         TailShift shift = TailShift::MinTail);

struct ClassModel {
  std::uint32_t class_id = 0;
  std::vector<double> mav;
  Weibull weibull;
  std::size_t tail_size = 0;
};

// Elementwise mean of equally sized vectors.
std::vector<double> compute_mav(std::span<const std::vector<double>> activations);

struct OpenMaxScores {
  double unknown = 0.0;
  std::vector<double> known;  // one per class id
};

OpenMaxScores openmax_recalibrate(std::span<const double> activation,
                                  std::span<const ClassModel> models, std::size_t alpha);

struct OpenMaxDecision {
  bool unknown = false;
  std::uint32_t class_id = 0;  // best known class, set even when unknown
};

// Unknown when its probability is the maximum (ties included), or when a
// threshold is given and the best known probability falls below it. Ties among
// known classes go to the lowest class id.
OpenMaxDecision openmax_decide(const OpenMaxScores& scores,
                               std::optional<double> threshold = std::nullopt);

// Fits one model per class from correctly classified training activations
// (rows of `train` whose argmax equals their label).
std::vector<ClassModel> openmax_fit(const LabeledSet& train, std::size_t tail_size);

// [{"class_id", "mav": [...], "kappa", "lambda", "tau", "eta"}, ...]
void save_openmax_models(std::span<const ClassModel> models, const std::filesystem::path& path);
std::vector<ClassModel> load_openmax_models(const std::filesystem::path& path);

}  // namespace dsce
