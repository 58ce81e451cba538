#pragma once

// Detection metrics, parameter sweeps, latency summaries and the exact
// Wilcoxon signed-rank test used to compare detectors.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dsce/pipeline.hpp"

namespace dsce {

// Concept evolution is the positive class.
struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct MetricRow {
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
};

// Ground truth: instance id -> is concept evolution.
using GroundTruth = std::unordered_map<std::uint64_t, bool>;

// Every decision must carry a known id and no error; every truth id must be decided.
Confusion confusion(std::span<const Decision> decisions, const GroundTruth& truth);

// Zero denominators yield 0.
MetricRow prf(const Confusion& c);

// Two-sided exact p-value. Zero differences are dropped, tied magnitudes get
// average ranks, and the statistic min(W+, W-) is compared against the exact
// null distribution over all 2^n sign assignments. Requires 1 <= n <= 20
// non-zero differences.
double wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs);

struct LatencyStats {
  double mean_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
};
LatencyStats latency_stats(std::span<const Decision> decisions);

// Fixed 3 significant figures, e.g. 0.0123, 1.50, 324.
std::string format_significant(double value, int digits = 3);

struct SweepGrid {
  std::vector<std::uint32_t> k;
  std::vector<double> radius;
};
SweepGrid parse_sweep_grid(const std::string& json_text);

struct SweepRow {
  std::uint32_t k = 0;
  double radius = 0.0;
  Confusion confusion;
  MetricRow metrics;
  double mean_latency_us = 0.0;
  std::optional<std::string> error;
};

struct SweepInput {
  const LabeledSet* train = nullptr;
  const ActivationMatrix* stream = nullptr;
  std::span<const std::uint32_t> predicted;
  std::span<const std::uint64_t> ids;  // may be empty
  const GroundTruth* truth = nullptr;
};

// One clusterer rebuild and online pass per (k, R) cell; the reducer is
// trained once. A failing cell records its error and the sweep continues.
std::vector<SweepRow> sweep(const SweepGrid& grid, const PipelineConfig& base,
                            const SweepInput& input, const OnlineOptions& options = {});

// Columns: k,R,TP,FP,TN,FN,precision,recall,f_measure,mean_latency_us
void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out);

// {"ids": [...], "is_ce": [...]}; ids default to 0..n-1.
GroundTruth load_ground_truth(const std::filesystem::path& path);
void save_ground_truth(std::span<const std::uint64_t> ids, const std::vector<bool>& is_ce,
                       const std::filesystem::path& path);

// JSON report of a confusion, its metrics and optional latency summary.
std::string metrics_report(const Confusion& c, const MetricRow& m,
                           const std::optional<LatencyStats>& latency);

}  // namespace dsce
