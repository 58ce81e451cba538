#include "dsce/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>

#include <json.hpp>

#include "dsce/error.hpp"

namespace dsce {

using nlohmann::json;

Confusion confusion(std::span<const Decision> decisions, const GroundTruth& truth) {
  if (decisions.size() != truth.size()) {
    throw InvalidArgument("decision count " + std::to_string(decisions.size()) +
                          " does not match ground truth count " + std::to_string(truth.size()));
  }
  Confusion c;
  std::vector<std::uint64_t> seen;
  seen.reserve(decisions.size());
  for (const auto& d : decisions) {
    if (d.error) {
      throw InvalidArgument("decision " + std::to_string(d.id) + " is an error record: " + *d.error);
    }
    const auto it = truth.find(d.id);
    if (it == truth.end()) {
      throw InvalidArgument("decision id " + std::to_string(d.id) + " has no ground truth");
    }
    seen.push_back(d.id);
    const bool flagged = d.verdict == Verdict::CE;
    if (it->second) {
      (flagged ? c.tp : c.fn)++;
    } else {
      (flagged ? c.fp : c.tn)++;
    }
  }
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
    throw InvalidArgument("duplicate decision ids");
  }
  return c;
}

MetricRow prf(const Confusion& c) {
  MetricRow m;
  if (c.tp + c.fp > 0) m.precision = double(c.tp) / double(c.tp + c.fp);
  if (c.tp + c.fn > 0) m.recall = double(c.tp) / double(c.tp + c.fn);
  if (m.precision + m.recall > 0.0) {
    m.f_measure = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

double wilcoxon_signed_rank(std::span<const std::pair<double, double>> pairs) {
  struct Diff {
    double magnitude;
    bool positive;
  };
  std::vector<Diff> diffs;
  for (const auto& [a, b] : pairs) {
    const double d = a - b;
    if (d != 0.0) diffs.push_back({std::abs(d), d > 0.0});
  }
  const std::size_t n = diffs.size();
  if (n == 0) throw InvalidArgument("Wilcoxon test: all differences are zero");
  if (n > 20) throw InvalidArgument("Wilcoxon exact test supports at most 20 non-zero pairs");

  std::sort(diffs.begin(), diffs.end(),
            [](const Diff& x, const Diff& y) { return x.magnitude < y.magnitude; });
  // Doubled average ranks keep every rank sum an integer.
  std::vector<std::uint32_t> rank2(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && diffs[j + 1].magnitude == diffs[i].magnitude) ++j;
    const auto doubled = static_cast<std::uint32_t>((i + 1) + (j + 1));
    for (std::size_t t = i; t <= j; ++t) rank2[t] = doubled;
    i = j + 1;
  }
  const std::uint32_t total2 = std::accumulate(rank2.begin(), rank2.end(), 0u);
  std::uint32_t plus2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (diffs[i].positive) plus2 += rank2[i];
  }
  const std::uint32_t stat2 = std::min(plus2, total2 - plus2);

  // Null distribution of the doubled W+ over all sign assignments.
  std::vector<std::uint64_t> ways(total2 + 1, 0);
  ways[0] = 1;
  for (const auto r : rank2) {
    for (std::uint32_t s = total2; s >= r; --s) {
      ways[s] += ways[s - r];
      if (s == r) break;
    }
  }
  std::uint64_t extreme = 0;
  for (std::uint32_t s = 0; s <= total2; ++s) {
    if (std::min(s, total2 - s) <= stat2) extreme += ways[s];
  }
  return std::min(1.0, double(extreme) / std::ldexp(1.0, static_cast<int>(n)));
}

LatencyStats latency_stats(std::span<const Decision> decisions) {
  std::vector<double> lat;
  for (const auto& d : decisions) {
    if (!d.error) lat.push_back(d.latency_us / 1000.0);
  }
  if (lat.empty()) throw InvalidArgument("latency statistics need at least one decision");
  LatencyStats s;
  s.mean_ms = std::accumulate(lat.begin(), lat.end(), 0.0) / double(lat.size());
  s.min_ms = *std::min_element(lat.begin(), lat.end());
  s.max_ms = *std::max_element(lat.begin(), lat.end());
  return s;
}

std::string format_significant(double value, int digits) {
  if (value == 0.0 || !std::isfinite(value)) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", std::max(0, digits - 1), value);
    return buf;
  }
  // Round in scientific form first so the exponent reflects any carry.
  char sci[64];
  std::snprintf(sci, sizeof sci, "%.*e", digits - 1, value);
  const char* e = std::strchr(sci, 'e');
  const int exponent = e ? std::atoi(e + 1) : 0;
  const int decimals = std::max(0, digits - 1 - exponent);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, std::strtod(sci, nullptr));
  return buf;
}

SweepGrid parse_sweep_grid(const std::string& json_text) {
  try {
    const auto j = json::parse(json_text);
    SweepGrid g;
    g.k = j.at("k").get<std::vector<std::uint32_t>>();
    g.radius = j.at("R").get<std::vector<double>>();
    if (g.k.empty() || g.radius.empty()) throw InvalidArgument("sweep grid must be non-empty");
    return g;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("invalid sweep grid: ") + e.what());
  }
}

std::vector<SweepRow> sweep(const SweepGrid& grid, const PipelineConfig& base,
                            const SweepInput& input, const OnlineOptions& options) {
  if (grid.k.empty() || grid.radius.empty()) throw InvalidArgument("sweep grid must be non-empty");
  if (!input.train || !input.stream || !input.truth) {
    throw InvalidArgument("sweep input is incomplete");
  }
  const auto reduced = reduce_training(*input.train, base);

  std::vector<SweepRow> rows;
  for (const auto k : grid.k) {
    for (const double r : grid.radius) {
      SweepRow row;
      row.k = k;
      row.radius = r;
      try {
        PipelineConfig config = base;
        config.k = k;
        config.radius = r;
        StateBundle state{reduced.autoencoder, reduced.normalizer,
                          build_clusterers(reduced, k, r), reduced.class_names, config};
        const auto decisions =
            online_run(state, *input.stream, input.predicted, input.ids, options);
        row.confusion = confusion(decisions, *input.truth);
        row.metrics = prf(row.confusion);
        row.mean_latency_us = latency_stats(decisions).mean_ms * 1000.0;
      } catch (const Error& e) {
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out) {
  out << "k,R,TP,FP,TN,FN,precision,recall,f_measure,mean_latency_us\n";
  char buf[256];
  for (const auto& r : rows) {
    if (r.error) {
      std::snprintf(buf, sizeof buf, "%u,%.4f,,,,,,,,\n", r.k, r.radius);
    } else {
      std::snprintf(buf, sizeof buf, "%u,%.4f,%zu,%zu,%zu,%zu,%.6f,%.6f,%.6f,%.3f\n", r.k,
                    r.radius, r.confusion.tp, r.confusion.fp, r.confusion.tn, r.confusion.fn,
                    r.metrics.precision, r.metrics.recall, r.metrics.f_measure,
                    r.mean_latency_us);
    }
    out << buf;
  }
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(LoadError::Kind::Io, path.string() + ": cannot open");
  try {
    const auto j = json::parse(in);
    const auto is_ce = j.at("is_ce").get<std::vector<bool>>();
    std::vector<std::uint64_t> ids;
    if (j.contains("ids")) {
      ids = j.at("ids").get<std::vector<std::uint64_t>>();
    } else {
      ids.resize(is_ce.size());
      std::iota(ids.begin(), ids.end(), std::uint64_t{0});
    }
    if (ids.size() != is_ce.size()) {
      throw LoadError(LoadError::Kind::Malformed, path.string() + ": ids and is_ce differ in length");
    }
    GroundTruth truth;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (!truth.emplace(ids[i], is_ce[i]).second) {
        throw LoadError(LoadError::Kind::Malformed,
                        path.string() + ": duplicate id " + std::to_string(ids[i]));
      }
    }
    return truth;
  } catch (const json::exception& e) {
    throw LoadError(LoadError::Kind::Malformed, path.string() + ": " + e.what());
  }
}

void save_ground_truth(std::span<const std::uint64_t> ids, const std::vector<bool>& is_ce,
                       const std::filesystem::path& path) {
  json j = {{"ids", std::vector<std::uint64_t>(ids.begin(), ids.end())},
            {"is_ce", is_ce}};
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << j.dump() << '\n';
}

std::string metrics_report(const Confusion& c, const MetricRow& m,
                           const std::optional<LatencyStats>& latency) {
  auto fixed = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return json::parse(buf);
  };
  json j = {{"TP", c.tp},
            {"FP", c.fp},
            {"TN", c.tn},
            {"FN", c.fn},
            {"precision", fixed(m.precision)},
            {"recall", fixed(m.recall)},
            {"f_measure", fixed(m.f_measure)}};
  if (latency) {
    j["latency_ms"] = {{"mean", format_significant(latency->mean_ms)},
                       {"min", format_significant(latency->min_ms)},
                       {"max", format_significant(latency->max_ms)}};
  }
  return j.dump(2);
}

}  // namespace dsce
