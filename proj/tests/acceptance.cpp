// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dsce/binary_io.hpp"
#include "dsce/eval.hpp"
#include "dsce/openmax.hpp"
#include "dsce/pipeline.hpp"
#include "oracles.hpp"

using namespace dsce;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// 1. mcod-standard probes against a brute-force neighbor count.
Outcome mcod_oracle_equivalence() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1001);
  std::size_t probes = 0, agree = 0;
  for (int stream = 0; stream < 200; ++stream) {
    const std::size_t n = 100 + rng() % 901, dim = 1 + rng() % 16;
    const std::uint32_t k = 2 + rng() % 19;
    const double radius = std::sqrt(double(dim)) * (0.05 + 0.45 * double(rng() % 1000) / 1000.0);
    const std::uint64_t window = n / 4 + rng() % (n + 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    // Points gather around a few centers so micro-clusters actually form.
    std::vector<std::vector<double>> centers(1 + rng() % 4, std::vector<double>(dim));
    for (auto& c : centers) {
      for (auto& x : c) x = u(rng);
    }
    std::normal_distribution<double> spread(0.0, radius / 3.0);
    auto draw = [&] {
      std::vector<double> p = centers[rng() % centers.size()];
      for (auto& x : p) x += spread(rng);
      if (rng() % 5 == 0) {
        for (auto& x : p) x = u(rng);
      }
      return p;
    };

    Clusterer c(k, radius, window);
    std::deque<std::vector<double>> stored;
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = draw();
      c.add(p);
      stored.push_back(p);
      if (stored.size() > window) stored.pop_front();
      if (i % std::max<std::size_t>(1, n / 60) == 0) {
        const auto q = draw();
        const std::vector<std::vector<double>> snapshot(stored.begin(), stored.end());
        const bool expected = oracle::neighbors_within(snapshot, q, radius) >= k;
        const bool got = c.probe(q, ProbeMode::McodStandard).verdict == Verdict::ND;
        ++probes;
        if (expected == got) ++agree;
      }
    }
  }
  const double elapsed = seconds_since(start);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu/%zu probes agree over 200 streams in %.1fs", agree, probes,
                elapsed);
  return {probes >= 10000 && agree == probes && elapsed < 60.0, buf};
}

// 2. Structural invariants after every insert and evict.
Outcome clusterer_invariants() {
  std::mt19937_64 rng(1002);
  std::normal_distribution<double> spread(0.0, 0.05);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t dim = 3;
  std::vector<std::vector<double>> centers(5, std::vector<double>(dim));
  for (auto& c : centers) {
    for (auto& x : c) x = u(rng);
  }
  Clusterer c(5, 0.2, 400);
  std::size_t events = 0, max_clusters = 0;
  try {
    for (; events < 10000; ++events) {
      if (!c.empty() && rng() % 4 == 0) {
        c.evict_oldest();
      } else {
        std::vector<double> p = centers[rng() % centers.size()];
        for (auto& x : p) x += spread(rng);
        c.add(p);
      }
      c.check_invariants();
      max_clusters = std::max(max_clusters, c.micro_clusters().size());
    }
  } catch (const Error& e) {
    return {false, "event " + std::to_string(events) + ": " + e.what()};
  }
  return {max_clusters > 0, "10000 events, up to " + std::to_string(max_clusters) +
                                " micro-clusters alive"};
}

// 3. Synthetic end-to-end run with a (k, R) sweep.
Outcome end_to_end_synthetic() {
  const auto start = Clock::now();
  const BenchmarkConfig bc;  // dim 64, 1000 per class, 250 + 250 online
  const auto b = make_benchmark(bc, 2024);
  PipelineConfig config;
  config.code_dim = 8;
  config.epochs = 50;
  config.seed = 11;
  GroundTruth truth;
  for (std::size_t i = 0; i < b.is_ce.size(); ++i) truth[i] = b.is_ce[i];
  const SweepGrid grid{{5, 10, 20, 40, 80}, {0.04, 0.1, 0.3, 0.5, 0.7, 0.9, 1.2}};
  OnlineOptions options;
  options.measure_latency = false;
  const auto rows = sweep(grid, config, {&b.train, &b.stream, b.predicted, {}, &truth}, options);
  const SweepRow* best = nullptr;
  for (const auto& r : rows) {
    if (!r.error && (!best || r.metrics.f_measure > best->metrics.f_measure)) best = &r;
  }
  const double elapsed = seconds_since(start);
  if (!best) return {false, "every sweep cell failed"};
  char buf[160];
  std::snprintf(buf, sizeof buf, "best F=%.3f at k=%u R=%g (P=%.3f R=%.3f), %.1fs",
                best->metrics.f_measure, best->k, best->radius, best->metrics.precision,
                best->metrics.recall, elapsed);
  return {best->metrics.f_measure >= 0.90 && elapsed < 120.0, buf};
}

// 4. Metric arithmetic.
Outcome metric_arithmetic() {
  const auto anchor = prf({89, 38, 0, 411});
  bool ok = std::abs(anchor.f_measure - 0.284) <= 0.0005 &&
            std::abs(anchor.precision - 0.700) <= 0.001 && std::abs(anchor.recall - 0.178) <= 1e-12;
  std::mt19937_64 rng(1004);
  int bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const Confusion c{1 + rng() % 1000, rng() % 1000, rng() % 1000, rng() % 1000};
    const auto m = prf(c);
    const double hm = 2.0 / (1.0 / m.precision + 1.0 / m.recall);
    if (std::abs(m.f_measure - hm) > 1e-12) ++bad;
  }
  ok = ok && bad == 0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "anchor P=%.4f R=%.4f F=%.4f; %d/1000 harmonic-mean mismatches",
                anchor.precision, anchor.recall, anchor.f_measure, bad);
  return {ok, buf};
}

// 5. Exact Wilcoxon.
Outcome wilcoxon_exact() {
  const std::vector<std::pair<double, double>> pairs = {
      {0.638, 0.284}, {0.436, 0.170}, {0.518, 0.081}, {0.531, 0.158},
      {0.281, 0.206}, {0.088, 0.104}, {0.698, 0.000}, {0.357, 0.182},
  };
  const double p = wilcoxon_signed_rank(pairs);
  std::mt19937_64 rng(1005);
  int cases = 0, bad = 0;
  while (cases < 100) {
    const std::size_t n = 1 + rng() % 10;
    std::vector<std::pair<double, double>> random_pairs;
    for (std::size_t i = 0; i < n; ++i) {
      random_pairs.push_back({double(rng() % 8) / 8.0, double(rng() % 8) / 8.0});
    }
    if (std::all_of(random_pairs.begin(), random_pairs.end(),
                    [](const auto& q) { return q.first == q.second; })) {
      continue;
    }
    ++cases;
    if (std::abs(wilcoxon_signed_rank(random_pairs) - oracle::wilcoxon_enumerate(random_pairs)) >
        1e-12) {
      ++bad;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "detector pairs p=%.6f; %d/100 enumeration mismatches", p, bad);
  return {std::abs(p - 0.015625) < 1e-12 && bad == 0, buf};
}

// 6. Autoencoder gradients against central finite differences.
Outcome gradient_check() {
  std::mt19937_64 rng(1006);
  std::normal_distribution<double> normal(0.0, 0.5);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t in = 3 + rng() % 10, code = 1 + rng() % (in - 1), rows = 1 + rng() % 8;
    AutoencoderParams<double> p{in, code, std::vector<double>(code * in), std::vector<double>(code),
                                std::vector<double>(in * code), std::vector<double>(in)};
    for (auto* v : {&p.w1, &p.b1, &p.w2, &p.b2}) {
      for (auto& x : *v) x = normal(rng);
    }
    std::vector<double> batch(rows * in);
    for (auto& x : batch) x = 2.0 * normal(rng);
    const auto g = compute_gradients<double>(p, batch, rows);
    std::vector<double>* params[] = {&p.w1, &p.b1, &p.w2, &p.b2};
    const std::vector<double>* grads[] = {&g.w1, &g.b1, &g.w2, &g.b2};
    const double eps = 1e-5;
    for (int t = 0; t < 4; ++t) {
      for (std::size_t i = 0; i < params[t]->size(); ++i) {
        double& w = (*params[t])[i];
        const double saved = w;
        w = saved + eps;
        const double up = oracle::ae_loss(p.w1, p.b1, p.w2, p.b2, batch, rows, in, code);
        w = saved - eps;
        const double down = oracle::ae_loss(p.w1, p.b1, p.w2, p.b2, batch, rows, in, code);
        w = saved;
        const double numeric = (up - down) / (2.0 * eps), analytic = (*grads[t])[i];
        const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
        worst = std::max(worst, std::abs(numeric - analytic) / scale);
      }
    }
  }
  char buf[120];
  std::snprintf(buf, sizeof buf, "max relative error %.2e over 20 configurations", worst);
  return {worst <= 1e-4, buf};
}

// 7. Weibull maximum likelihood.
Outcome weibull_recovery() {
  const auto samples = oracle::weibull_samples(2.0, 1.5, 5000, 1007);
  const auto w = fit_weibull_mle(samples);
  bool rejected = false;
  try {
    weibull_fit_tail(std::vector<double>(20, 0.3), 10);
  } catch (const WeibullFitError& e) {
    rejected = e.kind() == WeibullFitError::Kind::Degenerate;
  }
  const double ek = std::abs(w.shape - 2.0) / 2.0, el = std::abs(w.scale - 1.5) / 1.5;
  char buf[160];
  std::snprintf(buf, sizeof buf, "kappa=%.4f lambda=%.4f; degenerate tail %s", w.shape, w.scale,
                rejected ? "rejected" : "accepted");
  return {ek <= 0.05 && el <= 0.05 && rejected, buf};
}

// 8. OpenMax probabilities.
Outcome openmax_distribution() {
  std::mt19937_64 rng(1008);
  std::normal_distribution<double> normal(0.0, 4.0);
  double worst_sum = 0.0;
  int argmax_bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t classes = 2 + rng() % 9;
    std::vector<ClassModel> models, inliers;
    for (std::uint32_t j = 0; j < classes; ++j) {
      std::vector<double> mav(classes);
      for (auto& x : mav) x = normal(rng);
      const Weibull w{0.5 + double(rng() % 50) / 10.0, 0.1 + double(rng() % 50) / 5.0,
                      double(rng() % 4)};
      models.push_back({j, mav, w, 9});
      inliers.push_back({j, mav, {w.shape, w.scale, 1e12}, 9});
    }
    std::vector<double> v(classes);
    for (auto& x : v) x = normal(rng);
    const std::size_t alpha = 1 + rng() % classes;
    const auto s = openmax_recalibrate(v, models, alpha);
    const double total = std::accumulate(s.known.begin(), s.known.end(), s.unknown);
    worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    const auto in = openmax_recalibrate(v, inliers, alpha);
    const auto raw = std::max_element(v.begin(), v.end()) - v.begin();
    if (std::max_element(in.known.begin(), in.known.end()) - in.known.begin() != raw) ++argmax_bad;
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "max |sum-1|=%.1e over 1000 inputs; %d inlier argmax mismatches",
                worst_sum, argmax_bad);
  return {worst_sum <= 1e-9 && argmax_bad == 0, buf};
}

// 9. Single-threaded probe throughput at dim 100 against 5000 stored points.
Outcome probe_throughput() {
  const std::size_t dim = 100, stored = 5000;
  std::mt19937_64 rng(1009);
  std::uniform_real_distribution<double> u;
  std::vector<std::vector<double>> queries(2000, std::vector<double>(dim));
  for (auto& q : queries) {
    for (auto& x : q) x = u(rng);
  }
  double worst_rate = INFINITY;
  std::string detail;
  for (const ProbeMode mode : {ProbeMode::McStrict, ProbeMode::McodStandard}) {
    Clusterer c(80, 0.04, stored + 1);
    std::vector<double> p(dim);
    for (std::size_t i = 0; i < stored; ++i) {
      for (auto& x : p) x = u(rng);
      c.add(p);
    }
    std::size_t sink = 0;
    const auto start = Clock::now();
    for (const auto& q : queries) sink += c.probe(q, mode, kernels::Backend::Serial).neighbor_count;
    const double rate = double(queries.size()) / seconds_since(start);
    worst_rate = std::min(worst_rate, rate);
    char buf[80];
    std::snprintf(buf, sizeof buf, "%s%s %.0f probes/s", detail.empty() ? "" : ", ",
                  to_string(mode).c_str(), rate + double(sink) * 0.0);
    detail += buf;
  }
  return {worst_rate >= 500.0, detail};
}

// 10. Identical config and seed give identical artifacts.
Outcome determinism() {
  BenchmarkConfig bc;
  bc.dim = 32;
  bc.train_per_class = 300;
  bc.online_nd = 100;
  bc.online_ce = 100;
  const auto b = make_benchmark(bc, 77);
  PipelineConfig config;
  config.code_dim = 6;
  config.epochs = 10;
  config.k = 10;
  config.radius = 0.2;
  config.seed = 1234;
  OnlineOptions options;
  options.measure_latency = false;

  std::vector<std::string> decision_text;
  std::vector<fs::path> dirs;
  for (int run = 0; run < 2; ++run) {
    const auto dir = fs::temp_directory_path() / ("dsce_acceptance_state_" + std::to_string(run));
    fs::remove_all(dir);
    const auto state = offline_run(b.train, config);
    save_state(state, dir);
    dirs.push_back(dir);
    std::ostringstream out;
    write_decisions(online_run(load_state(dir), b.stream, b.predicted, {}, options), out);
    decision_text.push_back(out.str());
  }
  std::size_t files = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(dirs[0])) {
    ++files;
    if (io::read_file(entry.path()) != io::read_file(dirs[1] / entry.path().filename())) ++differing;
  }
  const bool same_decisions = decision_text[0] == decision_text[1];
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu/%zu state files differ; decisions.jsonl %s", differing, files,
                same_decisions ? "identical" : "differs");
  return {files > 0 && differing == 0 && same_decisions, buf};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks = {
      {"mcod-standard probe equals brute-force neighbor count", mcod_oracle_equivalence},
      {"clusterer invariants hold through 10000 insert/evict events", clusterer_invariants},
      {"synthetic end-to-end sweep reaches F >= 0.90 within 2 minutes", end_to_end_synthetic},
      {"precision/recall/F arithmetic", metric_arithmetic},
      {"exact Wilcoxon signed-rank p-values", wilcoxon_exact},
      {"autoencoder gradients match finite differences", gradient_check},
      {"Weibull MLE recovers shape and scale within 5%", weibull_recovery},
      {"OpenMax scores form a distribution, inlier limit keeps argmax", openmax_distribution},
      {">= 500 probes/s at dim 100 against 5000 stored points", probe_throughput},
      {"identical config and seed give byte-identical outputs", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    Outcome o;
    try {
      o = checks[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("[%s] %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, checks[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, checks.size());
  return failed == 0 ? 0 : 1;
}
