// dsce: command-line front end for the offline, online, sweep and evaluation
// phases, plus the synthetic benchmark generator and the OpenMax baseline.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>

#include "dsce/dataio.hpp"
#include "dsce/error.hpp"
#include "dsce/eval.hpp"
#include "dsce/openmax.hpp"
#include "dsce/pipeline.hpp"

namespace fs = std::filesystem;
using namespace dsce;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(LoadError::Kind::Io, path.string() + ": cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  return out;
}

PipelineConfig config_with_seed(const std::string& path, std::optional<std::uint64_t> seed) {
  PipelineConfig config = path.empty() ? PipelineConfig{} : load_config(path);
  if (seed) config.seed = *seed;
  return config;
}

struct SynthArgs {
  std::string out;
  BenchmarkConfig bench;
  std::uint64_t seed = 0;
};

void run_synth(const SynthArgs& a) {
  const auto b = make_benchmark(a.bench, a.seed);
  const fs::path dir = a.out;
  fs::create_directories(dir);
  save_matrix(b.train.matrix, dir / "train.dsce1");
  save_label_manifest({b.train.labels, b.train.class_names}, dir / "labels.json");
  save_matrix(b.stream, dir / "stream.dsce1");
  save_matrix(b.train_scores, dir / "train_scores.dsce1");
  save_matrix(b.stream_scores, dir / "stream_scores.dsce1");
  std::vector<std::uint64_t> ids(b.stream.rows());
  std::iota(ids.begin(), ids.end(), std::uint64_t{0});
  save_predictions({b.predicted, ids}, dir / "preds.json");
  save_ground_truth(ids, b.is_ce, dir / "truth.json");
  std::printf("wrote %zu training and %zu stream instances (dim %zu) to %s\n",
              b.train.matrix.rows(), b.stream.rows(), b.stream.dim(), dir.c_str());
}

struct OfflineArgs {
  std::string train, labels, config, out;
  std::optional<std::uint64_t> seed;
};

void run_offline(const OfflineArgs& a) {
  const auto train = load_labeled_set(a.train, a.labels);
  const auto config = config_with_seed(a.config, a.seed);
  const auto state = offline_run(train, config);
  save_state(state, a.out);
  for (std::size_t j = 0; j < state.clusterers.size(); ++j) {
    const auto& c = state.clusterers[j];
    std::printf("class %zu (%s): %zu points, %zu micro-clusters, %zu dispersed\n", j,
                state.class_names[j].c_str(), c.size(), c.micro_clusters().size(),
                c.dispersed().size());
  }
}

struct OnlineArgs {
  std::string state, stream, preds, out;
  bool no_latency = false;
  int threads = 1;
  std::optional<std::uint64_t> seed;
};

void run_online(const OnlineArgs& a) {
  const auto state = load_state(a.state);
  const auto stream = load_matrix(a.stream);
  const auto preds = load_predictions(a.preds);
  OnlineOptions options;
  options.measure_latency = !a.no_latency;
  options.threads = a.threads;
  const auto decisions = online_run(state, stream, preds.predicted, preds.ids, options);
  auto out = open_out(a.out);
  write_decisions(decisions, out);
  std::size_t ce = 0, errors = 0;
  for (const auto& d : decisions) {
    if (d.error) ++errors;
    else if (d.verdict == Verdict::CE) ++ce;
  }
  std::printf("%zu decisions: %zu CE, %zu ND, %zu errors\n", decisions.size(), ce,
              decisions.size() - ce - errors, errors);
}

struct SweepArgs {
  std::string grid, train, labels, stream, preds, truth, config, out;
  bool no_latency = false;
  std::optional<std::uint64_t> seed;
};

void run_sweep(const SweepArgs& a) {
  const auto grid = parse_sweep_grid(read_text(a.grid));
  const auto train = load_labeled_set(a.train, a.labels);
  const auto stream = load_matrix(a.stream);
  const auto preds = load_predictions(a.preds);
  const auto truth = load_ground_truth(a.truth);
  const auto config = config_with_seed(a.config, a.seed);
  OnlineOptions options;
  options.measure_latency = !a.no_latency;
  const auto rows = sweep(grid, config, {&train, &stream, preds.predicted, preds.ids, &truth}, options);
  if (a.out.empty()) {
    write_sweep_csv(rows, std::cout);
  } else {
    auto out = open_out(a.out);
    write_sweep_csv(rows, out);
  }
  const SweepRow* best = nullptr;
  for (const auto& r : rows) {
    if (r.error) std::fprintf(stderr, "k=%u R=%g failed: %s\n", r.k, r.radius, r.error->c_str());
    else if (!best || r.metrics.f_measure > best->metrics.f_measure) best = &r;
  }
  if (best) {
    std::fprintf(stderr, "best cell: k=%u R=%g F=%.3f\n", best->k, best->radius,
                 best->metrics.f_measure);
  }
}

struct EvalArgs {
  std::string decisions, truth, out;
  std::optional<std::uint64_t> seed;
};

void run_eval(const EvalArgs& a) {
  std::ifstream in(a.decisions);
  if (!in) throw LoadError(LoadError::Kind::Io, a.decisions + ": cannot open");
  const auto decisions = read_decisions(in, a.decisions);
  const auto truth = load_ground_truth(a.truth);
  const auto c = confusion(decisions, truth);
  const auto report = metrics_report(c, prf(c), latency_stats(decisions));
  if (a.out.empty()) {
    std::cout << report << '\n';
  } else {
    open_out(a.out) << report << '\n';
  }
}

struct OpenMaxFitArgs {
  std::string train, labels, out;
  std::size_t tail = 9;
  std::optional<std::uint64_t> seed;
};

void run_openmax_fit(const OpenMaxFitArgs& a) {
  const auto train = load_labeled_set(a.train, a.labels);
  const auto models = openmax_fit(train, a.tail);
  save_openmax_models(models, a.out);
  for (const auto& m : models) {
    std::printf("class %u: kappa %.4g lambda %.4g tau %.4g\n", m.class_id, m.weibull.shape,
                m.weibull.scale, m.weibull.shift);
  }
}

struct OpenMaxScoreArgs {
  std::string models, stream, out, truth, ids_from;
  std::size_t alpha = 2;
  std::optional<double> threshold;
  std::optional<std::uint64_t> seed;
};

void run_openmax_score(const OpenMaxScoreArgs& a) {
  const auto models = load_openmax_models(a.models);
  const auto stream = load_matrix(a.stream);
  std::vector<std::uint64_t> ids;
  if (!a.ids_from.empty()) ids = load_predictions(a.ids_from).ids;
  if (ids.empty()) {
    ids.resize(stream.rows());
    std::iota(ids.begin(), ids.end(), std::uint64_t{0});
  }
  if (ids.size() != stream.rows()) throw InvalidArgument("id count does not match stream size");

  auto out = open_out(a.out);
  std::vector<Decision> as_decisions;
  for (std::size_t i = 0; i < stream.rows(); ++i) {
    const std::vector<double> v(stream.row(i).begin(), stream.row(i).end());
    const auto scores = openmax_recalibrate(v, models, a.alpha);
    const auto decision = openmax_decide(scores, a.threshold);
    nlohmann::json line = {{"id", ids[i]},
                           {"unknown", scores.unknown},
                           {"known", scores.known},
                           {"decision", decision.unknown ? nlohmann::json("unknown")
                                                         : nlohmann::json(decision.class_id)}};
    out << line.dump() << '\n';
    Decision d;
    d.id = ids[i];
    d.predicted = decision.class_id;
    d.verdict = decision.unknown ? Verdict::CE : Verdict::ND;
    as_decisions.push_back(d);
  }
  if (!a.truth.empty()) {
    const auto c = confusion(as_decisions, load_ground_truth(a.truth));
    std::cout << metrics_report(c, prf(c), std::nullopt) << '\n';
  }
}

struct WilcoxonArgs {
  std::string pairs;
  std::optional<std::uint64_t> seed;
};

// Input: [[a1, b1], [a2, b2], ...]
void run_wilcoxon(const WilcoxonArgs& a) {
  const auto j = nlohmann::json::parse(read_text(a.pairs));
  const auto pairs = j.get<std::vector<std::pair<double, double>>>();
  std::printf("n=%zu p=%.6f\n", pairs.size(), wilcoxon_signed_rank(pairs));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept evolution detection over DNN activations"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate the synthetic two-class benchmark");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--dim", synth.bench.dim, "Activation dimension");
  s->add_option("--train-per-class", synth.bench.train_per_class, "Training instances per class");
  s->add_option("--online-nd", synth.bench.online_nd, "Known-class stream instances");
  s->add_option("--online-ce", synth.bench.online_ce, "Novel-class stream instances");
  s->add_option("--seed", synth.seed, "Random seed");

  OfflineArgs offline;
  auto* off = app.add_subcommand("offline", "Train the reducer and build per-class clusterers");
  off->add_option("--train", offline.train, "Training activations (DSCE1)")->required();
  off->add_option("--labels", offline.labels, "Label manifest JSON")->required();
  off->add_option("--config", offline.config, "Pipeline config JSON");
  off->add_option("--out", offline.out, "State directory")->required();
  off->add_option("--seed", offline.seed, "Overrides the config seed");

  OnlineArgs online;
  auto* on = app.add_subcommand("online", "Classify a stream as ND or CE");
  on->add_option("--state", online.state, "State directory")->required();
  on->add_option("--stream", online.stream, "Stream activations (DSCE1)")->required();
  on->add_option("--preds", online.preds, "Predicted classes JSON")->required();
  on->add_option("--out", online.out, "Decisions JSONL")->required();
  on->add_flag("--no-latency", online.no_latency, "Write latency 0 for reproducible output");
  on->add_option("--threads", online.threads, "Instances processed concurrently");
  on->add_option("--seed", online.seed, "Accepted for uniformity; the online phase is deterministic");

  SweepArgs sw;
  auto* swc = app.add_subcommand("sweep", "Evaluate a (k, R) grid");
  swc->add_option("--grid", sw.grid, "Grid JSON {\"k\": [...], \"R\": [...]}")->required();
  swc->add_option("--train", sw.train, "Training activations (DSCE1)")->required();
  swc->add_option("--labels", sw.labels, "Label manifest JSON")->required();
  swc->add_option("--stream", sw.stream, "Stream activations (DSCE1)")->required();
  swc->add_option("--preds", sw.preds, "Predicted classes JSON")->required();
  swc->add_option("--truth", sw.truth, "Ground truth JSON")->required();
  swc->add_option("--config", sw.config, "Pipeline config JSON");
  swc->add_option("--out", sw.out, "CSV output (default stdout)");
  swc->add_flag("--no-latency", sw.no_latency, "Skip latency measurement");
  swc->add_option("--seed", sw.seed, "Overrides the config seed");

  EvalArgs ev;
  auto* evc = app.add_subcommand("eval", "Score decisions against ground truth");
  evc->add_option("--decisions", ev.decisions, "Decisions JSONL")->required();
  evc->add_option("--truth", ev.truth, "Ground truth JSON")->required();
  evc->add_option("--out", ev.out, "Report JSON (default stdout)");
  evc->add_option("--seed", ev.seed, "Accepted for uniformity");

  auto* om = app.add_subcommand("openmax", "OpenMax baseline");
  om->require_subcommand(1);
  OpenMaxFitArgs omf;
  auto* fit = om->add_subcommand("fit", "Fit per-class models from training activations");
  fit->add_option("--train", omf.train, "Training activations (DSCE1)")->required();
  fit->add_option("--labels", omf.labels, "Label manifest JSON")->required();
  fit->add_option("--out", omf.out, "Models JSON")->required();
  fit->add_option("--tail", omf.tail, "Tail size");
  fit->add_option("--seed", omf.seed, "Accepted for uniformity");
  OpenMaxScoreArgs oms;
  auto* score = om->add_subcommand("score", "Recalibrate and decide for each stream instance");
  score->add_option("--models", oms.models, "Models JSON")->required();
  score->add_option("--stream", oms.stream, "Activation vectors (DSCE1)")->required();
  score->add_option("--out", oms.out, "Scores JSONL")->required();
  score->add_option("--alpha", oms.alpha, "Number of top classes recalibrated");
  score->add_option("--threshold", oms.threshold, "Minimum known-class probability");
  score->add_option("--ids-from", oms.ids_from, "Predictions JSON supplying instance ids");
  score->add_option("--truth", oms.truth, "Ground truth JSON; prints metrics when given");
  score->add_option("--seed", oms.seed, "Accepted for uniformity");

  WilcoxonArgs wx;
  auto* wxc = app.add_subcommand("wilcoxon", "Exact signed-rank test over paired scores");
  wxc->add_option("--pairs", wx.pairs, "JSON array of [a, b] pairs")->required();
  wxc->add_option("--seed", wx.seed, "Accepted for uniformity");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s) run_synth(synth);
    else if (*off) run_offline(offline);
    else if (*on) run_online(online);
    else if (*swc) run_sweep(sw);
    else if (*evc) run_eval(ev);
    else if (*fit) run_openmax_fit(omf);
    else if (*score) run_openmax_score(oms);
    else if (*wxc) run_wilcoxon(wx);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dsce: %s\n", e.what());
    return 1;
  }
  return 0;
}
