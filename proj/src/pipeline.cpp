#include "dsce/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "dsce/binary_io.hpp"
#include "dsce/error.hpp"

namespace dsce {

using nlohmann::json;

// --- config -----------------------------------------------------------------------

PipelineConfig parse_config(const std::string& json_text) {
  PipelineConfig c;
  try {
    const auto j = json::parse(json_text);
    if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key == "layers") c.layers = value.get<std::vector<std::uint32_t>>();
      else if (key == "code_dim") c.code_dim = value.get<std::size_t>();
      else if (key == "epochs") c.epochs = value.get<std::uint32_t>();
      else if (key == "batch_size") c.batch_size = value.get<std::uint32_t>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "k") c.k = value.get<std::uint32_t>();
      else if (key == "R") c.radius = value.get<double>();
      else if (key == "mode") c.mode = parse_probe_mode(value.get<std::string>());
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw InvalidArgument("unknown config key \"" + key + "\"");
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("invalid config: ") + e.what());
  }
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(LoadError::Kind::Io, path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const InvalidArgument& e) {
    throw LoadError(LoadError::Kind::Malformed, path.string() + ": " + e.what());
  }
}

namespace {

json config_json(const PipelineConfig& c) {
  return {{"layers", c.layers},         {"code_dim", c.code_dim},
          {"epochs", c.epochs},         {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate}, {"k", c.k},
          {"R", c.radius},              {"mode", to_string(c.mode)},
          {"seed", c.seed}};
}

}  // namespace

std::string config_to_json(const PipelineConfig& config) { return config_json(config).dump(2); }

// --- offline ---------------------------------------------------------------------------

ReducedTraining reduce_training(const LabeledSet& train, const PipelineConfig& config) {
  train.validate();
  if (train.matrix.rows() == 0) throw InvalidArgument("training set is empty");
  std::vector<std::size_t> counts(train.num_classes(), 0);
  for (const auto l : train.labels) ++counts[l];
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] == 0) {
      throw InvalidArgument("class " + std::to_string(j) + " (" + train.class_names[j] +
                            ") has no training instances");
    }
  }

  const auto selected = select_layers(train.matrix, config.layers);
  auto trained = train_autoencoder(selected, config.code_dim, config.train_config());
  auto codes = trained.model.reduce_all(selected);
  auto normalizer = Normalizer::fit(codes, config.code_dim);
  for (std::size_t i = 0; i < selected.rows(); ++i) {
    normalizer.apply_in_place(std::span<double>(codes.data() + i * config.code_dim, config.code_dim));
  }
  return {std::move(trained.model), std::move(trained.report), std::move(normalizer),
          std::move(codes), train.labels, train.class_names};
}

std::vector<Clusterer> build_clusterers(const ReducedTraining& reduced, std::uint32_t k,
                                        double radius) {
  const std::size_t num_classes = reduced.class_names.size();
  const std::size_t dim = reduced.autoencoder.code_dim();
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto l : reduced.labels) ++counts[l];

  std::vector<Clusterer> clusterers;
  for (std::size_t j = 0; j < num_classes; ++j) clusterers.emplace_back(k, radius, counts[j] + 1);

  // Classes are independent; each one is still filled in dataset order.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t jj = 0; jj < static_cast<std::ptrdiff_t>(num_classes); ++jj) {
    const auto j = static_cast<std::uint32_t>(jj);
    for (std::size_t i = 0; i < reduced.labels.size(); ++i) {
      if (reduced.labels[i] != j) continue;
      clusterers[j].add(std::span<const double>(reduced.codes.data() + i * dim, dim));
    }
  }
  return clusterers;
}

StateBundle offline_run(const LabeledSet& train, const PipelineConfig& config) {
  auto reduced = reduce_training(train, config);
  auto clusterers = build_clusterers(reduced, config.k, config.radius);
  return {std::move(reduced.autoencoder), std::move(reduced.normalizer), std::move(clusterers),
          std::move(reduced.class_names), config};
}

// --- online ------------------------------------------------------------------------------

Decision decide(const StateBundle& state, std::uint64_t id, std::span<const float> activation,
                std::uint32_t predicted, bool measure_latency) {
  Decision d;
  d.id = id;
  d.predicted = predicted;
  if (predicted >= state.clusterers.size()) {
    d.error = "unknown predicted class " + std::to_string(predicted);
    return d;
  }
  if (activation.size() != state.autoencoder.input_dim()) {
    d.error = "activation dimension " + std::to_string(activation.size()) + ", expected " +
              std::to_string(state.autoencoder.input_dim());
    return d;
  }
  const auto start = std::chrono::steady_clock::now();
  const auto code = state.autoencoder.reduce(activation);
  std::vector<double> point(code.begin(), code.end());
  state.normalizer.apply_in_place(point);
  const auto probe = state.clusterers[predicted].probe(point, state.config.mode);
  const auto stop = std::chrono::steady_clock::now();

  d.verdict = probe.verdict;
  d.nearest_center_distance = probe.nearest_center_distance;
  d.neighbor_count = probe.neighbor_count;
  if (measure_latency) {
    d.latency_us = std::chrono::duration<double, std::micro>(stop - start).count();
  }
  return d;
}

std::vector<Decision> online_run(const StateBundle& state, const ActivationMatrix& stream,
                                 std::span<const std::uint32_t> predicted,
                                 std::span<const std::uint64_t> ids,
                                 const OnlineOptions& options) {
  if (predicted.size() != stream.rows()) {
    throw InvalidArgument("prediction count " + std::to_string(predicted.size()) +
                          " does not match stream size " + std::to_string(stream.rows()));
  }
  if (!ids.empty() && ids.size() != stream.rows()) {
    throw InvalidArgument("id count does not match stream size");
  }
  auto id_of = [&](std::size_t i) { return ids.empty() ? std::uint64_t{i} : ids[i]; };

  std::vector<Decision> decisions(stream.rows());
  std::optional<ActivationMatrix> selected;
  std::string selection_error;
  try {
    selected = select_layers(stream, state.config.layers);
  } catch (const InvalidArgument& e) {
    selection_error = e.what();
  }
  if (!selected) {
    for (std::size_t i = 0; i < stream.rows(); ++i) {
      decisions[i].id = id_of(i);
      decisions[i].predicted = predicted[i];
      decisions[i].error = selection_error;
    }
    return decisions;
  }

  const auto n = static_cast<std::ptrdiff_t>(stream.rows());
#pragma omp parallel for schedule(dynamic, 16) num_threads(std::max(1, options.threads)) \
    if (options.threads > 1)
  for (std::ptrdiff_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    decisions[i] = decide(state, id_of(i), selected->row(i), predicted[i], options.measure_latency);
  }
  return decisions;
}

// --- state bundle ------------------------------------------------------------------------------

void save_state(const StateBundle& state, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json meta = config_json(state.config);
  meta["class_names"] = state.class_names;
  {
    std::ofstream out(dir / "config.json");
    if (!out) throw Error((dir / "config.json").string() + ": cannot open for writing");
    out << meta.dump(2) << '\n';
  }
  io::write_file(dir / "autoencoder.dsae", encode_autoencoder(state.autoencoder));
  io::write_file(dir / "normalizer.dsnm", encode_normalizer(state.normalizer));
  for (std::size_t j = 0; j < state.clusterers.size(); ++j) {
    io::write_file(dir / ("clusterer_" + std::to_string(j) + ".dsmc"),
                   encode_clusterer(state.clusterers[j]));
  }
}

StateBundle load_state(const std::filesystem::path& dir) {
  const auto config_path = dir / "config.json";
  std::ifstream in(config_path);
  if (!in) throw LoadError(LoadError::Kind::Io, config_path.string() + ": cannot open");
  json meta;
  std::vector<std::string> class_names;
  PipelineConfig config;
  try {
    meta = json::parse(in);
    class_names = meta.at("class_names").get<std::vector<std::string>>();
    meta.erase("class_names");
    config = parse_config(meta.dump());
  } catch (const std::exception& e) {
    throw LoadError(LoadError::Kind::Malformed, config_path.string() + ": " + e.what());
  }

  auto load = [](const std::filesystem::path& p, auto decode) {
    const auto bytes = io::read_file(p);
    return decode(bytes, p.string());
  };
  auto ae = load(dir / "autoencoder.dsae", [](auto b, auto l) { return decode_autoencoder(b, l); });
  auto nrm = load(dir / "normalizer.dsnm", [](auto b, auto l) { return decode_normalizer(b, l); });
  std::vector<Clusterer> clusterers;
  for (std::size_t j = 0; j < class_names.size(); ++j) {
    clusterers.push_back(load(dir / ("clusterer_" + std::to_string(j) + ".dsmc"),
                              [](auto b, auto l) { return decode_clusterer(b, l); }));
  }
  if (nrm.dim() != ae.code_dim()) {
    throw LoadError(LoadError::Kind::Malformed,
                    dir.string() + ": normalizer dimension does not match the autoencoder code");
  }
  return {std::move(ae), std::move(nrm), std::move(clusterers), std::move(class_names), config};
}

// --- predictions and decisions ------------------------------------------------------------------

Predictions load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(LoadError::Kind::Io, path.string() + ": cannot open");
  try {
    const auto j = json::parse(in);
    Predictions p;
    p.predicted = j.at("pred_class").get<std::vector<std::uint32_t>>();
    if (j.contains("ids")) p.ids = j.at("ids").get<std::vector<std::uint64_t>>();
    return p;
  } catch (const json::exception& e) {
    throw LoadError(LoadError::Kind::Malformed, path.string() + ": " + e.what());
  }
}

void save_predictions(const Predictions& preds, const std::filesystem::path& path) {
  json j = {{"pred_class", preds.predicted}};
  if (!preds.ids.empty()) j["ids"] = preds.ids;
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << j.dump() << '\n';
}

std::string decision_to_json(const Decision& d) {
  json j;
  j["id"] = d.id;
  j["pred_class"] = d.predicted;
  if (d.error) {
    j["error"] = *d.error;
    return j.dump();
  }
  j["verdict"] = to_string(d.verdict);
  j["nearest_center_dist"] =
      d.nearest_center_distance ? json(*d.nearest_center_distance) : json(nullptr);
  j["neighbor_count"] = d.neighbor_count;
  j["latency_us"] = d.latency_us;
  return j.dump();
}

void write_decisions(std::span<const Decision> decisions, std::ostream& out) {
  for (const auto& d : decisions) out << decision_to_json(d) << '\n';
}

std::vector<Decision> read_decisions(std::istream& in, const std::string& label) {
  std::vector<Decision> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      Decision d;
      d.id = j.at("id").get<std::uint64_t>();
      d.predicted = j.value("pred_class", std::uint32_t{0});
      if (j.contains("error")) {
        d.error = j.at("error").get<std::string>();
      } else {
        const auto v = j.at("verdict").get<std::string>();
        if (v != "ND" && v != "CE") throw InvalidArgument("verdict must be ND or CE");
        d.verdict = v == "ND" ? Verdict::ND : Verdict::CE;
        if (j.contains("nearest_center_dist") && !j["nearest_center_dist"].is_null()) {
          d.nearest_center_distance = j["nearest_center_dist"].get<double>();
        }
        d.neighbor_count = j.value("neighbor_count", std::size_t{0});
        d.latency_us = j.value("latency_us", 0.0);
      }
      out.push_back(std::move(d));
    } catch (const std::exception& e) {
      throw LoadError(LoadError::Kind::Malformed,
                      label + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace dsce
