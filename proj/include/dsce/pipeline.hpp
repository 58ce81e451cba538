#pragma once

// Offline phase: select layers, train the reducer, reduce and normalize every
// training instance, and fill one clusterer per class.
// Online phase: reduce, normalize and probe the clusterer of the predicted
// class for each unseen instance, emitting an ND/CE decision.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsce/autoencoder.hpp"
#include "dsce/dataio.hpp"
#include "dsce/mcod.hpp"

namespace dsce {

struct PipelineConfig {
  std::vector<std::uint32_t> layers;  // empty: use every layer
  std::size_t code_dim = 100;
  std::uint32_t epochs = 50;
  std::uint32_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint32_t k = 80;
  double radius = 0.04;
  ProbeMode mode = ProbeMode::McStrict;
  std::uint64_t seed = 0;

  TrainConfig train_config() const { return {epochs, batch_size, learning_rate, seed}; }
  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

// Keys: layers, code_dim, epochs, batch_size, learning_rate, k, R, mode, seed.
// Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const PipelineConfig& config);

struct StateBundle {
  Autoencoder autoencoder;
  Normalizer normalizer;
  std::vector<Clusterer> clusterers;  // indexed by class id
  std::vector<std::string> class_names;
  PipelineConfig config;

  friend bool operator==(const StateBundle&, const StateBundle&) = default;
};

// The reducer half of the offline phase, reusable across clusterer settings.
struct ReducedTraining {
  Autoencoder autoencoder;
  TrainReport report;
  Normalizer normalizer;
  std::vector<double> codes;  // normalized, rows x code_dim
  std::vector<std::uint32_t> labels;
  std::vector<std::string> class_names;
};

ReducedTraining reduce_training(const LabeledSet& train, const PipelineConfig& config);

// One clusterer per class with window = class count + 1, filled in dataset order.
std::vector<Clusterer> build_clusterers(const ReducedTraining& reduced, std::uint32_t k,
                                        double radius);

StateBundle offline_run(const LabeledSet& train, const PipelineConfig& config);

struct Decision {
  std::uint64_t id = 0;
  std::uint32_t predicted = 0;
  Verdict verdict = Verdict::CE;
  std::optional<double> nearest_center_distance;
  std::size_t neighbor_count = 0;
  double latency_us = 0.0;
  std::optional<std::string> error;  // set for instances that could not be processed

  friend bool operator==(const Decision&, const Decision&) = default;
};

struct OnlineOptions {
  bool measure_latency = true;  // false writes latency 0 for reproducible output
  int threads = 1;              // >1 processes instances concurrently
};

// Decision for one already layer-selected activation vector.
Decision decide(const StateBundle& state, std::uint64_t id, std::span<const float> activation,
                std::uint32_t predicted, bool measure_latency = true);

// Order-preserving. Per-instance failures become error records. `ids` may be
// empty, in which case row indices are used.
std::vector<Decision> online_run(const StateBundle& state, const ActivationMatrix& stream,
                                 std::span<const std::uint32_t> predicted,
                                 std::span<const std::uint64_t> ids = {},
                                 const OnlineOptions& options = {});

// Directory layout: config.json, autoencoder.dsae, normalizer.dsnm,
// clusterer_<j>.dsmc for each class j.
void save_state(const StateBundle& state, const std::filesystem::path& dir);
StateBundle load_state(const std::filesystem::path& dir);

// {"pred_class": [...], "ids": [...]}; ids are optional.
struct Predictions {
  std::vector<std::uint32_t> predicted;
  std::vector<std::uint64_t> ids;
};
Predictions load_predictions(const std::filesystem::path& path);
void save_predictions(const Predictions& preds, const std::filesystem::path& path);

// One JSON object per line:
// {"id","pred_class","verdict","nearest_center_dist","neighbor_count","latency_us"}
std::string decision_to_json(const Decision& d);
void write_decisions(std::span<const Decision> decisions, std::ostream& out);
std::vector<Decision> read_decisions(std::istream& in, const std::string& label = "<stream>");

}  // namespace dsce
