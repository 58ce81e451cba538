#pragma once

// Activation datasets: the DSCE1 matrix format, JSON label manifests, layer
// selection, min-max normalization of reduced vectors and synthetic data.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dsce {

// Column span of an activation matrix contributed by one network layer.
struct LayerSpan {
  std::uint32_t layer_id = 0;
  std::uint32_t offset = 0;
  std::uint32_t length = 0;

  friend bool operator==(const LayerSpan&, const LayerSpan&) = default;
};

// Row-major instance x feature matrix of flattened activations.
class ActivationMatrix {
 public:
  ActivationMatrix() = default;
  // Validates every invariant (sizes, span layout, finiteness).
  ActivationMatrix(std::size_t n_instances, std::size_t dim, std::vector<float> data,
                   std::vector<LayerSpan> layers);
  // Convenience: a single span (layer id 0) covering all columns.
  ActivationMatrix(std::size_t n_instances, std::size_t dim, std::vector<float> data);

  std::size_t rows() const noexcept { return n_instances_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<LayerSpan>& layers() const noexcept { return layers_; }

  friend bool operator==(const ActivationMatrix&, const ActivationMatrix&) = default;

 private:
  std::size_t n_instances_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
  std::vector<LayerSpan> layers_;
};

struct LabeledSet {
  ActivationMatrix matrix;
  std::vector<std::uint32_t> labels;
  std::vector<std::string> class_names;

  // Throws InvalidArgument on a label/instance count mismatch or out-of-range label.
  void validate() const;
  std::size_t num_classes() const noexcept { return class_names.size(); }
};

// --- DSCE1 codec ------------------------------------------------------------

std::vector<std::uint8_t> encode_matrix(const ActivationMatrix& m);
ActivationMatrix decode_matrix(std::span<const std::uint8_t> bytes,
                               const std::string& label = "<memory>");
ActivationMatrix load_matrix(const std::filesystem::path& path);
void save_matrix(const ActivationMatrix& m, const std::filesystem::path& path);

// {"labels": [...], "class_names": [...]}
struct LabelManifest {
  std::vector<std::uint32_t> labels;
  std::vector<std::string> class_names;
};
LabelManifest load_label_manifest(const std::filesystem::path& path);
void save_label_manifest(const LabelManifest& manifest, const std::filesystem::path& path);

LabeledSet load_labeled_set(const std::filesystem::path& matrix_path,
                            const std::filesystem::path& manifest_path);

// --- layer selection ----------------------------------------------------------

struct RawLayer {
  std::uint32_t layer_id = 0;
  std::vector<std::size_t> shape;
  std::vector<float> values;  // native (row-major) serialization order
};

struct FlattenedInstance {
  std::vector<float> values;
  std::vector<LayerSpan> layers;
};

// Concatenates the selected layers in the order given. Throws InvalidArgument
// naming the first missing layer id.
FlattenedInstance flatten_select(std::span<const RawLayer> raw_layers,
                                 std::span<const std::uint32_t> selected);

// Column-slices an already flattened matrix down to the given layers, in the
// given order. An empty selection keeps the matrix unchanged.
ActivationMatrix select_layers(const ActivationMatrix& m,
                               std::span<const std::uint32_t> selected);

// --- normalization -------------------------------------------------------------

class Normalizer {
 public:
  Normalizer() = default;
  Normalizer(std::vector<double> min, std::vector<double> max);

  // Fits per-dimension bounds on row-major `data` of width `dim`.
  static Normalizer fit(std::span<const double> data, std::size_t dim);
  static Normalizer fit(const ActivationMatrix& m);

  std::vector<double> apply(std::span<const double> v) const;
  void apply_in_place(std::span<double> v) const;

  std::size_t dim() const noexcept { return min_.size(); }
  const std::vector<double>& min() const noexcept { return min_; }
  const std::vector<double>& max() const noexcept { return max_; }

  friend bool operator==(const Normalizer&, const Normalizer&) = default;

 private:
  std::vector<double> min_;
  std::vector<double> max_;
};

std::vector<std::uint8_t> encode_normalizer(const Normalizer& n);
Normalizer decode_normalizer(std::span<const std::uint8_t> bytes,
                             const std::string& label = "<memory>");

// --- synthetic data --------------------------------------------------------------

struct SynthClass {
  std::string name;
  std::vector<double> mean;
  double stddev = 1.0;
  std::size_t count = 0;
};

// Isotropic Gaussian classes, emitted class by class. Deterministic per seed.
LabeledSet synth_generate(std::span<const SynthClass> classes, std::uint64_t seed);

// Two known classes plus one displaced novel class, with a mixed online stream
// whose "DNN prediction" routes every instance to a known class. The stand-in
// classifier scores each class by negative squared distance to its mean.
struct BenchmarkConfig {
  std::size_t dim = 64;
  std::size_t train_per_class = 1000;
  std::size_t online_nd = 250;
  std::size_t online_ce = 250;
  std::size_t latent_dim = 3;
  double class_separation = 6.0;
  double novel_displacement = 6.0;
  double noise_stddev = 0.35;
};

struct Benchmark {
  LabeledSet train;                     // known classes only
  ActivationMatrix stream;              // shuffled ND + CE instances
  std::vector<std::uint32_t> predicted; // per stream instance
  std::vector<bool> is_ce;              // ground truth per stream instance
  ActivationMatrix train_scores;        // per-class classifier scores, train order
  ActivationMatrix stream_scores;       // per-class classifier scores, stream order
};

Benchmark make_benchmark(const BenchmarkConfig& config, std::uint64_t seed);

}  // namespace dsce
