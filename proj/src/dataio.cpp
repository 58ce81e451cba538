#include "dsce/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>

#include <json.hpp>

#include "dsce/binary_io.hpp"
#include "dsce/error.hpp"

namespace dsce {

namespace {

constexpr std::string_view kMatrixMagic = "DSCE1";
constexpr std::string_view kNormalizerMagic = "DSNM1";

void check_layout(std::size_t dim, const std::vector<LayerSpan>& layers) {
  std::uint64_t expected_offset = 0;
  for (const auto& span : layers) {
    if (span.offset != expected_offset) {
      throw InvalidArgument("layer spans must be contiguous and ordered (layer " +
                            std::to_string(span.layer_id) + " at offset " +
                            std::to_string(span.offset) + ")");
    }
    expected_offset += span.length;
  }
  if (expected_offset != dim) {
    throw InvalidArgument("layer span lengths sum to " + std::to_string(expected_offset) +
                          ", matrix dim is " + std::to_string(dim));
  }
}

}  // namespace

ActivationMatrix::ActivationMatrix(std::size_t n_instances, std::size_t dim,
                                   std::vector<float> data, std::vector<LayerSpan> layers)
    : n_instances_(n_instances), dim_(dim), data_(std::move(data)), layers_(std::move(layers)) {
  if (data_.size() != n_instances_ * dim_) {
    throw InvalidArgument("activation data has " + std::to_string(data_.size()) +
                          " values, expected " + std::to_string(n_instances_ * dim_));
  }
  check_layout(dim_, layers_);
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw InvalidArgument("non-finite activation at instance " + std::to_string(i / dim_) +
                            ", column " + std::to_string(i % dim_));
    }
  }
}

ActivationMatrix::ActivationMatrix(std::size_t n_instances, std::size_t dim,
                                   std::vector<float> data)
    : ActivationMatrix(n_instances, dim, std::move(data),
                       dim == 0 ? std::vector<LayerSpan>{}
                                : std::vector<LayerSpan>{
                                      {0, 0, static_cast<std::uint32_t>(dim)}}) {}

void LabeledSet::validate() const {
  if (labels.size() != matrix.rows()) {
    throw InvalidArgument("label count " + std::to_string(labels.size()) +
                          " does not match instance count " + std::to_string(matrix.rows()));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= class_names.size()) {
      throw InvalidArgument("label " + std::to_string(labels[i]) + " of instance " +
                            std::to_string(i) + " has no class name");
    }
  }
}

// --- DSCE1 ---------------------------------------------------------------------

std::vector<std::uint8_t> encode_matrix(const ActivationMatrix& m) {
  io::ByteWriter w;
  w.magic(kMatrixMagic);
  w.put(static_cast<std::uint32_t>(m.rows()));
  w.put(static_cast<std::uint32_t>(m.dim()));
  w.put(static_cast<std::uint16_t>(m.layers().size()));
  for (const auto& span : m.layers()) {
    w.put(span.layer_id);
    w.put(span.offset);
    w.put(span.length);
  }
  w.put_array(m.data());
  return std::move(w).take();
}

ActivationMatrix decode_matrix(std::span<const std::uint8_t> bytes, const std::string& label) {
  io::ByteReader r(bytes, label);
  r.expect_magic(kMatrixMagic);
  const auto rows = r.get<std::uint32_t>();
  const auto dim = r.get<std::uint32_t>();
  const auto n_spans = r.get<std::uint16_t>();
  std::vector<LayerSpan> spans(n_spans);
  for (auto& span : spans) {
    span.layer_id = r.get<std::uint32_t>();
    span.offset = r.get<std::uint32_t>();
    span.length = r.get<std::uint32_t>();
  }
  const std::uint64_t count = std::uint64_t{rows} * dim;
  if (r.remaining() < count * sizeof(float)) {
    throw LoadError(LoadError::Kind::Truncated,
                    label + ": truncated payload (" + std::to_string(r.remaining()) +
                        " bytes for " + std::to_string(count) + " floats)");
  }
  std::vector<float> data(count);
  r.get_array(std::span<float>(data));
  r.expect_end();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw LoadError(LoadError::Kind::NonFinite,
                      label + ": non-finite value at instance " + std::to_string(i / dim) +
                          ", column " + std::to_string(i % dim));
    }
  }
  try {
    return ActivationMatrix(rows, dim, std::move(data), std::move(spans));
  } catch (const InvalidArgument& e) {
    throw LoadError(LoadError::Kind::Malformed, label + ": " + e.what());
  }
}

ActivationMatrix load_matrix(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return decode_matrix(bytes, path.string());
}

void save_matrix(const ActivationMatrix& m, const std::filesystem::path& path) {
  io::write_file(path, encode_matrix(m));
}

// --- manifests -----------------------------------------------------------------

LabelManifest load_label_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(LoadError::Kind::Io, path.string() + ": cannot open");
  try {
    const auto j = nlohmann::json::parse(in);
    LabelManifest m;
    m.labels = j.at("labels").get<std::vector<std::uint32_t>>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(LoadError::Kind::Malformed, path.string() + ": " + e.what());
  }
}

void save_label_manifest(const LabelManifest& manifest, const std::filesystem::path& path) {
  const nlohmann::json j = {{"labels", manifest.labels}, {"class_names", manifest.class_names}};
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << j.dump() << '\n';
}

LabeledSet load_labeled_set(const std::filesystem::path& matrix_path,
                            const std::filesystem::path& manifest_path) {
  auto manifest = load_label_manifest(manifest_path);
  LabeledSet set{load_matrix(matrix_path), std::move(manifest.labels),
                 std::move(manifest.class_names)};
  set.validate();
  return set;
}

// --- layer selection -------------------------------------------------------------

FlattenedInstance flatten_select(std::span<const RawLayer> raw_layers,
                                 std::span<const std::uint32_t> selected) {
  FlattenedInstance out;
  for (const auto id : selected) {
    const auto it = std::find_if(raw_layers.begin(), raw_layers.end(),
                                 [id](const RawLayer& l) { return l.layer_id == id; });
    if (it == raw_layers.end()) {
      throw InvalidArgument("selected layer " + std::to_string(id) + " is not present");
    }
    const std::size_t expected = std::accumulate(it->shape.begin(), it->shape.end(),
                                                 std::size_t{1}, std::multiplies<>());
    if (!it->shape.empty() && expected != it->values.size()) {
      throw InvalidArgument("layer " + std::to_string(id) + " shape does not match its values");
    }
    out.layers.push_back({id, static_cast<std::uint32_t>(out.values.size()),
                          static_cast<std::uint32_t>(it->values.size())});
    out.values.insert(out.values.end(), it->values.begin(), it->values.end());
  }
  return out;
}

ActivationMatrix select_layers(const ActivationMatrix& m,
                               std::span<const std::uint32_t> selected) {
  if (selected.empty()) return m;
  std::vector<LayerSpan> source;
  for (const auto id : selected) {
    const auto it = std::find_if(m.layers().begin(), m.layers().end(),
                                 [id](const LayerSpan& s) { return s.layer_id == id; });
    if (it == m.layers().end()) {
      throw InvalidArgument("selected layer " + std::to_string(id) + " is not present");
    }
    source.push_back(*it);
  }
  std::vector<LayerSpan> spans;
  std::uint32_t dim = 0;
  for (const auto& s : source) {
    spans.push_back({s.layer_id, dim, s.length});
    dim += s.length;
  }
  std::vector<float> data;
  data.reserve(std::size_t{dim} * m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto row = m.row(i);
    for (const auto& s : source) {
      data.insert(data.end(), row.begin() + s.offset, row.begin() + s.offset + s.length);
    }
  }
  return ActivationMatrix(m.rows(), dim, std::move(data), std::move(spans));
}

// --- normalization ------------------------------------------------------------------

Normalizer::Normalizer(std::vector<double> min, std::vector<double> max)
    : min_(std::move(min)), max_(std::move(max)) {
  if (min_.size() != max_.size()) throw InvalidArgument("normalizer bound lengths differ");
  for (std::size_t d = 0; d < min_.size(); ++d) {
    if (!(min_[d] <= max_[d])) {
      throw InvalidArgument("normalizer min exceeds max at dimension " + std::to_string(d));
    }
  }
}

Normalizer Normalizer::fit(std::span<const double> data, std::size_t dim) {
  if (dim == 0 || data.empty() || data.size() % dim != 0) {
    throw InvalidArgument("normalizer needs a non-empty matrix");
  }
  std::vector<double> lo(data.begin(), data.begin() + dim);
  std::vector<double> hi = lo;
  for (std::size_t i = dim; i < data.size(); i += dim) {
    for (std::size_t d = 0; d < dim; ++d) {
      lo[d] = std::min(lo[d], data[i + d]);
      hi[d] = std::max(hi[d], data[i + d]);
    }
  }
  return Normalizer(std::move(lo), std::move(hi));
}

Normalizer Normalizer::fit(const ActivationMatrix& m) {
  const std::vector<double> data(m.data().begin(), m.data().end());
  return fit(data, m.dim());
}

void Normalizer::apply_in_place(std::span<double> v) const {
  if (v.size() != min_.size()) {
    throw DimensionError("normalizer expects dimension " + std::to_string(min_.size()) +
                         ", got " + std::to_string(v.size()));
  }
  for (std::size_t d = 0; d < v.size(); ++d) {
    const double range = max_[d] - min_[d];
    if (range == 0.0) {
      v[d] = 0.5;
    } else {
      v[d] = std::clamp((v[d] - min_[d]) / range, 0.0, 1.0);
    }
  }
}

std::vector<double> Normalizer::apply(std::span<const double> v) const {
  std::vector<double> out(v.begin(), v.end());
  apply_in_place(out);
  return out;
}

std::vector<std::uint8_t> encode_normalizer(const Normalizer& n) {
  io::ByteWriter w;
  w.magic(kNormalizerMagic);
  w.put(static_cast<std::uint32_t>(n.dim()));
  w.put_array(std::span<const double>(n.min()));
  w.put_array(std::span<const double>(n.max()));
  return std::move(w).take();
}

Normalizer decode_normalizer(std::span<const std::uint8_t> bytes, const std::string& label) {
  io::ByteReader r(bytes, label);
  r.expect_magic(kNormalizerMagic);
  const auto dim = r.get<std::uint32_t>();
  if (r.remaining() < std::size_t{dim} * 2 * sizeof(double)) {
    throw LoadError(LoadError::Kind::Truncated, label + ": truncated normalizer bounds");
  }
  std::vector<double> lo(dim), hi(dim);
  r.get_array(std::span<double>(lo));
  r.get_array(std::span<double>(hi));
  r.expect_end();
  try {
    return Normalizer(std::move(lo), std::move(hi));
  } catch (const InvalidArgument& e) {
    throw LoadError(LoadError::Kind::Malformed, label + ": " + e.what());
  }
}

// --- synthetic data ---------------------------------------------------------------------

LabeledSet synth_generate(std::span<const SynthClass> classes, std::uint64_t seed) {
  if (classes.empty()) throw InvalidArgument("synthetic spec has no classes");
  const std::size_t dim = classes.front().mean.size();
  if (dim == 0) throw InvalidArgument("synthetic class mean is empty");
  std::size_t total = 0;
  for (const auto& c : classes) {
    if (c.mean.size() != dim) throw InvalidArgument("synthetic class dims differ");
    if (!(c.stddev > 0.0)) throw InvalidArgument("synthetic stddev must be positive");
    total += c.count;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<float> data;
  data.reserve(total * dim);
  LabeledSet set;
  for (std::uint32_t j = 0; j < classes.size(); ++j) {
    const auto& c = classes[j];
    set.class_names.push_back(c.name.empty() ? "class" + std::to_string(j) : c.name);
    for (std::size_t n = 0; n < c.count; ++n) {
      for (std::size_t d = 0; d < dim; ++d) {
        data.push_back(static_cast<float>(c.mean[d] + c.stddev * normal(rng)));
      }
      set.labels.push_back(j);
    }
  }
  set.matrix = ActivationMatrix(total, dim, std::move(data));
  return set;
}

namespace {

// Random orthonormal basis (dim x k, column-major columns) via Gram-Schmidt.
std::vector<std::vector<double>> random_basis(std::size_t dim, std::size_t k,
                                              std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> basis;
  while (basis.size() < k) {
    std::vector<double> v(dim);
    for (auto& x : v) x = normal(rng);
    for (const auto& b : basis) {
      const double dot = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
      for (std::size_t d = 0; d < dim; ++d) v[d] -= dot * b[d];
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm < 1e-6) continue;
    for (auto& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  return basis;
}

}  // namespace

Benchmark make_benchmark(const BenchmarkConfig& config, std::uint64_t seed) {
  if (config.latent_dim < 2 || config.latent_dim > config.dim) {
    throw InvalidArgument("benchmark latent_dim must be in [2, dim]");
  }
  std::mt19937_64 rng(seed);
  const auto basis = random_basis(config.dim, config.latent_dim, rng);

  // Known classes sit apart along the first latent axis; the novel class sits
  // between them, displaced along the second.
  auto embed = [&](double a, double b) {
    std::vector<double> mean(config.dim, 0.0);
    for (std::size_t d = 0; d < config.dim; ++d) {
      mean[d] = a * basis[0][d] + b * basis[1][d];
    }
    return mean;
  };
  const std::vector<SynthClass> known = {
      {"known0", embed(0.0, 0.0), config.noise_stddev, config.train_per_class},
      {"known1", embed(config.class_separation, 0.0), config.noise_stddev,
       config.train_per_class},
  };
  const SynthClass novel{"novel", embed(0.5 * config.class_separation, config.novel_displacement),
                         config.noise_stddev, config.online_ce};

  Benchmark bench;
  bench.train = synth_generate(known, rng());

  // Online ND instances are split evenly across the known classes.
  std::vector<SynthClass> online = known;
  online[0].count = config.online_nd - config.online_nd / 2;
  online[1].count = config.online_nd / 2;
  online.push_back(novel);
  const auto mixed = synth_generate(online, rng());

  std::vector<std::size_t> order(mixed.matrix.rows());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t dim = config.dim;
  // Stand-in for a closed-set classifier: score_j = -|x - mean_j|^2, and the
  // prediction is the best scoring known class.
  auto scores = [&](std::span<const float> row, std::vector<float>& out) {
    std::uint32_t best_j = 0;
    double best = 0.0;
    for (std::uint32_t j = 0; j < known.size(); ++j) {
      double s = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = row[d] - known[j].mean[d];
        s += diff * diff;
      }
      out.push_back(static_cast<float>(-s));
      if (j == 0 || s < best) {
        best = s;
        best_j = j;
      }
    }
    return best_j;
  };

  std::vector<float> train_scores;
  for (std::size_t i = 0; i < bench.train.matrix.rows(); ++i) {
    scores(bench.train.matrix.row(i), train_scores);
  }
  bench.train_scores = ActivationMatrix(bench.train.matrix.rows(), known.size(), std::move(train_scores));

  std::vector<float> data, stream_scores;
  data.reserve(order.size() * dim);
  for (const auto i : order) {
    const auto row = mixed.matrix.row(i);
    data.insert(data.end(), row.begin(), row.end());
    bench.is_ce.push_back(mixed.labels[i] == 2);
    bench.predicted.push_back(scores(row, stream_scores));
  }
  bench.stream_scores = ActivationMatrix(order.size(), known.size(), std::move(stream_scores));
  bench.stream = ActivationMatrix(order.size(), dim, std::move(data));
  return bench;
}

}  // namespace dsce
