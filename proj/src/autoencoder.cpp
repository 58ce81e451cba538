#include "dsce/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dsce/binary_io.hpp"
#include "dsce/kernels.hpp"

namespace dsce {

using kernels::Backend;

namespace {

constexpr std::string_view kMagic = "DSAE1";

template <typename T>
struct Ops {
  Backend backend;

  void affine(std::span<const T> w, std::span<const T> b, std::span<const T> x, std::size_t rows,
              std::size_t in, std::size_t out, bool relu, std::span<T> y,
              std::span<T> pre) const {
    if (backend == Backend::Serial) {
      kernels::serial::affine<T>(w, b, x, rows, in, out, relu, y, pre);
    } else {
      kernels::parallel::affine<T>(w, b, x, rows, in, out, relu, y, pre);
    }
  }
  void weight_gradient(std::span<const T> delta, std::span<const T> x, std::size_t rows,
                       std::size_t in, std::size_t out, std::span<T> gw,
                       std::span<T> gb) const {
    if (backend == Backend::Serial) {
      kernels::serial::weight_gradient<T>(delta, x, rows, in, out, gw, gb);
    } else {
      kernels::parallel::weight_gradient<T>(delta, x, rows, in, out, gw, gb);
    }
  }
  void backprop_input(std::span<const T> delta, std::span<const T> w, std::size_t rows,
                      std::size_t in, std::size_t out, std::span<T> back) const {
    if (backend == Backend::Serial) {
      kernels::serial::backprop_input<T>(delta, w, rows, in, out, back);
    } else {
      kernels::parallel::backprop_input<T>(delta, w, rows, in, out, back);
    }
  }
};

}  // namespace

template <typename T>
void AutoencoderParams<T>::check_shapes() const {
  if (input_dim == 0 || code_dim == 0) throw InvalidArgument("autoencoder dims must be positive");
  if (w1.size() != code_dim * input_dim || b1.size() != code_dim ||
      w2.size() != input_dim * code_dim || b2.size() != input_dim) {
    throw InvalidArgument("autoencoder parameter shapes do not match dims");
  }
}

template <typename T>
Gradients<T> compute_gradients(const AutoencoderParams<T>& p, std::span<const T> batch,
                               std::size_t rows, Backend backend) {
  p.check_shapes();
  if (rows == 0) throw InvalidArgument("gradient batch is empty");
  if (batch.size() != rows * p.input_dim) {
    throw DimensionError("gradient batch has " + std::to_string(batch.size()) +
                         " values, expected " + std::to_string(rows * p.input_dim));
  }
  const std::size_t in = p.input_dim;
  const std::size_t code = p.code_dim;
  const Ops<T> ops{backend};

  std::vector<T> pre(rows * code), hidden(rows * code), recon(rows * in);
  ops.affine(p.w1, p.b1, batch, rows, in, code, true, hidden, pre);
  ops.affine(p.w2, p.b2, hidden, rows, code, in, false, recon, {});

  Gradients<T> g;
  const double scale = 2.0 / (double(rows) * double(in));
  std::vector<T> delta_out(rows * in);
  double sq = 0.0;
  for (std::size_t i = 0; i < rows * in; ++i) {
    const double diff = double(recon[i]) - double(batch[i]);
    sq += diff * diff;
    delta_out[i] = static_cast<T>(scale * diff);
  }
  g.loss = sq / (double(rows) * double(in));

  g.w2.resize(in * code);
  g.b2.resize(in);
  ops.weight_gradient(delta_out, hidden, rows, code, in, g.w2, g.b2);

  std::vector<T> delta_hidden(rows * code);
  ops.backprop_input(delta_out, p.w2, rows, code, in, delta_hidden);
  for (std::size_t i = 0; i < rows * code; ++i) {
    if (!(pre[i] > T(0))) delta_hidden[i] = T(0);
  }

  g.w1.resize(code * in);
  g.b1.resize(code);
  ops.weight_gradient(delta_hidden, batch, rows, in, code, g.w1, g.b1);
  return g;
}

template struct AutoencoderParams<float>;
template struct AutoencoderParams<double>;
template Gradients<float> compute_gradients(const AutoencoderParams<float>&,
                                            std::span<const float>, std::size_t, Backend);
template Gradients<double> compute_gradients(const AutoencoderParams<double>&,
                                             std::span<const double>, std::size_t, Backend);

// --- Autoencoder -----------------------------------------------------------------

Autoencoder Autoencoder::init(std::size_t input_dim, std::size_t code_dim, std::uint64_t seed) {
  if (code_dim == 0 || code_dim >= input_dim) {
    throw InvalidArgument("autoencoder must be undercomplete: code_dim " +
                          std::to_string(code_dim) + ", input_dim " + std::to_string(input_dim));
  }
  AutoencoderParams<float> p;
  p.input_dim = input_dim;
  p.code_dim = code_dim;
  const double limit = std::sqrt(6.0 / double(input_dim + code_dim));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-limit, limit);
  p.w1.resize(code_dim * input_dim);
  p.w2.resize(input_dim * code_dim);
  for (auto& w : p.w1) w = static_cast<float>(uniform(rng));
  for (auto& w : p.w2) w = static_cast<float>(uniform(rng));
  p.b1.assign(code_dim, 0.0f);
  p.b2.assign(input_dim, 0.0f);
  TrainConfig config;
  config.epochs = 0;
  config.seed = seed;
  return Autoencoder(std::move(p), config);
}

Autoencoder Autoencoder::from_params(AutoencoderParams<float> params, TrainConfig config,
                                     bool require_undercomplete) {
  params.check_shapes();
  if (require_undercomplete && params.code_dim >= params.input_dim) {
    throw InvalidArgument("autoencoder must be undercomplete");
  }
  for (const auto* v : {&params.w1, &params.b1, &params.w2, &params.b2}) {
    if (!std::all_of(v->begin(), v->end(), [](float x) { return std::isfinite(x); })) {
      throw InvalidArgument("autoencoder weights must be finite");
    }
  }
  return Autoencoder(std::move(params), config);
}

ForwardResult Autoencoder::forward(std::span<const float> x) const {
  if (x.size() != input_dim()) {
    throw DimensionError("autoencoder expects input dimension " + std::to_string(input_dim()) +
                         ", got " + std::to_string(x.size()));
  }
  ForwardResult out;
  out.code.resize(code_dim());
  out.reconstruction.resize(input_dim());
  kernels::serial::affine<float>(params_.w1, params_.b1, x, 1, input_dim(), code_dim(), true,
                                 out.code, {});
  kernels::serial::affine<float>(params_.w2, params_.b2, out.code, 1, code_dim(), input_dim(),
                                 false, out.reconstruction, {});
  double sq = 0.0;
  for (std::size_t d = 0; d < input_dim(); ++d) {
    const double diff = double(out.reconstruction[d]) - double(x[d]);
    sq += diff * diff;
  }
  out.loss = sq / double(input_dim());
  return out;
}

std::vector<float> Autoencoder::reduce(std::span<const float> x) const {
  if (x.size() != input_dim()) {
    throw DimensionError("autoencoder expects input dimension " + std::to_string(input_dim()) +
                         ", got " + std::to_string(x.size()));
  }
  std::vector<float> code(code_dim());
  kernels::serial::affine<float>(params_.w1, params_.b1, x, 1, input_dim(), code_dim(), true,
                                 code, {});
  return code;
}

std::vector<double> Autoencoder::reduce_all(const ActivationMatrix& m, Backend backend) const {
  if (m.dim() != input_dim()) {
    throw DimensionError("autoencoder expects input dimension " + std::to_string(input_dim()) +
                         ", matrix has " + std::to_string(m.dim()));
  }
  std::vector<float> codes(m.rows() * code_dim());
  Ops<float>{backend}.affine(params_.w1, params_.b1, m.data(), m.rows(), input_dim(), code_dim(),
                             true, codes, {});
  return {codes.begin(), codes.end()};
}

// --- training ------------------------------------------------------------------------

namespace {

struct AdamState {
  std::vector<double> m, v;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<float>& param, const std::vector<float>& grad, double lr, double bc1,
            double bc2) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double g = grad[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      param[i] = static_cast<float>(double(param[i]) - lr * m_hat / (std::sqrt(v_hat) + eps));
    }
  }
};

}  // namespace

TrainResult train_autoencoder(const ActivationMatrix& data, std::size_t code_dim,
                              const TrainConfig& config, Backend backend) {
  if (data.rows() == 0) throw InvalidArgument("autoencoder training data is empty");
  if (config.batch_size == 0 || !(config.learning_rate > 0.0)) {
    throw InvalidArgument("batch_size and learning_rate must be positive");
  }
  auto ae = Autoencoder::init(data.dim(), code_dim, config.seed);
  ae.config_ = config;
  auto& p = ae.params_;

  AdamState s_w1(p.w1.size()), s_b1(p.b1.size()), s_w2(p.w2.size()), s_b2(p.b2.size());
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  TrainReport report;
  report.config = config;
  std::vector<float> batch;
  std::uint64_t t = 0;
  const std::size_t in = data.dim();

  for (std::uint32_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sq = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t rows = std::min<std::size_t>(config.batch_size, order.size() - start);
      batch.resize(rows * in);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto row = data.row(order[start + r]);
        std::copy(row.begin(), row.end(), batch.begin() + r * in);
      }
      const auto g = compute_gradients<float>(p, batch, rows, backend);
      if (!std::isfinite(g.loss)) {
        throw TrainingDiverged(epoch, "autoencoder training diverged in epoch " +
                                          std::to_string(epoch + 1) + "; last good epoch " +
                                          std::to_string(epoch));
      }
      epoch_sq += g.loss * double(rows);
      ++t;
      const double bc1 = 1.0 - std::pow(0.9, double(t));
      const double bc2 = 1.0 - std::pow(0.999, double(t));
      s_w1.step(p.w1, g.w1, config.learning_rate, bc1, bc2);
      s_b1.step(p.b1, g.b1, config.learning_rate, bc1, bc2);
      s_w2.step(p.w2, g.w2, config.learning_rate, bc1, bc2);
      s_b2.step(p.b2, g.b2, config.learning_rate, bc1, bc2);
    }
    const double epoch_loss = epoch_sq / double(data.rows());
    if (!std::isfinite(epoch_loss)) {
      throw TrainingDiverged(epoch, "autoencoder training diverged in epoch " +
                                        std::to_string(epoch + 1));
    }
    report.epoch_loss.push_back(epoch_loss);
  }
  for (const auto* v : {&p.w1, &p.b1, &p.w2, &p.b2}) {
    if (!std::all_of(v->begin(), v->end(), [](float x) { return std::isfinite(x); })) {
      throw TrainingDiverged(config.epochs, "autoencoder weights became non-finite");
    }
  }
  report.final_loss = report.epoch_loss.empty() ? 0.0 : report.epoch_loss.back();
  return {std::move(ae), std::move(report)};
}

// --- DSAE1 ------------------------------------------------------------------------------

std::vector<std::uint8_t> encode_autoencoder(const Autoencoder& ae) {
  io::ByteWriter w;
  w.magic(kMagic);
  w.put(static_cast<std::uint32_t>(ae.input_dim()));
  w.put(static_cast<std::uint32_t>(ae.code_dim()));
  w.put(ae.config().epochs);
  w.put(ae.config().batch_size);
  w.put(ae.config().learning_rate);
  w.put(ae.config().seed);
  const auto& p = ae.params();
  for (const auto* v : {&p.w1, &p.b1, &p.w2, &p.b2}) w.put_array(std::span<const float>(*v));
  return std::move(w).take();
}

Autoencoder decode_autoencoder(std::span<const std::uint8_t> bytes, const std::string& label) {
  io::ByteReader r(bytes, label);
  r.expect_magic(kMagic);
  AutoencoderParams<float> p;
  p.input_dim = r.get<std::uint32_t>();
  p.code_dim = r.get<std::uint32_t>();
  TrainConfig config;
  config.epochs = r.get<std::uint32_t>();
  config.batch_size = r.get<std::uint32_t>();
  config.learning_rate = r.get<double>();
  config.seed = r.get<std::uint64_t>();
  const std::uint64_t n = std::uint64_t{p.input_dim} * p.code_dim;
  if (r.remaining() < (2 * n + p.input_dim + p.code_dim) * sizeof(float)) {
    throw LoadError(LoadError::Kind::Truncated, label + ": truncated autoencoder weights");
  }
  p.w1.resize(n);
  p.b1.resize(p.code_dim);
  p.w2.resize(n);
  p.b2.resize(p.input_dim);
  for (auto* v : {&p.w1, &p.b1, &p.w2, &p.b2}) r.get_array(std::span<float>(*v));
  r.expect_end();
  try {
    return Autoencoder::from_params(std::move(p), config);
  } catch (const InvalidArgument& e) {
    throw LoadError(LoadError::Kind::Malformed, label + ": " + e.what());
  }
}

}  // namespace dsce
