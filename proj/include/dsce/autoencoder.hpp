#pragma once

// Undercomplete autoencoder used to reduce flattened activations:
//   code           r  = relu(W1 x + b1)
//   reconstruction x' = W2 r + b2
//   loss              = mean_d (x'_d - x_d)^2
// Weights are stored in f32; every reduction accumulates in f64.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dsce/dataio.hpp"
#include "dsce/error.hpp"
#include "dsce/kernels.hpp"

namespace dsce {

struct TrainConfig {
  std::uint32_t epochs = 50;
  std::uint32_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Row-major: w1 is code_dim x input_dim, w2 is input_dim x code_dim.
template <typename T>
struct AutoencoderParams {
  std::size_t input_dim = 0;
  std::size_t code_dim = 0;
  std::vector<T> w1, b1, w2, b2;

  void check_shapes() const;
  friend bool operator==(const AutoencoderParams&, const AutoencoderParams&) = default;
};

template <typename T>
struct Gradients {
  std::vector<T> w1, b1, w2, b2;
  double loss = 0.0;  // mean batch loss at the current parameters
};

// Analytic gradients of the mean batch loss. `batch` is rows x input_dim,
// row-major. The relu subgradient at exactly 0 is 0.
template <typename T>
Gradients<T> compute_gradients(const AutoencoderParams<T>& params, std::span<const T> batch,
                               std::size_t rows, kernels::Backend backend = kernels::Backend::Parallel);

struct ForwardResult {
  std::vector<float> code;
  std::vector<float> reconstruction;
  double loss = 0.0;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  double final_loss = 0.0;
  TrainConfig config;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::uint32_t last_good_epoch, const std::string& what)
      : Error(what), last_good_epoch_(last_good_epoch) {}
  // Number of epochs that completed with a finite loss.
  std::uint32_t last_good_epoch() const noexcept { return last_good_epoch_; }

 private:
  std::uint32_t last_good_epoch_;
};

class Autoencoder {
 public:
  // Glorot-uniform weights in +-sqrt(6 / (input_dim + code_dim)), zero biases.
  static Autoencoder init(std::size_t input_dim, std::size_t code_dim, std::uint64_t seed);

  // Wraps explicit parameters. `require_undercomplete` is relaxed only by
  // tests that need an identity configuration.
  static Autoencoder from_params(AutoencoderParams<float> params, TrainConfig config = {},
                                 bool require_undercomplete = true);

  ForwardResult forward(std::span<const float> x) const;

  // Encoder output only.
  std::vector<float> reduce(std::span<const float> x) const;

  // Reduces every row of `m`; returns rows x code_dim in f64.
  std::vector<double> reduce_all(const ActivationMatrix& m,
                                 kernels::Backend backend = kernels::Backend::Parallel) const;

  std::size_t input_dim() const noexcept { return params_.input_dim; }
  std::size_t code_dim() const noexcept { return params_.code_dim; }
  const AutoencoderParams<float>& params() const noexcept { return params_; }
  const TrainConfig& config() const noexcept { return config_; }

  friend bool operator==(const Autoencoder&, const Autoencoder&) = default;

 private:
  friend struct TrainResult train_autoencoder(const ActivationMatrix&, std::size_t,
                                              const TrainConfig&, kernels::Backend);

  Autoencoder(AutoencoderParams<float> params, TrainConfig config)
      : params_(std::move(params)), config_(config) {}

  AutoencoderParams<float> params_;
  TrainConfig config_;
};

struct TrainResult {
  Autoencoder model;
  TrainReport report;
};

// Mini-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8) over a per-epoch
// shuffle drawn from `config.seed`. Throws TrainingDiverged on a non-finite loss.
TrainResult train_autoencoder(const ActivationMatrix& data, std::size_t code_dim,
                              const TrainConfig& config, kernels::Backend backend = kernels::Backend::Parallel);

// DSAE1: magic, u32 input_dim, u32 code_dim, u32 epochs, u32 batch_size,
// f64 learning_rate, u64 seed, then W1, b1, W2, b2 as f32.
std::vector<std::uint8_t> encode_autoencoder(const Autoencoder& ae);
Autoencoder decode_autoencoder(std::span<const std::uint8_t> bytes,
                               const std::string& label = "<memory>");

}  // namespace dsce
