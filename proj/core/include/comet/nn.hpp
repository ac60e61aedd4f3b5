#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "comet/rng.hpp"

namespace comet {

struct DenseLayer {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<double> weights;  // row-major, out_dim x in_dim
  std::vector<double> biases;   // out_dim
  bool trainable = true;
};

// Feed-forward binary classifier: hidden dense layers with ReLU, each
// followed by inverted dropout during training, and a final dense layer
// into a sigmoid. The production shape is input -> 128 -> 128 -> 1.
struct MlpModel {
  std::vector<DenseLayer> layers;
  double dropout_rate = 0.2;
  std::string category;
  std::string embedding_name;
  std::optional<double> threshold;  // written by calibration

  int input_dim() const { return layers.empty() ? 0 : layers.front().in_dim; }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out_dim; }

  // Shape compatibility and finite parameters.
  void validate() const;
};

inline constexpr int kHiddenUnits = 128;

// Scaled-uniform fan-in init (+-sqrt(6/fan_in)) from a seeded generator.
MlpModel make_mlp(int input_dim, std::span<const int> hidden_dims, double dropout_rate,
                  std::uint64_t seed, std::string category = {},
                  std::string embedding_name = {});
MlpModel make_default_mlp(int input_dim, std::uint64_t seed, std::string category = {},
                          std::string embedding_name = {});

// Deterministic inference pass; dropout disabled. Output lies strictly in
// (0,1).
double forward(const MlpModel& model, std::span<const double> x);

// Training-mode pass: inverted dropout after each hidden activation, masks
// drawn from `rng` (keep probability 1 - dropout_rate, survivors scaled by
// 1/(1 - dropout_rate)).
double forward_train(const MlpModel& model, std::span<const double> x, Rng& rng);

// Mean binary cross-entropy; predictions clamped to [1e-12, 1-1e-12] before
// the logs. Throws on empty or mismatched input.
double bce_loss(std::span<const double> preds, std::span<const double> targets);

struct Gradients {
  struct LayerGrad {
    std::vector<double> weights;
    std::vector<double> biases;
  };
  std::vector<LayerGrad> layers;
};

// Analytic gradients of the mean BCE over the batch w.r.t. every trainable
// parameter; blocks of non-trainable layers stay zero. Dropout masks are
// drawn from `dropout_rng` when provided, otherwise the pass is clean.
Gradients backward(const MlpModel& model, std::span<const std::vector<double>> inputs,
                   std::span<const double> targets, Rng* dropout_rng = nullptr);

struct RmspropConfig {
  double learning_rate = 1e-3;
  double rho = 0.9;
  double epsilon = 1e-8;
};

struct RmspropState {
  std::vector<Gradients::LayerGrad> cache;  // running mean of squared grads
};

RmspropState make_rmsprop_state(const MlpModel& model);

// cache <- rho*cache + (1-rho)*grad^2; param <- param - lr*grad/(sqrt(cache)+eps).
// Layers marked non-trainable are skipped entirely, parameters and cache.
void rmsprop_step(MlpModel& model, const Gradients& grads, RmspropState& state,
                  const RmspropConfig& cfg);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 128;
  int epochs = 100;
  double dropout_rate = 0.2;
  double rmsprop_rho = 0.9;
  double rmsprop_epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainReport {
  std::vector<double> epoch_mean_loss;  // one entry per epoch
  std::uint64_t final_checksum = 0;     // checksum of the trained parameters
  std::uint64_t seed = 0;
  std::size_t steps_first_epoch = 0;  // optimizer steps taken in epoch 0
  std::size_t total_steps = 0;
};

struct TrainExample {
  std::vector<double> input;
  bool positive = false;
};

// Seeded-shuffle mini-batch training; fully deterministic under
// (seed, data, cfg). Requires at least one example of each class.
TrainReport train(MlpModel& model, std::span<const TrainExample> data, const TrainConfig& cfg);

// Retrains only the final dense layer; every other parameter block is left
// bit-identical.
TrainReport fine_tune(MlpModel& model, std::span<const TrainExample> data,
                      const TrainConfig& cfg);

// Stable fingerprint of architecture + parameters (the value stored in the
// model file and echoed in TrainReport).
std::uint64_t model_checksum(const MlpModel& model);

// Versioned text format; load(save(m)) is identity on parameters and
// metadata, guarded by a content checksum.
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace comet
