#pragma once

// Small fixed-layer-set neural network engine: Conv1D (no padding) and fully
// connected layers with optional ReLU, softmax cross-entropy, backprop, SGD
// with momentum, per-conv-layer freezing, byte budgets and the PVA1 file
// format.
//
// Parameters are stored as 32-bit floats. Forward and backward passes
// accumulate in double.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace pva::nn {

enum class LayerKind : std::uint8_t { Conv1D = 0, FullyConnected = 1 };
enum class Activation : std::uint8_t { None = 0, ReLU = 1 };

struct LayerSpec {
  LayerKind kind = LayerKind::FullyConnected;
  Activation activation = Activation::None;
  // Conv1D: in_channels, out_channels, kernel, stride.
  // FullyConnected: in_features, out_features, 0, 0.
  std::uint32_t in = 1;
  std::uint32_t out = 1;
  std::uint32_t kernel = 0;
  std::uint32_t stride = 0;

  static LayerSpec conv(std::uint32_t in_channels, std::uint32_t out_channels,
                        std::uint32_t kernel, std::uint32_t stride,
                        Activation act = Activation::ReLU);
  static LayerSpec fc(std::uint32_t in_features, std::uint32_t out_features,
                      Activation act = Activation::None);

  std::size_t weight_count() const;
  std::size_t bias_count() const { return out; }
  std::size_t param_count() const { return weight_count() + bias_count(); }
  // Flattened output size for a flattened input of `input_size` floats.
  std::size_t output_size(std::size_t input_size) const;
  void validate() const;

  bool operator==(const LayerSpec&) const = default;
};

struct Layer {
  LayerSpec spec;
  std::vector<float> weights;  // Conv: [out][in][k]; FC: [out][in]
  std::vector<float> biases;

  bool operator==(const Layer&) const = default;
};

struct Model {
  std::vector<Layer> layers;

  std::size_t param_count() const;
  // Shapes consistent with the stored parameter vectors; FC input matches the
  // previous layer's flattened output for `input_size`.
  void validate(std::size_t input_size) const;

  bool operator==(const Model&) const = default;
};

// Uniform +-sqrt(6/(fan_in+fan_out)), biases zero. Deterministic in seed.
Model init_model(std::span<const LayerSpec> specs, std::uint64_t seed);
Model zero_model(std::span<const LayerSpec> specs);

// Five booleans, one per conv layer in order: true = fine-tune, false = freeze.
// Index i of the 5-bit integer form is conv layer i+1 (layer 1 least
// significant). Conv layers past the fifth and all FC layers always train.
struct FreezeMask {
  std::array<bool, 5> fine_tune{true, true, true, true, true};

  static FreezeMask all_fine_tune() { return {}; }
  static FreezeMask all_frozen() { return {{false, false, false, false, false}}; }
  static FreezeMask from_index(unsigned index);
  unsigned to_index() const;
  bool conv_trainable(std::size_t conv_ordinal) const {
    return conv_ordinal >= fine_tune.size() || fine_tune[conv_ordinal];
  }

  bool operator==(const FreezeMask&) const = default;
};

// Per-layer trainability of `model` under `mask`.
std::vector<bool> trainable_layers(const Model& model, const FreezeMask& mask);

// ---- single-layer primitives (used by the sequential net and by custom
// topologies such as the policy network's residual blocks) ----

// pre = W*in + b, post = act(pre).
void layer_forward(const Layer& layer, std::span<const double> in, std::vector<double>& pre,
                   std::vector<double>& post);

struct LayerGrad {
  std::vector<double> weights;
  std::vector<double> biases;
};

// Given dL/d(post), accumulates dL/dW, dL/db into `grad` (when non-null) and
// writes dL/d(in) into `d_in` (when non-null).
void layer_backward(const Layer& layer, std::span<const double> in, std::span<const double> pre,
                    std::span<const double> d_post, LayerGrad* grad, std::vector<double>* d_in);

// ---- sequential network ----

struct ForwardCache {
  std::vector<double> input;
  std::vector<std::vector<double>> pre;   // per layer
  std::vector<std::vector<double>> post;  // per layer; post.back() = logits
};

std::vector<double> to_double(std::span<const float> x);

// Returns the final layer's output. Throws DimensionError naming the layer on
// shape mismatch.
std::span<const double> forward(const Model& model, std::span<const float> input,
                                ForwardCache& cache);
std::vector<double> forward(const Model& model, std::span<const float> input);

struct Gradients {
  std::vector<LayerGrad> layers;

  static Gradients zeros_like(const Model& model);
  void scale(double factor);
  void add(const Gradients& other);
};

// Numerically stable softmax; throws NumericError on non-finite logits.
std::vector<double> softmax_probs(std::span<const double> logits);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> d_logits;
};
LossGrad cross_entropy(std::span<const double> logits, std::size_t label);

// Backprop of dL/d(output) through the cached pass, accumulating into `grads`.
// `extra_d_post`, when non-empty, holds one vector per layer (empty = none)
// of additional dL/d(post) injected at that layer (e.g. MMD terms on FC
// activations). Frozen conv layers receive no gradient.
void accumulate_backward(const Model& model, const ForwardCache& cache,
                         std::span<const double> d_output, const FreezeMask& mask,
                         Gradients& grads,
                         std::span<const std::vector<double>> extra_d_post = {});

// Cross-entropy gradients for one labeled example.
Gradients backward(const Model& model, const ForwardCache& cache, std::size_t label,
                   const FreezeMask& mask);

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 64;
  double momentum = 0.9;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

struct OptimizerState {
  std::vector<LayerGrad> velocity;
  static OptimizerState zeros_like(const Model& model);
};

// v <- momentum*v + g; theta <- theta - lr*v, skipping frozen layers.
void sgd_update(Model& model, const Gradients& grads, OptimizerState& state,
                const TrainConfig& cfg, const FreezeMask& mask = FreezeMask::all_fine_tune());

struct Example {
  std::span<const float> input;
  std::size_t label;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean per-example training loss
};

// Mini-batch SGD on mean cross-entropy; epoch e shuffles with seed + e.
TrainReport train_supervised(Model& model, std::span<const Example> data, const TrainConfig& cfg,
                             const FreezeMask& mask = FreezeMask::all_fine_tune());

// Shared mini-batch driver. `batch_gradient` receives the batch indices (into
// the shuffled dataset), must accumulate the batch's mean gradient into the
// zeroed `grads`, and returns the batch's summed loss terms.
using BatchGradientFn =
    std::function<double(std::span<const std::size_t> batch, std::size_t step, Gradients& grads)>;
TrainReport run_minibatch_sgd(Model& model, std::size_t dataset_size, const TrainConfig& cfg,
                              const FreezeMask& mask, const BatchGradientFn& batch_gradient);

// Deterministic per-epoch permutation of [0, n).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch);

struct MemoryBudget {
  std::size_t param_bytes = 0;
  std::size_t scratch_bytes = 0;  // ping-pong peak: max(|in| + |out|) * 4
};
MemoryBudget memory_budget(const Model& model, std::size_t input_size);
MemoryBudget memory_budget(std::span<const LayerSpec> specs, std::size_t input_size);

// PVA1 model files.
std::vector<std::uint8_t> serialize(const Model& model);
Model deserialize(std::span<const std::uint8_t> bytes);
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace pva::nn
