#pragma once

// Policy network that routes an IEGM segment to one of the 32 candidate
// models: a 5-way Bernoulli over conv freeze/fine-tune bits, trained with
// REINFORCE on a +-beta correctness reward.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "pva/adapt.hpp"
#include "pva/rhythm.hpp"
#include "pva/tinynn.hpp"

namespace pva {

inline constexpr std::size_t kActionBits = 5;
using Probs5 = std::array<double, kActionBits>;
using ActionVector = std::array<bool, kActionBits>;  // true = fine-tuned conv layer

// Layer layout of PolicyNet::model (12 layers):
//   0       stem Conv(1->8, k7, s2) + ReLU
//   1..8    four residual blocks; block b is layers 1+2b (Conv k3 + ReLU) and
//           2+2b (Conv k3, linear). Block output = ReLU(conv_b + skip), the
//           skip being the block input centre-cropped by 2 samples per side.
//           Blocks 2 and 4 are followed by stride-2 decimation.
//   9..11   FC 200->32 (ReLU), 32->16 (ReLU), 16->5 (linear), then sigmoid.
std::vector<nn::LayerSpec> build_policy_arch();

struct PolicyNet {
  nn::Model model;

  static PolicyNet make(std::uint64_t seed);
  static PolicyNet zeros();
  void validate() const;
};

struct PolicyCache {
  nn::ForwardCache layers;        // pre/post per layer (post of a block's second conv = pre)
  std::array<std::vector<double>, 4> block_in;
  std::array<std::vector<double>, 4> block_sum;  // conv_b + skip, before ReLU
  std::array<std::vector<double>, 4> block_out;  // after ReLU, before decimation
  std::vector<double> fc_in;
  Probs5 logits{};
  Probs5 x{};
};

Probs5 policy_forward(const PolicyNet& pnet, std::span<const float> segment);
Probs5 policy_forward(const PolicyNet& pnet, std::span<const float> segment, PolicyCache& cache);

// Accumulates parameter gradients of a scalar loss given dLoss/dx.
void policy_backward(const PolicyNet& pnet, const PolicyCache& cache, const Probs5& d_x,
                     nn::Gradients& grads);

double action_prob(const Probs5& x, const ActionVector& a);
double log_action_prob(const Probs5& x, const ActionVector& a);  // x clamped to [1e-6, 1-1e-6]
// d log pi / d x_i = (2a_i - 1) / [x_i a_i + (1 - x_i)(1 - a_i)], clamped x.
Probs5 dlogpi_dx(const Probs5& x, const ActionVector& a);

ActionVector sample_action(const Probs5& x, std::mt19937_64& rng);
unsigned action_to_index(const ActionVector& a);
ActionVector index_to_action(unsigned index);

// a_i = 1 iff x_i >= 0.5.
ActionVector threshold_action(const Probs5& x);
unsigned select_candidate(const PolicyNet& pnet, std::span<const float> segment);

struct PolicyTrainConfig {
  double beta = 1.0;
  nn::TrainConfig train{1e-4, 4, 0.9, 50, 0};

  void validate() const;
};

struct PolicySample {
  std::span<const float> segment;
  Label label;
};

// Whether candidate `candidate` classifies sample `index` correctly.
using RewardOracle = std::function<bool(std::size_t index, unsigned candidate)>;

// correct[i][c] for every sample and candidate.
struct CorrectnessTable {
  std::vector<std::array<bool, kPoolSize>> correct;

  static CorrectnessTable from_pool(const CandidatePool& pool, std::span<const PolicySample> samples);
  double accuracy(unsigned candidate) const;
  unsigned best_candidate() const;  // highest accuracy, lowest index on ties
  RewardOracle oracle() const;
};

struct ReinforceStats {
  double mean_reward = 0.0;
};

// One REINFORCE update over `batch` (indices into `samples`): sample an
// action per segment, reward +-beta by correctness, and descend on
// -mean(R * log pi).
ReinforceStats reinforce_step(PolicyNet& pnet, std::span<const PolicySample> samples,
                              std::span<const std::size_t> batch, const RewardOracle& reward,
                              const PolicyTrainConfig& cfg, nn::OptimizerState& state,
                              std::mt19937_64& rng);
// Convenience form that runs the selected pool candidate directly.
ReinforceStats reinforce_step(PolicyNet& pnet, std::span<const PolicySample> samples,
                              std::span<const std::size_t> batch, const CandidatePool& pool,
                              const PolicyTrainConfig& cfg, nn::OptimizerState& state,
                              std::mt19937_64& rng);

struct PolicyTrainReport {
  std::vector<double> epoch_reward;
  std::vector<double> candidate_accuracy;  // per pool index, on the training set
  unsigned best_candidate = 0;
  std::size_t steps = 0;
};

PolicyTrainReport train_policy(PolicyNet& pnet, std::span<const PolicySample> samples,
                               const RewardOracle& reward, const PolicyTrainConfig& cfg,
                               std::size_t max_steps = 0);
PolicyTrainReport train_policy(PolicyNet& pnet, const CandidatePool& pool,
                               std::span<const PolicySample> samples, const PolicyTrainConfig& cfg);

}  // namespace pva
