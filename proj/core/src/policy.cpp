#include "pva/policy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pva/detect.hpp"
#include "pva/error.hpp"

namespace pva {

namespace {

constexpr std::uint32_t kWidth = 8;
constexpr std::size_t kStem = 0;
constexpr std::size_t kFirstFc = 9;
constexpr double kClamp = 1e-6;

bool decimated_after(std::size_t block) { return block == 1 || block == 3; }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double clamp_prob(double x) { return std::clamp(x, kClamp, 1.0 - kClamp); }

std::vector<double> decimate(const std::vector<double>& x, std::size_t channels) {
  const std::size_t len = x.size() / channels;
  const std::size_t out_len = (len + 1) / 2;
  std::vector<double> out(channels * out_len);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t t = 0; t < out_len; ++t) out[c * out_len + t] = x[c * len + 2 * t];
  return out;
}

}  // namespace

std::vector<nn::LayerSpec> build_policy_arch() {
  using nn::Activation;
  using nn::LayerSpec;
  std::vector<LayerSpec> arch;
  arch.push_back(LayerSpec::conv(1, kWidth, 7, 2, Activation::ReLU));
  for (int b = 0; b < 4; ++b) {
    arch.push_back(LayerSpec::conv(kWidth, kWidth, 3, 1, Activation::ReLU));
    arch.push_back(LayerSpec::conv(kWidth, kWidth, 3, 1, Activation::None));
  }
  // 250 -> 122 -> 118 -> 114 -> 57 -> 53 -> 49 -> 25 samples.
  arch.push_back(LayerSpec::fc(kWidth * 25, 32, Activation::ReLU));
  arch.push_back(LayerSpec::fc(32, 16, Activation::ReLU));
  arch.push_back(LayerSpec::fc(16, kActionBits, Activation::None));
  return arch;
}

PolicyNet PolicyNet::make(std::uint64_t seed) {
  const auto arch = build_policy_arch();
  return {nn::init_model(arch, seed)};
}

PolicyNet PolicyNet::zeros() {
  const auto arch = build_policy_arch();
  return {nn::zero_model(arch)};
}

void PolicyNet::validate() const {
  const auto arch = build_policy_arch();
  if (model.layers.size() != arch.size()) throw DimensionError("policy net must have 12 layers");
  for (std::size_t i = 0; i < arch.size(); ++i) {
    const auto& l = model.layers[i];
    if (!(l.spec == arch[i]) || l.weights.size() != arch[i].weight_count() ||
        l.biases.size() != arch[i].bias_count())
      throw DimensionError("policy net layer " + std::to_string(i) + " does not match the policy architecture");
  }
}

Probs5 policy_forward(const PolicyNet& pnet, std::span<const float> segment) {
  PolicyCache cache;
  return policy_forward(pnet, segment, cache);
}

Probs5 policy_forward(const PolicyNet& pnet, std::span<const float> segment, PolicyCache& cache) {
  const auto& layers = pnet.model.layers;
  if (layers.size() != 12) throw DimensionError("policy net must have 12 layers");
  if (segment.size() != kSegmentSamples)
    throw DimensionError("policy input must be " + std::to_string(kSegmentSamples) + " samples, got " +
                         std::to_string(segment.size()));
  auto& lc = cache.layers;
  lc.input = nn::to_double(segment);
  lc.pre.resize(layers.size());
  lc.post.resize(layers.size());

  nn::layer_forward(layers[kStem], lc.input, lc.pre[kStem], lc.post[kStem]);
  std::vector<double> cur = lc.post[kStem];
  for (std::size_t b = 0; b < 4; ++b) {
    const std::size_t la = 1 + 2 * b, lb = 2 + 2 * b;
    cache.block_in[b] = cur;
    nn::layer_forward(layers[la], cur, lc.pre[la], lc.post[la]);
    nn::layer_forward(layers[lb], lc.post[la], lc.pre[lb], lc.post[lb]);
    const std::size_t len_in = cur.size() / kWidth;
    const std::size_t len_out = lc.pre[lb].size() / kWidth;
    auto& sum = cache.block_sum[b];
    sum.resize(lc.pre[lb].size());
    for (std::size_t c = 0; c < kWidth; ++c)
      for (std::size_t t = 0; t < len_out; ++t)
        sum[c * len_out + t] = lc.pre[lb][c * len_out + t] + cur[c * len_in + t + 2];
    auto& out = cache.block_out[b];
    out.resize(sum.size());
    for (std::size_t i = 0; i < sum.size(); ++i) out[i] = sum[i] > 0.0 ? sum[i] : 0.0;
    cur = decimated_after(b) ? decimate(out, kWidth) : out;
  }
  cache.fc_in = cur;
  std::span<const double> in = cache.fc_in;
  for (std::size_t l = kFirstFc; l < layers.size(); ++l) {
    try {
      nn::layer_forward(layers[l], in, lc.pre[l], lc.post[l]);
    } catch (const DimensionError& e) {
      throw DimensionError("policy layer " + std::to_string(l) + ": " + e.what());
    }
    in = lc.post[l];
  }
  for (std::size_t i = 0; i < kActionBits; ++i) {
    cache.logits[i] = lc.post.back()[i];
    cache.x[i] = sigmoid(cache.logits[i]);
  }
  return cache.x;
}

void policy_backward(const PolicyNet& pnet, const PolicyCache& cache, const Probs5& d_x,
                     nn::Gradients& grads) {
  const auto& layers = pnet.model.layers;
  const auto& lc = cache.layers;
  if (grads.layers.size() != layers.size()) grads = nn::Gradients::zeros_like(pnet.model);
  if (lc.pre.size() != layers.size()) throw DataError("stale policy cache");

  std::vector<double> d(kActionBits);
  for (std::size_t i = 0; i < kActionBits; ++i) d[i] = d_x[i] * cache.x[i] * (1.0 - cache.x[i]);
  std::vector<double> d_in;
  for (std::size_t l = layers.size(); l-- > kFirstFc;) {
    std::span<const double> in = l == kFirstFc ? std::span<const double>(cache.fc_in)
                                               : std::span<const double>(lc.post[l - 1]);
    nn::layer_backward(layers[l], in, lc.pre[l], d, &grads.layers[l], &d_in);
    d.swap(d_in);
  }

  std::vector<double> d_cur = std::move(d);
  for (std::size_t b = 4; b-- > 0;) {
    const std::size_t la = 1 + 2 * b, lb = 2 + 2 * b;
    const auto& sum = cache.block_sum[b];
    const std::size_t len_out = sum.size() / kWidth;
    const std::size_t len_in = cache.block_in[b].size() / kWidth;
    std::vector<double> d_out;
    if (decimated_after(b)) {
      const std::size_t len_dec = d_cur.size() / kWidth;
      d_out.assign(sum.size(), 0.0);
      for (std::size_t c = 0; c < kWidth; ++c)
        for (std::size_t t = 0; t < len_dec; ++t) d_out[c * len_out + 2 * t] = d_cur[c * len_dec + t];
    } else {
      d_out = std::move(d_cur);
    }
    std::vector<double> d_sum(sum.size());
    for (std::size_t i = 0; i < sum.size(); ++i) d_sum[i] = sum[i] > 0.0 ? d_out[i] : 0.0;

    std::vector<double> d_h, d_u;
    nn::layer_backward(layers[lb], lc.post[la], lc.pre[lb], d_sum, &grads.layers[lb], &d_h);
    nn::layer_backward(layers[la], cache.block_in[b], lc.pre[la], d_h, &grads.layers[la], &d_u);
    for (std::size_t c = 0; c < kWidth; ++c)
      for (std::size_t t = 0; t < len_out; ++t) d_u[c * len_in + t + 2] += d_sum[c * len_out + t];
    d_cur = std::move(d_u);
  }
  nn::layer_backward(layers[kStem], lc.input, lc.pre[kStem], d_cur, &grads.layers[kStem], nullptr);
}

double action_prob(const Probs5& x, const ActionVector& a) {
  double p = 1.0;
  for (std::size_t i = 0; i < kActionBits; ++i) p *= a[i] ? x[i] : 1.0 - x[i];
  return p;
}

double log_action_prob(const Probs5& x, const ActionVector& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < kActionBits; ++i) {
    const double xi = clamp_prob(x[i]);
    s += std::log(a[i] ? xi : 1.0 - xi);
  }
  return s;
}

Probs5 dlogpi_dx(const Probs5& x, const ActionVector& a) {
  Probs5 g{};
  for (std::size_t i = 0; i < kActionBits; ++i) {
    const double xi = clamp_prob(x[i]);
    const double ai = a[i] ? 1.0 : 0.0;
    g[i] = (2.0 * ai - 1.0) / (xi * ai + (1.0 - xi) * (1.0 - ai));
  }
  return g;
}

ActionVector sample_action(const Probs5& x, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ActionVector a{};
  for (std::size_t i = 0; i < kActionBits; ++i) a[i] = u(rng) < x[i];
  return a;
}

unsigned action_to_index(const ActionVector& a) {
  unsigned v = 0;
  for (std::size_t i = 0; i < kActionBits; ++i)
    if (a[i]) v |= 1U << i;
  return v;
}

ActionVector index_to_action(unsigned index) {
  if (index >= kPoolSize) throw ValidationError("action index must be in 0..31");
  ActionVector a{};
  for (std::size_t i = 0; i < kActionBits; ++i) a[i] = (index >> i) & 1U;
  return a;
}

ActionVector threshold_action(const Probs5& x) {
  ActionVector a{};
  for (std::size_t i = 0; i < kActionBits; ++i) a[i] = x[i] >= 0.5;
  return a;
}

unsigned select_candidate(const PolicyNet& pnet, std::span<const float> segment) {
  return action_to_index(threshold_action(policy_forward(pnet, segment)));
}

void PolicyTrainConfig::validate() const {
  if (!(beta > 0) || !std::isfinite(beta)) throw ValidationError("beta must be > 0");
  train.validate();
}

CorrectnessTable CorrectnessTable::from_pool(const CandidatePool& pool,
                                             std::span<const PolicySample> samples) {
  pool.validate();
  CorrectnessTable t;
  t.correct.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t c = 0; c < kPoolSize; ++c)
      t.correct[i][c] = infer_with_confidence(pool[c], samples[i].segment).klass == samples[i].label;
  return t;
}

double CorrectnessTable::accuracy(unsigned candidate) const {
  if (correct.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& row : correct) n += row.at(candidate) ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(correct.size());
}

unsigned CorrectnessTable::best_candidate() const {
  unsigned best = 0;
  double best_acc = -1.0;
  for (unsigned c = 0; c < kPoolSize; ++c) {
    const double a = accuracy(c);
    if (a > best_acc) {
      best_acc = a;
      best = c;
    }
  }
  return best;
}

RewardOracle CorrectnessTable::oracle() const {
  return [this](std::size_t index, unsigned candidate) { return correct.at(index).at(candidate); };
}

ReinforceStats reinforce_step(PolicyNet& pnet, std::span<const PolicySample> samples,
                              std::span<const std::size_t> batch, const RewardOracle& reward,
                              const PolicyTrainConfig& cfg, nn::OptimizerState& state,
                              std::mt19937_64& rng) {
  cfg.validate();
  if (batch.empty()) throw DataError("reinforce_step: empty batch");
  nn::Gradients grads = nn::Gradients::zeros_like(pnet.model);
  PolicyCache cache;
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t idx : batch) {
    if (idx >= samples.size()) throw DataError("reinforce_step: sample index out of range");
    const auto x = policy_forward(pnet, samples[idx].segment, cache);
    const auto a = sample_action(x, rng);
    const double r = reward(idx, action_to_index(a)) ? cfg.beta : -cfg.beta;
    total += r;
    const auto g = dlogpi_dx(x, a);
    Probs5 d_x{};
    for (std::size_t i = 0; i < kActionBits; ++i) d_x[i] = -r * inv * g[i];
    policy_backward(pnet, cache, d_x, grads);
  }
  nn::sgd_update(pnet.model, grads, state, cfg.train);
  return {total * inv};
}

ReinforceStats reinforce_step(PolicyNet& pnet, std::span<const PolicySample> samples,
                              std::span<const std::size_t> batch, const CandidatePool& pool,
                              const PolicyTrainConfig& cfg, nn::OptimizerState& state,
                              std::mt19937_64& rng) {
  pool.validate();
  RewardOracle oracle = [&](std::size_t index, unsigned candidate) {
    return infer_with_confidence(pool[candidate], samples[index].segment).klass ==
           samples[index].label;
  };
  return reinforce_step(pnet, samples, batch, oracle, cfg, state, rng);
}

PolicyTrainReport train_policy(PolicyNet& pnet, std::span<const PolicySample> samples,
                               const RewardOracle& reward, const PolicyTrainConfig& cfg,
                               std::size_t max_steps) {
  cfg.validate();
  pnet.validate();
  if (samples.empty()) throw DataError("policy training set is empty");
  PolicyTrainReport report;
  nn::OptimizerState state = nn::OptimizerState::zeros_like(pnet.model);
  std::mt19937_64 rng(cfg.train.seed ^ 0x5eed0f5a11c7ULL);
  const std::size_t bs = cfg.train.batch_size;
  for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
    const auto order = nn::epoch_order(samples.size(), cfg.train.seed, epoch);
    double reward_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      if (max_steps && report.steps >= max_steps) break;
      const std::size_t e = std::min(order.size(), b + bs);
      const auto stats = reinforce_step(pnet, samples, std::span(order).subspan(b, e - b), reward, cfg,
                                        state, rng);
      reward_sum += stats.mean_reward;
      ++batches;
      ++report.steps;
    }
    if (batches) report.epoch_reward.push_back(reward_sum / static_cast<double>(batches));
    if (max_steps && report.steps >= max_steps) break;
  }
  return report;
}

PolicyTrainReport train_policy(PolicyNet& pnet, const CandidatePool& pool,
                               std::span<const PolicySample> samples, const PolicyTrainConfig& cfg) {
  const auto table = CorrectnessTable::from_pool(pool, samples);
  auto report = train_policy(pnet, samples, table.oracle(), cfg);
  for (unsigned c = 0; c < kPoolSize; ++c) report.candidate_accuracy.push_back(table.accuracy(c));
  report.best_candidate = table.best_candidate();
  return report;
}

}  // namespace pva
