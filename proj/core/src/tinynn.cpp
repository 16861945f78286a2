#include "pva/tinynn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>

#include "pva/error.hpp"

namespace pva::nn {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::size_t conv_input_length(const LayerSpec& s, std::size_t input_size) {
  if (input_size % s.in != 0)
    throw DimensionError("conv input of " + std::to_string(input_size) +
                         " values is not divisible by " + std::to_string(s.in) + " channels");
  const std::size_t len = input_size / s.in;
  if (len < s.kernel)
    throw DimensionError("conv input length " + std::to_string(len) + " shorter than kernel " +
                         std::to_string(s.kernel));
  return len;
}

// Little-endian byte helpers for the model file format.
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float f) {
  put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw FormatError("short read: model file truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

LayerSpec LayerSpec::conv(std::uint32_t in_channels, std::uint32_t out_channels,
                          std::uint32_t kernel, std::uint32_t stride, Activation act) {
  return {LayerKind::Conv1D, act, in_channels, out_channels, kernel, stride};
}

LayerSpec LayerSpec::fc(std::uint32_t in_features, std::uint32_t out_features, Activation act) {
  return {LayerKind::FullyConnected, act, in_features, out_features, 0, 0};
}

std::size_t LayerSpec::weight_count() const {
  return kind == LayerKind::Conv1D ? std::size_t{out} * in * kernel : std::size_t{out} * in;
}

void LayerSpec::validate() const {
  if (in < 1 || out < 1) throw ValidationError("layer dimensions must be >= 1");
  if (kind == LayerKind::Conv1D) {
    if (kernel < 1 || stride < 1) throw ValidationError("conv kernel and stride must be >= 1");
  } else if (kind == LayerKind::FullyConnected) {
    if (kernel != 0 || stride != 0) throw ValidationError("fc layer with conv shape fields");
  } else {
    throw ValidationError("unknown layer kind");
  }
  if (activation != Activation::None && activation != Activation::ReLU)
    throw ValidationError("unknown activation");
}

std::size_t LayerSpec::output_size(std::size_t input_size) const {
  if (kind == LayerKind::Conv1D) {
    const std::size_t len = conv_input_length(*this, input_size);
    return std::size_t{out} * ((len - kernel) / stride + 1);
  }
  if (input_size != in)
    throw DimensionError("fc expects " + std::to_string(in) + " inputs, got " +
                         std::to_string(input_size));
  return out;
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.spec.param_count();
  return n;
}

void Model::validate(std::size_t input_size) const {
  std::size_t size = input_size;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    try {
      l.spec.validate();
      if (l.weights.size() != l.spec.weight_count() || l.biases.size() != l.spec.bias_count())
        throw DimensionError("parameter vector sizes do not match the layer spec");
      size = l.spec.output_size(size);
    } catch (const Error& e) {
      throw DimensionError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
}

Model init_model(std::span<const LayerSpec> specs, std::uint64_t seed) {
  std::mt19937_64 rng(mix(seed));
  Model m;
  for (const auto& s : specs) {
    s.validate();
    Layer l;
    l.spec = s;
    const double fan_in = s.kind == LayerKind::Conv1D ? double(s.in) * s.kernel : double(s.in);
    const double fan_out = s.kind == LayerKind::Conv1D ? double(s.out) * s.kernel : double(s.out);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    l.weights.resize(s.weight_count());
    for (auto& w : l.weights) w = static_cast<float>(dist(rng));
    l.biases.assign(s.bias_count(), 0.0f);
    m.layers.push_back(std::move(l));
  }
  return m;
}

Model zero_model(std::span<const LayerSpec> specs) {
  Model m;
  for (const auto& s : specs) {
    s.validate();
    m.layers.push_back({s, std::vector<float>(s.weight_count(), 0.0f),
                        std::vector<float>(s.bias_count(), 0.0f)});
  }
  return m;
}

FreezeMask FreezeMask::from_index(unsigned index) {
  if (index > 31) throw ValidationError("freeze mask index must be in 0..31");
  FreezeMask m;
  for (unsigned i = 0; i < 5; ++i) m.fine_tune[i] = (index >> i) & 1U;
  return m;
}

unsigned FreezeMask::to_index() const {
  unsigned v = 0;
  for (unsigned i = 0; i < 5; ++i)
    if (fine_tune[i]) v |= 1U << i;
  return v;
}

std::vector<bool> trainable_layers(const Model& model, const FreezeMask& mask) {
  std::vector<bool> out(model.layers.size(), true);
  std::size_t conv = 0;
  for (std::size_t i = 0; i < model.layers.size(); ++i)
    if (model.layers[i].spec.kind == LayerKind::Conv1D) out[i] = mask.conv_trainable(conv++);
  return out;
}

void layer_forward(const Layer& layer, std::span<const double> in, std::vector<double>& pre,
                   std::vector<double>& post) {
  const auto& s = layer.spec;
  if (s.kind == LayerKind::Conv1D) {
    const std::size_t len = conv_input_length(s, in.size());
    const std::size_t out_len = (len - s.kernel) / s.stride + 1;
    pre.assign(std::size_t{s.out} * out_len, 0.0);
    for (std::size_t o = 0; o < s.out; ++o) {
      double* dst = pre.data() + o * out_len;
      const double b = layer.biases[o];
      for (std::size_t t = 0; t < out_len; ++t) dst[t] = b;
      for (std::size_t c = 0; c < s.in; ++c) {
        const float* w = layer.weights.data() + (o * s.in + c) * s.kernel;
        const double* src = in.data() + c * len;
        for (std::size_t t = 0; t < out_len; ++t) {
          const double* x = src + t * s.stride;
          double acc = 0.0;
          for (std::size_t j = 0; j < s.kernel; ++j) acc += double(w[j]) * x[j];
          dst[t] += acc;
        }
      }
    }
  } else {
    if (in.size() != s.in)
      throw DimensionError("fc expects " + std::to_string(s.in) + " inputs, got " +
                           std::to_string(in.size()));
    pre.resize(s.out);
    for (std::size_t o = 0; o < s.out; ++o) {
      const float* w = layer.weights.data() + o * s.in;
      double acc = layer.biases[o];
      for (std::size_t i = 0; i < s.in; ++i) acc += double(w[i]) * in[i];
      pre[o] = acc;
    }
  }
  post = pre;
  if (s.activation == Activation::ReLU)
    for (auto& v : post) v = v > 0.0 ? v : 0.0;
}

void layer_backward(const Layer& layer, std::span<const double> in, std::span<const double> pre,
                    std::span<const double> d_post, LayerGrad* grad, std::vector<double>* d_in) {
  const auto& s = layer.spec;
  if (pre.size() != d_post.size()) throw DimensionError("layer_backward: gradient size mismatch");
  std::vector<double> d_pre(d_post.begin(), d_post.end());
  if (s.activation == Activation::ReLU)
    for (std::size_t i = 0; i < d_pre.size(); ++i)
      if (!(pre[i] > 0.0)) d_pre[i] = 0.0;

  if (d_in) d_in->assign(in.size(), 0.0);
  if (grad) {
    if (grad->weights.size() != s.weight_count()) grad->weights.assign(s.weight_count(), 0.0);
    if (grad->biases.size() != s.bias_count()) grad->biases.assign(s.bias_count(), 0.0);
  }

  if (s.kind == LayerKind::Conv1D) {
    const std::size_t len = conv_input_length(s, in.size());
    const std::size_t out_len = (len - s.kernel) / s.stride + 1;
    if (pre.size() != s.out * out_len) throw DimensionError("layer_backward: stale conv cache");
    for (std::size_t o = 0; o < s.out; ++o) {
      const double* g = d_pre.data() + o * out_len;
      if (grad) {
        double db = 0.0;
        for (std::size_t t = 0; t < out_len; ++t) db += g[t];
        grad->biases[o] += db;
      }
      for (std::size_t c = 0; c < s.in; ++c) {
        const std::size_t wbase = (o * s.in + c) * s.kernel;
        const double* src = in.data() + c * len;
        if (grad) {
          double* dw = grad->weights.data() + wbase;
          for (std::size_t t = 0; t < out_len; ++t) {
            const double gt = g[t];
            if (gt == 0.0) continue;
            const double* x = src + t * s.stride;
            for (std::size_t j = 0; j < s.kernel; ++j) dw[j] += gt * x[j];
          }
        }
        if (d_in) {
          const float* w = layer.weights.data() + wbase;
          double* dx_base = d_in->data() + c * len;
          for (std::size_t t = 0; t < out_len; ++t) {
            const double gt = g[t];
            if (gt == 0.0) continue;
            double* dx = dx_base + t * s.stride;
            for (std::size_t j = 0; j < s.kernel; ++j) dx[j] += gt * double(w[j]);
          }
        }
      }
    }
  } else {
    if (in.size() != s.in || pre.size() != s.out)
      throw DimensionError("layer_backward: stale fc cache");
    for (std::size_t o = 0; o < s.out; ++o) {
      const double g = d_pre[o];
      if (g == 0.0) continue;
      if (grad) {
        grad->biases[o] += g;
        double* dw = grad->weights.data() + o * s.in;
        for (std::size_t i = 0; i < s.in; ++i) dw[i] += g * in[i];
      }
      if (d_in) {
        const float* w = layer.weights.data() + o * s.in;
        for (std::size_t i = 0; i < s.in; ++i) (*d_in)[i] += g * double(w[i]);
      }
    }
  }
}

std::vector<double> to_double(std::span<const float> x) {
  return std::vector<double>(x.begin(), x.end());
}

std::span<const double> forward(const Model& model, std::span<const float> input,
                                ForwardCache& cache) {
  cache.input = to_double(input);
  cache.pre.resize(model.layers.size());
  cache.post.resize(model.layers.size());
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    std::span<const double> in = i == 0 ? std::span<const double>(cache.input)
                                        : std::span<const double>(cache.post[i - 1]);
    try {
      layer_forward(model.layers[i], in, cache.pre[i], cache.post[i]);
    } catch (const DimensionError& e) {
      throw DimensionError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  if (model.layers.empty()) return cache.input;
  return cache.post.back();
}

std::vector<double> forward(const Model& model, std::span<const float> input) {
  ForwardCache cache;
  const auto out = forward(model, input, cache);
  return {out.begin(), out.end()};
}

Gradients Gradients::zeros_like(const Model& model) {
  Gradients g;
  g.layers.reserve(model.layers.size());
  for (const auto& l : model.layers)
    g.layers.push_back({std::vector<double>(l.weights.size(), 0.0),
                        std::vector<double>(l.biases.size(), 0.0)});
  return g;
}

void Gradients::scale(double factor) {
  for (auto& l : layers) {
    for (auto& v : l.weights) v *= factor;
    for (auto& v : l.biases) v *= factor;
  }
}

void Gradients::add(const Gradients& other) {
  if (other.layers.size() != layers.size()) throw DimensionError("gradient layer count mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.weights.size() != b.weights.size() || a.biases.size() != b.biases.size())
      throw DimensionError("gradient shape mismatch");
    for (std::size_t k = 0; k < a.weights.size(); ++k) a.weights[k] += b.weights[k];
    for (std::size_t k = 0; k < a.biases.size(); ++k) a.biases[k] += b.biases[k];
  }
}

std::vector<double> softmax_probs(std::span<const double> logits) {
  if (logits.empty()) throw DimensionError("softmax of empty vector");
  for (double v : logits)
    if (!std::isfinite(v)) throw NumericError("non-finite logit");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

LossGrad cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw DataError("label index out of range");
  LossGrad out;
  out.d_logits = softmax_probs(logits);
  const double mx = *std::max_element(logits.begin(), logits.end());
  double lse = 0.0;
  for (double v : logits) lse += std::exp(v - mx);
  out.loss = std::log(lse) + mx - logits[label];
  out.d_logits[label] -= 1.0;
  return out;
}

void accumulate_backward(const Model& model, const ForwardCache& cache,
                         std::span<const double> d_output, const FreezeMask& mask,
                         Gradients& grads, std::span<const std::vector<double>> extra_d_post) {
  const std::size_t n = model.layers.size();
  if (n == 0) return;
  if (cache.pre.size() != n || cache.post.size() != n)
    throw DataError("stale forward cache: layer count mismatch");
  if (grads.layers.size() != n) grads = Gradients::zeros_like(model);
  if (!extra_d_post.empty() && extra_d_post.size() != n)
    throw DimensionError("extra gradient list must have one entry per layer");
  if (d_output.size() != cache.post.back().size())
    throw DataError("stale forward cache: output size mismatch");

  const auto trainable = trainable_layers(model, mask);
  // Lowest layer that still needs a gradient signal.
  std::size_t lowest = n;
  for (std::size_t i = 0; i < n; ++i)
    if (trainable[i]) {
      lowest = i;
      break;
    }
  if (lowest == n) return;

  std::vector<double> d_post(d_output.begin(), d_output.end());
  std::vector<double> d_in;
  for (std::size_t i = n; i-- > lowest;) {
    if (!extra_d_post.empty() && !extra_d_post[i].empty()) {
      if (extra_d_post[i].size() != d_post.size())
        throw DimensionError("extra gradient size mismatch at layer " + std::to_string(i));
      for (std::size_t k = 0; k < d_post.size(); ++k) d_post[k] += extra_d_post[i][k];
    }
    std::span<const double> in =
        i == 0 ? std::span<const double>(cache.input) : std::span<const double>(cache.post[i - 1]);
    if (cache.pre[i].size() != d_post.size())
      throw DataError("stale forward cache at layer " + std::to_string(i));
    layer_backward(model.layers[i], in, cache.pre[i], d_post, trainable[i] ? &grads.layers[i] : nullptr,
                   i > lowest ? &d_in : nullptr);
    if (i > lowest) d_post.swap(d_in);
  }
}

Gradients backward(const Model& model, const ForwardCache& cache, std::size_t label,
                   const FreezeMask& mask) {
  if (cache.post.empty()) throw DataError("stale forward cache: empty");
  const auto lg = cross_entropy(cache.post.back(), label);
  Gradients g = Gradients::zeros_like(model);
  accumulate_backward(model, cache, lg.d_logits, mask, g);
  return g;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0) || !std::isfinite(learning_rate))
    throw ValidationError("learning_rate must be > 0");
  if (!(momentum >= 0 && momentum < 1)) throw ValidationError("momentum must be in [0, 1)");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
}

OptimizerState OptimizerState::zeros_like(const Model& model) {
  return {Gradients::zeros_like(model).layers};
}

void sgd_update(Model& model, const Gradients& grads, OptimizerState& state,
                const TrainConfig& cfg, const FreezeMask& mask) {
  const std::size_t n = model.layers.size();
  if (grads.layers.size() != n) throw DimensionError("sgd_update: gradient layer count mismatch");
  if (state.velocity.size() != n) state = OptimizerState::zeros_like(model);
  const auto trainable = trainable_layers(model, mask);
  for (std::size_t i = 0; i < n; ++i) {
    if (!trainable[i]) continue;
    auto& layer = model.layers[i];
    auto& v = state.velocity[i];
    const auto& g = grads.layers[i];
    if (g.weights.size() != layer.weights.size() || g.biases.size() != layer.biases.size() ||
        v.weights.size() != layer.weights.size() || v.biases.size() != layer.biases.size())
      throw DimensionError("sgd_update: shape mismatch at layer " + std::to_string(i));
    auto step = [&](std::vector<float>& theta, std::vector<double>& vel,
                    const std::vector<double>& grad) {
      for (std::size_t k = 0; k < theta.size(); ++k) {
        vel[k] = cfg.momentum * vel[k] + grad[k];
        theta[k] = static_cast<float>(double(theta[k]) - cfg.learning_rate * vel[k]);
      }
    };
    step(layer.weights, v.weights, g.weights);
    step(layer.biases, v.biases, g.biases);
  }
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix(seed) ^ mix(0xe90c0000ULL + epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

TrainReport run_minibatch_sgd(Model& model, std::size_t dataset_size, const TrainConfig& cfg,
                              const FreezeMask& mask, const BatchGradientFn& batch_gradient) {
  cfg.validate();
  if (dataset_size == 0) throw DataError("training set is empty");
  TrainReport report;
  OptimizerState state = OptimizerState::zeros_like(model);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(dataset_size, cfg.seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < dataset_size; b += cfg.batch_size) {
      const std::size_t e = std::min(dataset_size, b + cfg.batch_size);
      Gradients grads = Gradients::zeros_like(model);
      loss_sum += batch_gradient(std::span<const std::size_t>(order).subspan(b, e - b), step, grads);
      sgd_update(model, grads, state, cfg, mask);
      ++step;
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(dataset_size));
  }
  return report;
}

TrainReport train_supervised(Model& model, std::span<const Example> data, const TrainConfig& cfg,
                             const FreezeMask& mask) {
  cfg.validate();
  if (data.empty()) throw DataError("training set is empty");
  ForwardCache cache;
  return run_minibatch_sgd(
      model, data.size(), cfg, mask,
      [&](std::span<const std::size_t> batch, std::size_t, Gradients& grads) {
        const double inv = 1.0 / static_cast<double>(batch.size());
        double loss = 0.0;
        for (std::size_t idx : batch) {
          const auto& ex = data[idx];
          const auto out = forward(model, ex.input, cache);
          auto lg = cross_entropy(out, ex.label);
          loss += lg.loss;
          for (auto& d : lg.d_logits) d *= inv;
          accumulate_backward(model, cache, lg.d_logits, mask, grads);
        }
        return loss;
      });
}

MemoryBudget memory_budget(std::span<const LayerSpec> specs, std::size_t input_size) {
  MemoryBudget b;
  std::size_t size = input_size;
  std::size_t peak = 0;
  std::size_t params = 0;
  for (const auto& s : specs) {
    const std::size_t next = s.output_size(size);
    peak = std::max(peak, size + next);
    params += s.param_count();
    size = next;
  }
  b.param_bytes = params * sizeof(float);
  b.scratch_bytes = peak * sizeof(float);
  return b;
}

MemoryBudget memory_budget(const Model& model, std::size_t input_size) {
  std::vector<LayerSpec> specs;
  for (const auto& l : model.layers) specs.push_back(l.spec);
  return memory_budget(specs, input_size);
}

std::vector<std::uint8_t> serialize(const Model& model) {
  std::vector<std::uint8_t> out = {'P', 'V', 'A', '1'};
  out.reserve(8 + model.param_count() * 4 + model.layers.size() * 18);
  put_u32(out, static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& l : model.layers) {
    out.push_back(static_cast<std::uint8_t>(l.spec.kind));
    out.push_back(static_cast<std::uint8_t>(l.spec.activation));
    put_u32(out, l.spec.in);
    put_u32(out, l.spec.out);
    put_u32(out, l.spec.kernel);
    put_u32(out, l.spec.stride);
    for (float w : l.weights) put_f32(out, w);
    for (float b : l.biases) put_f32(out, b);
  }
  return out;
}

Model deserialize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "PVA1", 4) != 0)
    throw FormatError("bad magic: not a PVA1 model file");
  Reader r(bytes.subspan(4));
  const std::uint32_t count = r.u32();
  Model m;
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerSpec s;
    const auto kind = r.u8();
    const auto act = r.u8();
    if (kind > 1) throw FormatError("layer " + std::to_string(i) + ": unknown kind tag");
    if (act > 1) throw FormatError("layer " + std::to_string(i) + ": unknown activation tag");
    s.kind = static_cast<LayerKind>(kind);
    s.activation = static_cast<Activation>(act);
    s.in = r.u32();
    s.out = r.u32();
    s.kernel = r.u32();
    s.stride = r.u32();
    try {
      s.validate();
    } catch (const ValidationError& e) {
      throw FormatError("layer " + std::to_string(i) + ": " + e.what());
    }
    if (!m.layers.empty()) {
      const auto& prev = m.layers.back().spec;
      const bool ok = s.kind == LayerKind::Conv1D
                          ? prev.kind == LayerKind::Conv1D && prev.out == s.in
                          : prev.kind == LayerKind::Conv1D || prev.out == s.in;
      if (!ok) throw FormatError("layer " + std::to_string(i) + ": shape inconsistent with layer " +
                                 std::to_string(i - 1));
    }
    if (r.remaining() / 4 < s.param_count()) throw FormatError("short read: model file truncated");
    Layer l;
    l.spec = s;
    l.weights.resize(s.weight_count());
    l.biases.resize(s.bias_count());
    for (auto& w : l.weights) w = r.f32();
    for (auto& b : l.biases) b = r.f32();
    m.layers.push_back(std::move(l));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last layer");
  return m;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FileError("write failed for " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace pva::nn
