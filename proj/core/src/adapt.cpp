#include "pva/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <sstream>
#include <string>

#include "pva/error.hpp"

namespace pva {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double t = a[k] - b[k];
    d += t * t;
  }
  return d;
}

void check_points(const Points& x, const Points& y) {
  if (x.empty() || y.empty()) throw DataError("mmd2 needs non-empty point sets");
  const std::size_t dim = x.front().size();
  for (const auto& p : x)
    if (p.size() != dim) throw DimensionError("mmd2: inconsistent dimensionality in X");
  for (const auto& p : y)
    if (p.size() != dim) throw DimensionError("mmd2: X and Y dimensionality differ");
}

double resolve_sigma(const Points& x, const Points& y, const MmdConfig& cfg) {
  cfg.validate();
  return cfg.bandwidth ? *cfg.bandwidth : median_bandwidth(x, y);
}

std::string pool_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "cand_%02zu.pva1", index);
  return buf;
}

std::string mask_bits(unsigned index) {
  std::string bits;
  for (unsigned i = 0; i < 5; ++i) bits.push_back(((index >> i) & 1U) ? '1' : '0');
  return bits;
}

}  // namespace

void MmdConfig::validate() const {
  if (bandwidth && !(*bandwidth > 0 && std::isfinite(*bandwidth)))
    throw ValidationError("mmd bandwidth must be > 0");
}

double median_bandwidth(const Points& x, const Points& y) {
  std::vector<const std::vector<double>*> pooled;
  for (const auto& p : x) pooled.push_back(&p);
  for (const auto& p : y) pooled.push_back(&p);
  std::vector<double> d;
  d.reserve(pooled.size() * (pooled.size() - 1) / 2);
  for (std::size_t i = 0; i < pooled.size(); ++i)
    for (std::size_t j = i + 1; j < pooled.size(); ++j)
      d.push_back(std::sqrt(sq_dist(*pooled[i], *pooled[j])));
  if (d.empty()) return 1.0;
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double median = d[mid];
  if (d.size() % 2 == 0) {
    const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (median + lower);
  }
  return median > 0.0 ? median : 1.0;
}

double mmd2(const Points& x, const Points& y, const MmdConfig& cfg) {
  check_points(x, y);
  const double sigma = resolve_sigma(x, y, cfg);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  auto mean_k = [&](const Points& a, const Points& b) {
    double s = 0.0;
    for (const auto& u : a)
      for (const auto& v : b) s += std::exp(-sq_dist(u, v) * inv);
    return s / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
  };
  const double v = mean_k(x, x) + mean_k(y, y) - 2.0 * mean_k(x, y);
  return std::max(0.0, v);
}

MmdGradient mmd2_with_grad(const Points& x, const Points& y, const MmdConfig& cfg) {
  check_points(x, y);
  MmdGradient g;
  g.sigma = resolve_sigma(x, y, cfg);
  const double s2 = g.sigma * g.sigma;
  const double inv = 1.0 / (2.0 * s2);
  const std::size_t n = x.size(), m = y.size(), dim = x.front().size();
  const double cxx = 1.0 / (double(n) * double(n));
  const double cyy = 1.0 / (double(m) * double(m));
  const double cxy = 1.0 / (double(n) * double(m));
  g.d_x.assign(n, std::vector<double>(dim, 0.0));
  g.d_y.assign(m, std::vector<double>(dim, 0.0));

  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  // dk(u,v)/du = -k (u - v) / sigma^2
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double k = std::exp(-sq_dist(x[i], x[j]) * inv);
      sxx += k;
      if (i == j) continue;
      const double c = -2.0 * cxx * k / s2;
      for (std::size_t d = 0; d < dim; ++d) g.d_x[i][d] += c * (x[i][d] - x[j][d]);
    }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double k = std::exp(-sq_dist(y[i], y[j]) * inv);
      syy += k;
      if (i == j) continue;
      const double c = -2.0 * cyy * k / s2;
      for (std::size_t d = 0; d < dim; ++d) g.d_y[i][d] += c * (y[i][d] - y[j][d]);
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const double k = std::exp(-sq_dist(x[i], y[j]) * inv);
      sxy += k;
      const double c = 2.0 * cxy * k / s2;  // from the -2 mean k(x,y) term
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = x[i][d] - y[j][d];
        g.d_x[i][d] += c * diff;
        g.d_y[j][d] -= c * diff;
      }
    }
  g.value = sxx * cxx + syy * cyy - 2.0 * sxy * cxy;
  return g;
}

void AdaptConfig::validate() const {
  if (!std::isfinite(lambda_mmd) || lambda_mmd < 0) throw ValidationError("lambda_mmd must be finite and >= 0");
  train.validate();
  mmd.validate();
}

std::vector<std::size_t> fc_layer_indices(const nn::Model& model) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < model.layers.size(); ++i)
    if (model.layers[i].spec.kind == nn::LayerKind::FullyConnected) out.push_back(i);
  return out;
}

Points layer_activations(const nn::Model& model, std::span<const std::span<const float>> inputs,
                         std::size_t layer) {
  if (layer >= model.layers.size()) throw DimensionError("layer index out of range");
  Points out;
  out.reserve(inputs.size());
  nn::ForwardCache cache;
  for (const auto& in : inputs) {
    nn::forward(model, in, cache);
    out.push_back(cache.post[layer]);
  }
  return out;
}

AdaptResult adapt_with_mask(const nn::Model& base, std::span<const nn::Example> source,
                            std::span<const std::span<const float>> target,
                            const nn::FreezeMask& mask, const AdaptConfig& cfg) {
  cfg.validate();
  if (source.empty()) throw DataError("adaptation source set is empty");
  if (target.empty()) throw DataError("adaptation target set is empty");

  AdaptResult result;
  result.model = base;
  nn::Model& model = result.model;
  const auto fc = fc_layer_indices(model);
  const std::size_t n_layers = model.layers.size();

  std::size_t target_cursor = 0;
  std::size_t batches_in_epoch = 0;
  double mmd_in_epoch = 0.0;
  std::vector<nn::ForwardCache> src_cache, tgt_cache;

  auto batch_gradient = [&](std::span<const std::size_t> batch, std::size_t,
                            nn::Gradients& grads) {
    const double inv = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    ++batches_in_epoch;
    if (cfg.lambda_mmd == 0.0) {
      // Plain supervised step; identical arithmetic to train_supervised.
      nn::ForwardCache cache;
      for (std::size_t idx : batch) {
        const auto& ex = source[idx];
        const auto out = nn::forward(model, ex.input, cache);
        auto lg = nn::cross_entropy(out, ex.label);
        loss += lg.loss;
        for (auto& d : lg.d_logits) d *= inv;
        nn::accumulate_backward(model, cache, lg.d_logits, mask, grads);
      }
      return loss;
    }

    const std::size_t b = batch.size();
    src_cache.resize(b);
    tgt_cache.resize(b);
    std::vector<nn::LossGrad> ce(b);
    for (std::size_t k = 0; k < b; ++k) {
      const auto& ex = source[batch[k]];
      const auto out = nn::forward(model, ex.input, src_cache[k]);
      ce[k] = nn::cross_entropy(out, ex.label);
      loss += ce[k].loss;
      nn::forward(model, target[target_cursor], tgt_cache[k]);
      target_cursor = (target_cursor + 1) % target.size();
    }

    std::vector<std::vector<std::vector<double>>> src_extra(b, std::vector<std::vector<double>>(n_layers));
    std::vector<std::vector<std::vector<double>>> tgt_extra(b, std::vector<std::vector<double>>(n_layers));
    double mmd_total = 0.0;
    for (std::size_t layer : fc) {
      Points xs(b), ys(b);
      for (std::size_t k = 0; k < b; ++k) {
        xs[k] = src_cache[k].post[layer];
        ys[k] = tgt_cache[k].post[layer];
      }
      auto g = mmd2_with_grad(xs, ys, cfg.mmd);
      mmd_total += std::max(0.0, g.value);
      for (std::size_t k = 0; k < b; ++k) {
        for (auto& v : g.d_x[k]) v *= cfg.lambda_mmd;
        for (auto& v : g.d_y[k]) v *= cfg.lambda_mmd;
        src_extra[k][layer] = std::move(g.d_x[k]);
        tgt_extra[k][layer] = std::move(g.d_y[k]);
      }
    }
    mmd_in_epoch += mmd_total;

    const std::vector<double> zero_out(src_cache.front().post.back().size(), 0.0);
    for (std::size_t k = 0; k < b; ++k) {
      for (auto& d : ce[k].d_logits) d *= inv;
      nn::accumulate_backward(model, src_cache[k], ce[k].d_logits, mask, grads, src_extra[k]);
      nn::accumulate_backward(model, tgt_cache[k], zero_out, mask, grads, tgt_extra[k]);
    }
    return loss;
  };

  const std::size_t batches_per_epoch =
      (source.size() + cfg.train.batch_size - 1) / cfg.train.batch_size;
  auto report = nn::run_minibatch_sgd(
      model, source.size(), cfg.train, mask,
      [&](std::span<const std::size_t> batch, std::size_t step, nn::Gradients& grads) {
        if (step > 0 && step % batches_per_epoch == 0) {
          result.epoch_mmd.push_back(mmd_in_epoch / static_cast<double>(batches_in_epoch));
          mmd_in_epoch = 0.0;
          batches_in_epoch = 0;
        }
        return batch_gradient(batch, step, grads);
      });
  result.epoch_mmd.push_back(batches_in_epoch ? mmd_in_epoch / double(batches_in_epoch) : 0.0);
  result.epoch_ce = std::move(report.epoch_loss);
  return result;
}

void CandidatePool::validate() const {
  if (models.size() != kPoolSize)
    throw ValidationError("candidate pool must hold exactly 32 models, has " +
                          std::to_string(models.size()));
}

std::size_t CandidatePool::serialized_bytes() const {
  std::size_t total = 0;
  for (const auto& m : models) total += nn::serialize(m).size();
  return total;
}

CandidatePool build_pool(const nn::Model& base, std::span<const nn::Example> source,
                         std::span<const std::span<const float>> target, const AdaptConfig& cfg,
                         unsigned threads) {
  cfg.validate();
  if (source.empty()) throw DataError("adaptation source set is empty");
  if (target.empty()) throw DataError("adaptation target set is empty");
  std::vector<AdaptResult> results(kPoolSize);
  auto run = [&](std::size_t index) {
    AdaptConfig c = cfg;
    c.train.seed = cfg.train.seed + index;
    return adapt_with_mask(base, source, target,
                           nn::FreezeMask::from_index(static_cast<unsigned>(index)), c);
  };
  threads = std::max(1U, threads);
  for (std::size_t first = 0; first < kPoolSize; first += threads) {
    std::vector<std::future<AdaptResult>> jobs;
    const std::size_t last = std::min(kPoolSize, first + threads);
    for (std::size_t i = first + 1; i < last; ++i) jobs.push_back(std::async(std::launch::async, run, i));
    results[first] = run(first);
    for (std::size_t i = first + 1; i < last; ++i) results[i] = jobs[i - first - 1].get();
  }
  CandidatePool pool;
  for (auto& r : results) {
    pool.final_ce.push_back(r.epoch_ce.empty() ? 0.0 : r.epoch_ce.back());
    pool.final_mmd.push_back(r.epoch_mmd.empty() ? 0.0 : r.epoch_mmd.back());
    pool.models.push_back(std::move(r.model));
  }
  return pool;
}

CandidatePool replicate_pool(const nn::Model& model) {
  CandidatePool pool;
  pool.models.assign(kPoolSize, model);
  pool.final_ce.assign(kPoolSize, 0.0);
  pool.final_mmd.assign(kPoolSize, 0.0);
  return pool;
}

void save_pool(const CandidatePool& pool, const std::filesystem::path& dir) {
  pool.validate();
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv", std::ios::binary);
  if (!manifest) throw FileError("cannot write " + (dir / "manifest.csv").string());
  manifest << "index,mask_bits,param_bytes,final_ce,final_mmd\n";
  for (std::size_t i = 0; i < kPoolSize; ++i) {
    nn::save_model(pool.models[i], dir / pool_file_name(i));
    char line[160];
    std::snprintf(line, sizeof line, "%zu,%s,%zu,%.9g,%.9g\n", i,
                  mask_bits(static_cast<unsigned>(i)).c_str(), pool.models[i].param_count() * 4,
                  pool.final_ce.size() > i ? pool.final_ce[i] : 0.0,
                  pool.final_mmd.size() > i ? pool.final_mmd[i] : 0.0);
    manifest << line;
  }
}

CandidatePool load_pool(const std::filesystem::path& dir) {
  CandidatePool pool;
  for (std::size_t i = 0; i < kPoolSize; ++i) pool.models.push_back(nn::load_model(dir / pool_file_name(i)));
  pool.final_ce.assign(kPoolSize, 0.0);
  pool.final_mmd.assign(kPoolSize, 0.0);
  std::ifstream manifest(dir / "manifest.csv");
  if (manifest) {
    std::string line;
    std::getline(manifest, line);
    while (std::getline(manifest, line)) {
      std::size_t idx = 0;
      char bits[8] = {};
      std::size_t bytes = 0;
      double ce = 0, mmd = 0;
      if (std::sscanf(line.c_str(), "%zu,%5[01],%zu,%lf,%lf", &idx, bits, &bytes, &ce, &mmd) == 5 &&
          idx < kPoolSize) {
        pool.final_ce[idx] = ce;
        pool.final_mmd[idx] = mmd;
      }
    }
  }
  return pool;
}

}  // namespace pva
