#include "fixtures.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace fixture {

using pva::Label;

std::vector<float> noise_segment(std::uint64_t seed, double sigma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<float> x(pva::kSegmentSamples);
  for (auto& v : x) v = static_cast<float>(g(rng));
  return x;
}

pva::nn::Model probe_model(std::size_t feature, float gain) {
  const pva::nn::LayerSpec spec = pva::nn::LayerSpec::fc(pva::kSegmentSamples, 2);
  pva::nn::Model m = pva::nn::zero_model(std::span(&spec, 1));
  auto& w = m.layers[0].weights;
  w[0 * pva::kSegmentSamples + feature] = -gain;  // NonVTVF
  w[1 * pva::kSegmentSamples + feature] = gain;   // VTVF
  return m;
}

Bandit make_bandit(std::uint64_t seed, std::size_t n, unsigned strong) {
  Bandit b;
  b.strong = strong;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.5);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<bool> strong_ok(n, false), weak_ok(n, false);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < n * 95 / 100; ++i) strong_ok[order[i]] = true;
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < n * 55 / 100; ++i) weak_ok[order[i]] = true;
  b.inputs.resize(n);
  std::vector<Label> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = i % 2 ? Label::VTVF : Label::NonVTVF;
    const double sign = labels[i] == Label::VTVF ? 1.0 : -1.0;
    auto& x = b.inputs[i];
    x.resize(pva::kSegmentSamples);
    for (auto& v : x) v = static_cast<float>(g(rng));
    x[0] = static_cast<float>((strong_ok[i] ? sign : -sign) * (1.0 + std::abs(g(rng))));
    x[1] = static_cast<float>((weak_ok[i] ? sign : -sign) * (1.0 + std::abs(g(rng))));
  }
  for (std::size_t i = 0; i < n; ++i) b.samples.push_back({b.inputs[i], labels[i]});
  const auto good = probe_model(0);
  const auto weak = probe_model(1);
  for (unsigned c = 0; c < pva::kPoolSize; ++c) b.pool.models.push_back(c == strong ? good : weak);
  b.pool.final_ce.assign(pva::kPoolSize, 0.0);
  b.pool.final_mmd.assign(pva::kPoolSize, 0.0);
  return b;
}

std::vector<pva::EventSegments> crafted_events(std::size_t events, std::size_t per_event,
                                               const std::vector<float>& levels,
                                               std::uint64_t seed) {
  std::vector<pva::EventSegments> out;
  std::size_t k = 0;
  double t = 0.0;
  for (std::size_t e = 0; e < events; ++e) {
    pva::EventSegments ev;
    ev.recording_id = "crafted";
    const Label truth = e % 2 ? Label::VTVF : Label::NonVTVF;
    ev.span = {t, t + per_event * pva::kSegmentSeconds, truth};
    for (std::size_t i = 0; i < per_event; ++i, ++k) {
      pva::Segment ecg, iegm;
      ecg.domain = pva::Domain::ECG;
      iegm.domain = pva::Domain::IEGM;
      ecg.samples = noise_segment(seed * 1000003 + 2 * k, 0.1);
      iegm.samples = noise_segment(seed * 1000003 + 2 * k + 1, 0.1);
      ecg.samples[0] = truth == Label::VTVF ? 1.0f : -1.0f;
      iegm.samples[0] = levels[k % levels.size()];
      ecg.label = iegm.label = truth;
      ecg.t_start = iegm.t_start = t;
      t += pva::kSegmentSeconds;
      ev.ecg.push_back(std::move(ecg));
      ev.iegm.push_back(std::move(iegm));
    }
    out.push_back(std::move(ev));
  }
  return out;
}

pva::CohortSpec small_cohort_spec() {
  using pva::RhythmClass;
  auto spec = [](RhythmClass r, double rate, double dur, pva::Morphology m, double qrs) {
    pva::RhythmSpec s;
    s.rhythm = r;
    s.rate_bpm = r == RhythmClass::VF ? 0.0 : rate;
    s.duration_s = dur;
    s.noise_level = 0.02;
    s.morphology = m;
    s.qrs_width_scale = qrs;
    return s;
  };
  const pva::Morphology pop{1.0, 0.1, 0.0}, pat{1.3, 0.35, 0.15};
  pva::CohortSpec c;
  c.name = "small";
  c.recordings.push_back({"popA", pva::Role::Population, 1,
                          {spec(RhythmClass::NSR, 72, 30, pop, 1.0), spec(RhythmClass::VT, 185, 30, pop, 1.0),
                           spec(RhythmClass::SVT, 165, 30, pop, 1.0)}});
  c.recordings.push_back({"popB", pva::Role::Population, 2,
                          {spec(RhythmClass::VF, 0, 30, pop, 1.05), spec(RhythmClass::NSR, 88, 30, pop, 1.05),
                           spec(RhythmClass::VT, 170, 30, pop, 1.05)}});
  c.recordings.push_back({"patA", pva::Role::Patient, 3,
                          {spec(RhythmClass::NSR, 80, 30, pat, 1.2), spec(RhythmClass::VT, 178, 30, pat, 1.2),
                           spec(RhythmClass::SVT, 172, 30, pat, 1.2), spec(RhythmClass::VF, 0, 30, pat, 1.2)}});
  return c;
}

pva::RunConfig tiny_config() {
  pva::RunConfig cfg;
  cfg.seed = 3;
  cfg.base_train = {0.01, 16, 0.9, 2, 0};
  cfg.ecg_finetune = {0.005, 16, 0.9, 1, 0};
  cfg.adapt.lambda_mmd = 1.0;
  cfg.adapt.train = {0.01, 16, 0.9, 1, 0};
  cfg.policy.train = {0.01, 4, 0.9, 1, 0};
  return cfg;
}

std::string source_path(const std::string& relative) {
  return std::string(PVA_SOURCE_DIR) + "/" + relative;
}

pva::RunConfig desk_config() { return pva::load_run_config(source_path("configs/desk.json")); }

}  // namespace fixture
