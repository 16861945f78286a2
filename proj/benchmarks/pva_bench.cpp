#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pva/adapt.hpp"
#include "pva/coopsim.hpp"
#include "pva/detect.hpp"
#include "pva/policy.hpp"

namespace {

using namespace pva;

std::vector<float> noise(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> x(kSegmentSamples);
  for (auto& v : x) v = g(rng);
  return x;
}

void BM_DetectorForward(benchmark::State& state) {
  const auto m = make_detector(1);
  const auto x = noise(2);
  nn::ForwardCache cache;
  for (auto _ : state) benchmark::DoNotOptimize(nn::forward(m, x, cache).data());
}
BENCHMARK(BM_DetectorForward);

void BM_DetectorBackward(benchmark::State& state) {
  const auto m = make_detector(1);
  const auto x = noise(3);
  nn::ForwardCache cache;
  nn::forward(m, x, cache);
  for (auto _ : state) {
    auto g = nn::backward(m, cache, 1, nn::FreezeMask::all_fine_tune());
    benchmark::DoNotOptimize(g.layers.data());
  }
}
BENCHMARK(BM_DetectorBackward);

void BM_InferWithConfidence(benchmark::State& state) {
  const auto m = make_detector(1);
  const auto x = noise(4);
  for (auto _ : state) benchmark::DoNotOptimize(infer_with_confidence(m, x).cs);
}
BENCHMARK(BM_InferWithConfidence);

void BM_PolicyForward(benchmark::State& state) {
  const auto p = PolicyNet::make(1);
  const auto x = noise(5);
  PolicyCache cache;
  for (auto _ : state) benchmark::DoNotOptimize(policy_forward(p, x, cache)[0]);
}
BENCHMARK(BM_PolicyForward);

void BM_PolicyBackward(benchmark::State& state) {
  const auto p = PolicyNet::make(1);
  const auto x = noise(6);
  PolicyCache cache;
  const auto probs = policy_forward(p, x, cache);
  const auto d = dlogpi_dx(probs, threshold_action(probs));
  for (auto _ : state) {
    auto g = nn::Gradients::zeros_like(p.model);
    policy_backward(p, cache, d, g);
    benchmark::DoNotOptimize(g.layers.data());
  }
}
BENCHMARK(BM_PolicyBackward);

void BM_Mmd2(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  Points x(n, std::vector<double>(20)), y(n, std::vector<double>(20));
  for (auto& v : x)
    for (auto& c : v) c = g(rng);
  for (auto& v : y)
    for (auto& c : v) c = g(rng) + 0.3;
  for (auto _ : state) benchmark::DoNotOptimize(mmd2(x, y));
}
BENCHMARK(BM_Mmd2)->Arg(32)->Arg(128);

// Sweep over 11 thresholds; events of 15 segments with random IEGM/ECG.
void BM_Sweep(benchmark::State& state) {
  const auto n_events = static_cast<std::size_t>(state.range(0));
  std::vector<EventSegments> events(n_events);
  std::uint64_t seed = 100;
  for (std::size_t e = 0; e < n_events; ++e) {
    auto& ev = events[e];
    ev.recording_id = "bench";
    ev.span = {e * 30.0, e * 30.0 + 30.0, e % 2 ? Label::VTVF : Label::NonVTVF};
    for (std::size_t k = 0; k < 15; ++k) {
      const double t = ev.span.start_s + 2.0 * k;
      ev.ecg.push_back({noise(seed++), Domain::ECG, ev.span.label, t});
      ev.iegm.push_back({noise(seed++), Domain::IEGM, ev.span.label, t});
    }
  }
  DeployedModels models;
  models.ecg = make_detector(1);
  models.iegm = make_detector(2);
  models.pool = replicate_pool(make_detector(3));
  models.policy = PolicyNet::make(4);
  const auto grid = threshold_grid(0.0, 0.1, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(sweep_threshold(events, models, grid).rows.size());
}
BENCHMARK(BM_Sweep)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
