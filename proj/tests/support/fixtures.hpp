#pragma once

// Shared test data: crafted models, crafted segment sets and small cohorts.

#include <cstdint>
#include <string>
#include <vector>

#include "pva/pipeline.hpp"

namespace fixture {

std::vector<float> noise_segment(std::uint64_t seed, double sigma = 1.0);

// FC(250 -> 2) whose VT/VF logit is +gain * x[feature] and whose NonVTVF
// logit is the negation, so CS = |tanh(gain * x[feature])|.
pva::nn::Model probe_model(std::size_t feature, float gain = 4.0f);

// 2-candidate bandit: pool[strong] reads x[0], which agrees with the label
// on 95% of the set; every other slot reads x[1], which agrees on 55%.
struct Bandit {
  std::vector<std::vector<float>> inputs;
  std::vector<pva::PolicySample> samples;
  pva::CandidatePool pool;
  unsigned strong = 21;
};
Bandit make_bandit(std::uint64_t seed, std::size_t n = 200, unsigned strong = 21);

// Events of `per_event` aligned ECG/IEGM segments. IEGM sample 0 is
// `level[i]` for segment i (cycling), so a probe_model(0) implant sees a
// chosen CS per segment.
std::vector<pva::EventSegments> crafted_events(std::size_t events, std::size_t per_event,
                                               const std::vector<float>& levels,
                                               std::uint64_t seed);

// A small cohort: two population recordings and one patient recording.
pva::CohortSpec small_cohort_spec();

// One epoch per stage; for plumbing tests only.
pva::RunConfig tiny_config();

// configs/desk.json from the source tree.
pva::RunConfig desk_config();
std::string source_path(const std::string& relative);

}  // namespace fixture
