#pragma once

// Discrete-event simulation of the implant/wearable cooperative inference
// protocol: confidence-gated uploads, wearable-side resolution, latency and
// energy accounting, and threshold sweeps.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pva/adapt.hpp"
#include "pva/detect.hpp"
#include "pva/evalkit.hpp"
#include "pva/policy.hpp"
#include "pva/rhythm.hpp"

namespace pva {

struct CostModel {
  double l_imp_ms = 31.0;
  double l_up_ms = 50.0;
  double l_down_ms = 50.0;
  double l_wear_ecg_ms = 8.0;
  double l_policy_ms = 12.0;
  double l_wear_iegm_ms = 8.0;
  double e_imp_inf_mj = 0.1;
  double e_tx_mj = 2.0;
  double e_rx_mj = 0.5;

  void validate() const;
  // Added latency of one upload round trip.
  double upload_extra_ms(bool with_policy) const;
};

enum class ResolvedBy { Implant, WearableECG, WearablePolicy };
std::string_view to_string(ResolvedBy r);

struct ImplantStep {
  Prediction prediction;
  bool upload = false;
};

// Upload iff CS < T.
ImplantStep implantable_step(const nn::Model& iegm_model, std::span<const float> iegm_segment,
                             double threshold);

// Models deployed on the two nodes. Without a pool and policy the wearable
// answers from the ECG model alone.
struct DeployedModels {
  nn::Model ecg;
  nn::Model iegm;
  std::optional<CandidatePool> pool;
  std::optional<PolicyNet> policy;

  bool uses_policy() const { return pool.has_value() && policy.has_value(); }
  void validate() const;
};

struct WearableResult {
  Prediction prediction;
  ResolvedBy resolved_by = ResolvedBy::WearableECG;
};

// Higher CS wins; the ECG side wins a tie. Throws DataError when the two
// segments are not time-aligned.
WearableResult wearable_resolve(const Segment& ecg_segment, const Segment& iegm_segment,
                                const nn::Model& ecg_model, const CandidatePool* pool,
                                const PolicyNet* pnet);

struct SegmentOutcome {
  Prediction implant;     // CS_IN and the implant's own class
  Prediction prediction;  // final class fed to the shock evaluator
  bool uploaded = false;
  ResolvedBy resolved_by = ResolvedBy::Implant;
  double latency_ms = 0.0;
  double energy_mj = 0.0;
  std::size_t event = 0;  // index into SimTrace::events
  double t_start = 0.0;
};

struct SimTrace {
  double threshold = 0.0;
  CostModel costs;
  bool with_policy = false;
  std::vector<SegmentOutcome> outcomes;
  std::vector<EventDecision> events;
  std::vector<std::string> event_recordings;  // recording id per event

  std::size_t uploads() const;
  double upload_fraction() const;
  double mean_latency_ms() const;
  double total_energy_mj() const;
};

// Events are simulated in order; the shock evaluator restarts per event.
// Events with no segments are skipped.
SimTrace simulate_events(std::span<const EventSegments> events, const DeployedModels& models,
                         double threshold, const CostModel& costs = {});
// Downsamples to 125 Hz when needed, then groups by event.
SimTrace simulate_recording(const Recording& rec, const DeployedModels& models, double threshold,
                            const CostModel& costs = {});

// lo, lo+step, ... up to hi (inclusive, within 1e-9). All values in [0, 1].
std::vector<double> threshold_grid(double lo, double step, double hi);
// Parses "lo:step:hi".
std::vector<double> parse_threshold_grid(const std::string& text);

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SimTrace> traces;
  // First T after which accuracy moves by less than 0.005 per grid step.
  std::optional<double> plateau_threshold;
};

// Equivalent to one simulate_events per T; model outputs are computed once
// and shared across thresholds.
SweepResult sweep_threshold(std::span<const EventSegments> events, const DeployedModels& models,
                            std::span<const double> thresholds, const CostModel& costs = {});

std::optional<double> plateau_threshold(std::span<const SweepRow> rows, double tolerance = 0.005);

}  // namespace pva
