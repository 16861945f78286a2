#include "pva/coopsim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pva/error.hpp"

namespace pva {

namespace {

void require_nonneg(double v, const char* name) {
  if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError(std::string(name) + " must be >= 0");
}

// Model outputs per non-empty event, shared between thresholds. Wearable
// answers are computed on first use.
struct Precomputed {
  std::vector<const EventSegments*> events;
  std::vector<std::vector<Prediction>> implant;
  std::vector<std::vector<std::optional<WearableResult>>> wearable;
};

Precomputed precompute(std::span<const EventSegments> events, const DeployedModels& models) {
  Precomputed p;
  for (const auto& ev : events) {
    if (ev.iegm.empty()) continue;
    if (ev.ecg.size() != ev.iegm.size())
      throw DataError("event in " + ev.recording_id + ": ECG and IEGM segment counts differ");
    p.events.push_back(&ev);
    std::vector<Prediction> preds;
    preds.reserve(ev.iegm.size());
    for (const auto& s : ev.iegm) preds.push_back(infer_with_confidence(models.iegm, s.samples));
    p.implant.push_back(std::move(preds));
    p.wearable.emplace_back(ev.iegm.size());
  }
  return p;
}

SimTrace compose(Precomputed& p, const DeployedModels& models, double threshold,
                 const CostModel& costs) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ValidationError("threshold T must be in [0, 1]");
  costs.validate();
  SimTrace t;
  t.threshold = threshold;
  t.costs = costs;
  t.with_policy = models.uses_policy();
  const CandidatePool* pool = t.with_policy ? &*models.pool : nullptr;
  const PolicyNet* pnet = t.with_policy ? &*models.policy : nullptr;
  const double extra = costs.upload_extra_ms(t.with_policy);

  for (std::size_t e = 0; e < p.events.size(); ++e) {
    const auto& ev = *p.events[e];
    ShockEvaluator evaluator;
    EventDecision decision;
    decision.truth = ev.span.label;
    for (std::size_t i = 0; i < ev.iegm.size(); ++i) {
      SegmentOutcome o;
      o.event = e;
      o.t_start = ev.iegm[i].t_start;
      o.implant = p.implant[e][i];
      o.uploaded = o.implant.cs < threshold;
      o.latency_ms = costs.l_imp_ms;
      o.energy_mj = costs.e_imp_inf_mj;
      if (o.uploaded) {
        auto& slot = p.wearable[e][i];
        if (!slot) slot = wearable_resolve(ev.ecg[i], ev.iegm[i], models.ecg, pool, pnet);
        o.prediction = slot->prediction;
        o.resolved_by = slot->resolved_by;
        o.latency_ms += extra;
        o.energy_mj += costs.e_tx_mj + costs.e_rx_mj;
      } else {
        o.prediction = o.implant;
        o.resolved_by = ResolvedBy::Implant;
      }
      if (evaluator.push(o.prediction.klass) && !decision.shocked) {
        decision.shocked = true;
        decision.shock_segment_index = i;
      }
      t.outcomes.push_back(o);
    }
    t.events.push_back(decision);
    t.event_recordings.push_back(ev.recording_id);
  }
  return t;
}

}  // namespace

void CostModel::validate() const {
  require_nonneg(l_imp_ms, "l_imp_ms");
  require_nonneg(l_up_ms, "l_up_ms");
  require_nonneg(l_down_ms, "l_down_ms");
  require_nonneg(l_wear_ecg_ms, "l_wear_ecg_ms");
  require_nonneg(l_policy_ms, "l_policy_ms");
  require_nonneg(l_wear_iegm_ms, "l_wear_iegm_ms");
  require_nonneg(e_imp_inf_mj, "e_imp_inf_mj");
  require_nonneg(e_tx_mj, "e_tx_mj");
  require_nonneg(e_rx_mj, "e_rx_mj");
}

double CostModel::upload_extra_ms(bool with_policy) const {
  if (!with_policy) return l_up_ms + l_wear_ecg_ms + l_down_ms;
  return l_up_ms + l_policy_ms + std::max(l_wear_ecg_ms, l_wear_iegm_ms) + l_down_ms;
}

std::string_view to_string(ResolvedBy r) {
  switch (r) {
    case ResolvedBy::Implant: return "implant";
    case ResolvedBy::WearableECG: return "wearable_ecg";
    case ResolvedBy::WearablePolicy: return "wearable_policy";
  }
  return "?";
}

ImplantStep implantable_step(const nn::Model& iegm_model, std::span<const float> iegm_segment,
                             double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ValidationError("threshold T must be in [0, 1]");
  ImplantStep s;
  s.prediction = infer_with_confidence(iegm_model, iegm_segment);
  s.upload = s.prediction.cs < threshold;
  return s;
}

void DeployedModels::validate() const {
  ecg.validate(kSegmentSamples);
  iegm.validate(kSegmentSamples);
  if (pool.has_value() != policy.has_value())
    throw ValidationError("pool and policy must be deployed together");
  if (pool) pool->validate();
  if (policy) policy->validate();
}

WearableResult wearable_resolve(const Segment& ecg_segment, const Segment& iegm_segment,
                                const nn::Model& ecg_model, const CandidatePool* pool,
                                const PolicyNet* pnet) {
  if (ecg_segment.domain != Domain::ECG || iegm_segment.domain != Domain::IEGM)
    throw DataError("wearable_resolve: expected one ECG and one IEGM segment");
  if (std::abs(ecg_segment.t_start - iegm_segment.t_start) > 1e-9)
    throw DataError("wearable_resolve: no ECG segment aligned with IEGM segment at t=" +
                    std::to_string(iegm_segment.t_start));
  WearableResult r;
  r.prediction = infer_with_confidence(ecg_model, ecg_segment.samples);
  r.resolved_by = ResolvedBy::WearableECG;
  if (pool && pnet) {
    const unsigned c = select_candidate(*pnet, iegm_segment.samples);
    const Prediction pl = infer_with_confidence((*pool)[c], iegm_segment.samples);
    if (pl.cs > r.prediction.cs) {
      r.prediction = pl;
      r.resolved_by = ResolvedBy::WearablePolicy;
    }
  }
  return r;
}

std::size_t SimTrace::uploads() const {
  return static_cast<std::size_t>(
      std::count_if(outcomes.begin(), outcomes.end(), [](const auto& o) { return o.uploaded; }));
}

double SimTrace::upload_fraction() const {
  if (outcomes.empty()) return 0.0;
  return static_cast<double>(uploads()) / static_cast<double>(outcomes.size());
}

double SimTrace::mean_latency_ms() const {
  if (outcomes.empty()) return 0.0;
  double s = 0.0;
  for (const auto& o : outcomes) s += o.latency_ms;
  return s / static_cast<double>(outcomes.size());
}

double SimTrace::total_energy_mj() const {
  double s = 0.0;
  for (const auto& o : outcomes) s += o.energy_mj;
  return s;
}

SimTrace simulate_events(std::span<const EventSegments> events, const DeployedModels& models,
                         double threshold, const CostModel& costs) {
  auto pre = precompute(events, models);
  return compose(pre, models, threshold, costs);
}

SimTrace simulate_recording(const Recording& rec, const DeployedModels& models, double threshold,
                            const CostModel& costs) {
  const Recording r = rec.rate_hz() == kSegmentRateHz ? rec : downsample(rec, kSegmentRateHz);
  const auto events = group_by_event(r);
  return simulate_events(events, models, threshold, costs);
}

std::vector<double> threshold_grid(double lo, double step, double hi) {
  if (!(lo >= 0.0 && hi <= 1.0 && lo <= hi)) throw ValidationError("threshold grid must lie in [0, 1]");
  if (!(step > 0.0)) throw ValidationError("threshold grid step must be > 0");
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> ts(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = lo + static_cast<double>(i) * step;
    // Snap 0.30000000000000004 and friends to the decimal the user typed.
    v = std::round(v * 1e9) / 1e9;
    ts[i] = std::min(v, hi);
  }
  return ts;
}

std::vector<double> parse_threshold_grid(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ValidationError("bad threshold grid '" + text + "', expected lo:step:hi");
    }
  }
  if (parts.size() != 3) throw ValidationError("bad threshold grid '" + text + "', expected lo:step:hi");
  return threshold_grid(parts[0], parts[1], parts[2]);
}

std::optional<double> plateau_threshold(std::span<const SweepRow> rows, double tolerance) {
  if (rows.empty()) return std::nullopt;
  for (const auto& r : rows)
    if (!r.metrics.acc) return std::nullopt;
  std::size_t start = rows.size() - 1;
  while (start > 0 && std::abs(*rows[start].metrics.acc - *rows[start - 1].metrics.acc) < tolerance)
    --start;
  return rows[start].threshold;
}

SweepResult sweep_threshold(std::span<const EventSegments> events, const DeployedModels& models,
                            std::span<const double> thresholds, const CostModel& costs) {
  if (thresholds.empty()) throw ValidationError("empty threshold grid");
  if (!std::is_sorted(thresholds.begin(), thresholds.end()))
    throw ValidationError("threshold grid must be sorted");
  auto pre = precompute(events, models);
  SweepResult res;
  for (double t : thresholds) {
    SimTrace trace = compose(pre, models, t, costs);
    SweepRow row;
    row.threshold = t;
    row.upload_frac = trace.upload_fraction();
    row.mean_latency_ms = trace.mean_latency_ms();
    row.total_energy_mj = trace.total_energy_mj();
    row.metrics = metrics(event_confusion(trace.events));
    res.rows.push_back(row);
    res.traces.push_back(std::move(trace));
  }
  res.plateau_threshold = plateau_threshold(res.rows);
  return res;
}

}  // namespace pva
