#include "pva/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "pva/error.hpp"

namespace pva {

void ClassicConfig::validate() const {
  if (!(vt_lo_bpm > 0) || !(vf_lo_bpm >= vt_lo_bpm))
    throw ValidationError("classic zones need 0 < vt_lo <= vf_lo");
  if (window < 1 || confirm < 1) throw ValidationError("classic window/confirm must be >= 1");
  if (!(stale_timeout_s > 0)) throw ValidationError("stale timeout must be > 0");
}

RateZone zone_for_bpm(double bpm, const ClassicConfig& cfg) {
  if (bpm > cfg.vf_lo_bpm) return RateZone::VF;
  if (bpm >= cfg.vt_lo_bpm) return RateZone::VT;
  return RateZone::None;
}

double mean_bpm(std::span<const double> rr, std::size_t window) {
  if (rr.empty()) return 0.0;
  const std::size_t n = std::min(window, rr.size());
  double sum = 0.0;
  for (std::size_t i = rr.size() - n; i < rr.size(); ++i) {
    if (!(rr[i] > 0)) throw ValidationError("R-R intervals must be positive");
    sum += rr[i];
  }
  return 60.0 / (sum / static_cast<double>(n));
}

RateZone classify_zone(std::span<const double> rr, const ClassicConfig& cfg) {
  if (rr.empty()) return RateZone::None;
  return zone_for_bpm(mean_bpm(rr, cfg.window), cfg);
}

ClassicDecision classic_detect(std::span<const double> beats_s, const EventSpan& event,
                               const ClassicConfig& cfg) {
  cfg.validate();
  if (!std::is_sorted(beats_s.begin(), beats_s.end()))
    throw ValidationError("beat timestamps must be sorted");

  std::vector<double> beats;
  for (double b : beats_s)
    if (event.contains(b)) beats.push_back(b);

  ClassicDecision out;
  out.decision.truth = event.label;
  out.insufficient = beats.size() < 2;

  std::vector<double> intervals;
  std::size_t run = 0;
  auto vote = [&](RateZone zone, double t) {
    run = zone == RateZone::None ? 0 : run + 1;
    if (run >= cfg.confirm && !out.decision.shocked) {
      out.decision.shocked = true;
      out.shock_time_s = t;
      const auto idx = static_cast<std::size_t>(std::floor((t - event.start_s) / kSegmentSeconds));
      out.decision.shock_segment_index = idx;
    }
  };
  auto stale_votes = [&](double anchor, double until) {
    for (double t = anchor + cfg.stale_timeout_s; t < until; t += cfg.stale_timeout_s)
      vote(RateZone::VF, t);
  };

  double anchor = event.start_s;
  for (std::size_t i = 0; i < beats.size(); ++i) {
    stale_votes(anchor, beats[i]);
    if (i > 0) {
      intervals.push_back(beats[i] - beats[i - 1]);
      vote(classify_zone(intervals, cfg), beats[i]);
    }
    anchor = beats[i];
  }
  stale_votes(anchor, event.end_s);
  return out;
}

std::vector<double> detect_r_peaks(const Waveform& w) {
  if (w.rate_hz != kSegmentRateHz) throw ValidationError("detect_r_peaks requires 125 Hz input");
  const auto& x = w.samples;
  const std::size_t n = x.size();
  if (n == 0) return {};
  const auto half = static_cast<std::size_t>(w.rate_hz);  // +-1 s
  const auto refractory = static_cast<std::size_t>(std::lround(0.2 * w.rate_hz));

  // Sliding maximum over [i - half, i + half].
  std::vector<float> roll(n);
  std::deque<std::size_t> dq;
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t hi = std::min(n - 1, i + half);
    while (next <= hi) {
      while (!dq.empty() && x[dq.back()] <= x[next]) dq.pop_back();
      dq.push_back(next++);
    }
    const std::size_t lo = i >= half ? i - half : 0;
    while (dq.front() < lo) dq.pop_front();
    roll[i] = x[dq.front()];
  }

  std::vector<double> peaks;
  std::optional<std::size_t> last;
  for (std::size_t i = 0; i < n; ++i) {
    const bool local_max = (i == 0 || x[i] > x[i - 1]) && (i + 1 == n || x[i] >= x[i + 1]);
    if (!local_max || !(x[i] > 0.0f) || !(x[i] > 0.6f * roll[i])) continue;
    if (last && i - *last < refractory) continue;
    peaks.push_back(static_cast<double>(i) / w.rate_hz);
    last = i;
  }
  return peaks;
}

}  // namespace pva
