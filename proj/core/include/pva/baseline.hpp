#pragma once

// Single-chamber rate-zone discriminator and a simple R-peak detector.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pva/detect.hpp"
#include "pva/rhythm.hpp"

namespace pva {

enum class RateZone { None, VT, VF };

struct ClassicConfig {
  double vt_lo_bpm = 160.0;  // VT zone is [vt_lo, vf_lo]
  double vf_lo_bpm = 200.0;  // VF zone is (vf_lo, inf)
  std::size_t window = 10;   // most recent R-R intervals averaged
  std::size_t confirm = 4;   // consecutive in-zone updates to shock
  double stale_timeout_s = 3.0;

  void validate() const;
};

RateZone zone_for_bpm(double bpm, const ClassicConfig& cfg = {});

// bpm = 60 / mean of the last `cfg.window` intervals. Empty input -> None.
RateZone classify_zone(std::span<const double> rr_intervals_s, const ClassicConfig& cfg = {});
double mean_bpm(std::span<const double> rr_intervals_s, std::size_t window = 10);

struct ClassicDecision {
  EventDecision decision;
  bool insufficient = false;  // fewer than two sensed beats in the event
  std::optional<double> shock_time_s;
};

// Slides over the beats inside `event`; every new interval is one window
// update, and every stale_timeout_s without a beat is a forced VF-zone update.
ClassicDecision classic_detect(std::span<const double> beats_s, const EventSpan& event,
                               const ClassicConfig& cfg = {});

// Local maxima above 0.6 x the centred 2 s rolling max, 200 ms refractory.
std::vector<double> detect_r_peaks(const Waveform& w);

}  // namespace pva
