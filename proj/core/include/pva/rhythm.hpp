#pragma once

// Rhythm data model: paired ECG/IEGM recordings, the seeded synthetic
// generator, CSV ingestion, decimation, segmentation and the three-group
// personalization split.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pva {

// Class index convention shared by every model in the project.
enum class Label : std::uint8_t { NonVTVF = 0, VTVF = 1 };

enum class Domain : std::uint8_t { ECG, IEGM };

enum class RhythmClass : std::uint8_t { NSR, SVT, VT, VF };

inline constexpr double kSegmentRateHz = 125.0;
inline constexpr std::size_t kSegmentSamples = 250;  // 2 s at 125 Hz
inline constexpr double kSegmentSeconds = 2.0;
inline constexpr double kGeneratorRateHz = 250.0;
inline constexpr double kMinShockableEventSeconds = 8.0;

std::string_view to_string(Label label);
std::string_view to_string(RhythmClass rhythm);
std::string_view to_string(Domain domain);
Label label_from_string(std::string_view text);
RhythmClass rhythm_from_string(std::string_view text);
Label label_of(RhythmClass rhythm);

struct Waveform {
  std::vector<float> samples;  // mV
  double rate_hz = 0.0;

  double duration_s() const {
    return rate_hz > 0 ? static_cast<double>(samples.size()) / rate_hz : 0.0;
  }
  // Throws ValidationError / NumericError.
  void validate() const;

  bool operator==(const Waveform&) const = default;
};

struct EventSpan {
  double start_s = 0.0;
  double end_s = 0.0;
  Label label = Label::NonVTVF;

  double duration_s() const { return end_s - start_s; }
  bool contains(double t) const { return t >= start_s && t < end_s; }

  bool operator==(const EventSpan&) const = default;
};

struct Recording {
  std::string id;
  Waveform ecg;
  Waveform iegm;
  std::vector<double> beats;  // seconds, strictly increasing
  std::vector<EventSpan> events;

  double rate_hz() const { return ecg.rate_hz; }
  double duration_s() const { return ecg.duration_s(); }
  void validate() const;

  bool operator==(const Recording&) const = default;
};

// Parameters of the ECG -> IEGM transform.
struct Morphology {
  double amplitude_scale = 1.0;
  double sharpness = 0.0;  // 0 = ECG shape, 1 = pure derivative
  double baseline_offset = 0.0;
};

struct RhythmSpec {
  RhythmClass rhythm = RhythmClass::NSR;
  double rate_bpm = 75.0;  // ignored for VF
  double duration_s = 30.0;
  double noise_level = 0.02;  // mV, white-noise sigma
  Morphology morphology;
  double qrs_width_scale = 1.0;  // patient-specific QRS widening

  void validate() const;
};

// Deterministic in (specs, seed). Output is sampled at kGeneratorRateHz; one
// EventSpan per spec, laid end to end.
Recording generate_recording(std::span<const RhythmSpec> specs, std::uint64_t seed,
                             std::string id = "synthetic");

// Integer-factor decimation with a boxcar mean over each block.
Waveform downsample(const Waveform& w, double target_rate_hz);
Recording downsample(const Recording& rec, double target_rate_hz);

struct Segment {
  std::vector<float> samples;
  Domain domain = Domain::ECG;
  std::optional<Label> label;
  double t_start = 0.0;

  double midpoint() const { return t_start + kSegmentSeconds / 2.0; }
};

// Non-overlapping 2 s windows of a 125 Hz recording; labeled by the event span
// containing each window's midpoint.
std::vector<Segment> segment_recording(const Recording& rec, Domain domain);

// Time-aligned ECG/IEGM segments belonging to one event.
struct EventSegments {
  std::string recording_id;
  EventSpan span;
  std::vector<Segment> ecg;
  std::vector<Segment> iegm;

  std::size_t size() const { return iegm.size(); }
};

// Segments the recording (125 Hz) in both domains and groups them by event.
// Events with no segment midpoint inside them come back empty.
std::vector<EventSegments> group_by_event(const Recording& rec);

struct PersonalizationSplit {
  std::array<std::vector<EventSegments>, 3> groups;
  std::vector<std::size_t> skipped;  // input indices with fewer than 3 segments
};

// Cuts every event into three contiguous thirds (remainder to the earlier
// thirds); group i collects the i-th third of each event.
PersonalizationSplit split_personalization(std::span<const EventSegments> events);

// Slice [first, first+count) of an event as a new EventSegments whose span
// covers only those segments.
EventSegments slice_event(const EventSegments& ev, std::size_t first, std::size_t count);

void write_recording_csv(const Recording& rec, const std::filesystem::path& path);
// Non-fatal oddities (missing optional sections) are appended to `warnings`.
Recording load_recording_csv(const std::filesystem::path& path,
                             std::vector<std::string>* warnings = nullptr);

}  // namespace pva
