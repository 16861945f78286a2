#include "pva/rhythm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "pva/error.hpp"

namespace pva {

namespace {

std::string fmt_double(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent generator streams derived from one seed.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) {
  return std::mt19937_64(splitmix64(seed ^ splitmix64(id + 1)));
}

struct Wave {
  double amplitude;
  double offset_s;  // relative to the R time
  double width_s;
};

double gauss(double t, const Wave& w) {
  const double z = (t - w.offset_s) / w.width_s;
  return w.amplitude * std::exp(-0.5 * z * z);
}

// Beat template components for a periodic rhythm.
std::vector<Wave> beat_waves(RhythmClass rhythm, double rr_s, double width_scale) {
  const double w = width_scale;
  const double t_pos = std::sqrt(rr_s);
  switch (rhythm) {
    case RhythmClass::NSR:
      return {{0.12, -0.16 * t_pos, 0.022},
              {-0.12, -0.028 * w, 0.008 * w},
              {1.0, 0.0, 0.011 * w},
              {-0.25, 0.03 * w, 0.009 * w},
              {0.3, 0.28 * t_pos, 0.045}};
    case RhythmClass::SVT:
      return {{-0.12, -0.028 * w, 0.008 * w},
              {1.0, 0.0, 0.011 * w},
              {-0.25, 0.03 * w, 0.009 * w},
              {0.2, 0.2 * t_pos, 0.035}};
    case RhythmClass::VT:
      return {{1.1, 0.0, 0.032 * w},
              {-0.7, 0.075 * w, 0.035 * w},
              {-0.25, 0.2 * t_pos + 0.05, 0.05}};
    case RhythmClass::VF:
      break;
  }
  return {};
}

double rr_jitter(RhythmClass rhythm) {
  return rhythm == RhythmClass::NSR ? 0.02 : 0.01;
}

bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
    text.remove_suffix(1);
  if (text.empty()) return false;
  // from_chars rejects a leading '+'; accept it for hand-written files.
  if (text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = line.find(',', pos);
    if (next == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view to_string(Label label) {
  return label == Label::VTVF ? "VTVF" : "NONVTVF";
}

std::string_view to_string(RhythmClass rhythm) {
  switch (rhythm) {
    case RhythmClass::NSR: return "NSR";
    case RhythmClass::SVT: return "SVT";
    case RhythmClass::VT: return "VT";
    case RhythmClass::VF: return "VF";
  }
  return "?";
}

std::string_view to_string(Domain domain) {
  return domain == Domain::ECG ? "ECG" : "IEGM";
}

Label label_from_string(std::string_view text) {
  text = trim(text);
  if (text == "VTVF") return Label::VTVF;
  if (text == "NONVTVF" || text == "NonVTVF") return Label::NonVTVF;
  throw ValidationError("unknown event label '" + std::string(text) + "'");
}

RhythmClass rhythm_from_string(std::string_view text) {
  if (text == "NSR") return RhythmClass::NSR;
  if (text == "SVT") return RhythmClass::SVT;
  if (text == "VT") return RhythmClass::VT;
  if (text == "VF") return RhythmClass::VF;
  throw ValidationError("unknown rhythm class '" + std::string(text) + "'");
}

Label label_of(RhythmClass rhythm) {
  return (rhythm == RhythmClass::VT || rhythm == RhythmClass::VF) ? Label::VTVF
                                                                  : Label::NonVTVF;
}

void Waveform::validate() const {
  if (!(rate_hz > 0) || !std::isfinite(rate_hz))
    throw ValidationError("waveform rate must be positive");
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (!std::isfinite(samples[i]))
      throw NumericError("non-finite sample at index " + std::to_string(i));
}

void Recording::validate() const {
  ecg.validate();
  iegm.validate();
  if (ecg.rate_hz != iegm.rate_hz) throw ValidationError("ecg/iegm rate mismatch");
  if (ecg.samples.size() != iegm.samples.size())
    throw ValidationError("ecg/iegm length mismatch");
  for (std::size_t i = 1; i < beats.size(); ++i)
    if (!(beats[i] > beats[i - 1])) throw ValidationError("beats not strictly increasing");
  const double dur = duration_s();
  double prev_end = 0.0;
  for (const auto& ev : events) {
    if (!(ev.end_s > ev.start_s)) throw ValidationError("event with end <= start");
    if (ev.start_s < prev_end - 1e-9) throw ValidationError("events overlap or are unordered");
    if (ev.start_s < -1e-9 || ev.end_s > dur + 1e-6) throw ValidationError("event out of range");
    prev_end = ev.end_s;
  }
}

void RhythmSpec::validate() const {
  if (!(duration_s > 0) || !std::isfinite(duration_s))
    throw ValidationError("rhythm duration must be positive");
  if (!(noise_level >= 0) || !std::isfinite(noise_level))
    throw ValidationError("noise level must be non-negative");
  if (!(qrs_width_scale > 0)) throw ValidationError("qrs width scale must be positive");
  double lo = 0, hi = 0;
  switch (rhythm) {
    case RhythmClass::NSR: lo = 60; hi = 100; break;
    case RhythmClass::SVT: lo = 150; hi = 190; break;
    case RhythmClass::VT: lo = 160; hi = 220; break;
    case RhythmClass::VF: break;
  }
  if (rhythm != RhythmClass::VF && !(rate_bpm >= lo && rate_bpm <= hi))
    throw ValidationError(std::string(to_string(rhythm)) + " rate " + fmt_double("%g", rate_bpm) +
                          " bpm outside [" + fmt_double("%g", lo) + ", " + fmt_double("%g", hi) +
                          "]");
  if (label_of(rhythm) == Label::VTVF && duration_s < kMinShockableEventSeconds)
    throw ValidationError("VT/VF spans must last at least 8 s");
}

Recording generate_recording(std::span<const RhythmSpec> specs, std::uint64_t seed,
                             std::string id) {
  if (specs.empty()) throw ValidationError("generate_recording: no rhythm specs");
  for (const auto& s : specs) s.validate();

  const double fs = kGeneratorRateHz;
  double total = 0;
  std::vector<double> starts;
  for (const auto& s : specs) {
    starts.push_back(total);
    total += s.duration_s;
  }
  const auto n = static_cast<std::size_t>(std::llround(total * fs));

  auto beat_rng = stream(seed, 0);
  auto ecg_noise_rng = stream(seed, 1);
  auto iegm_noise_rng = stream(seed, 2);
  auto vf_rng = stream(seed, 3);
  std::normal_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  std::vector<double> clean(n, 0.0);
  std::vector<double> beats;
  std::vector<std::size_t> spec_of_sample(n, 0);

  double last_beat = -1.0;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const auto& spec = specs[k];
    const double begin = starts[k];
    const double end = begin + spec.duration_s;
    const auto i0 = static_cast<std::size_t>(std::llround(begin * fs));
    const auto i1 = std::min(n, static_cast<std::size_t>(std::llround(end * fs)));
    for (std::size_t i = i0; i < i1; ++i) spec_of_sample[i] = k;

    if (spec.rhythm == RhythmClass::VF) {
      // Band-limited 4-7 Hz activity with slow amplitude modulation.
      constexpr int kTones = 6;
      std::array<double, kTones> freq{}, phase{}, amp{};
      for (int j = 0; j < kTones; ++j) {
        freq[j] = 4.0 + 3.0 * uniform(vf_rng);
        phase[j] = 2 * std::numbers::pi * uniform(vf_rng);
        amp[j] = 0.5 + 0.5 * uniform(vf_rng);
      }
      const double mod_f = 0.2 + 0.3 * uniform(vf_rng);
      const double mod_phase = 2 * std::numbers::pi * uniform(vf_rng);
      const double gain = 0.9 / std::sqrt(static_cast<double>(kTones));
      for (std::size_t i = i0; i < i1; ++i) {
        const double t = static_cast<double>(i) / fs;
        double v = 0;
        for (int j = 0; j < kTones; ++j)
          v += amp[j] * std::sin(2 * std::numbers::pi * freq[j] * t + phase[j]);
        const double env = 0.6 + 0.4 * std::sin(2 * std::numbers::pi * mod_f * t + mod_phase);
        clean[i] += gain * env * v;
      }
      last_beat = -1.0;
      continue;
    }

    const double rr_mean = 60.0 / spec.rate_bpm;
    double t = last_beat < 0 ? begin + rr_mean / 2.0 : last_beat + rr_mean;
    if (t < begin) t = begin + rr_mean / 2.0;
    while (t < end) {
      beats.push_back(t);
      const double gain = 1.0 + 0.05 * unit(beat_rng);
      const auto waves = beat_waves(spec.rhythm, rr_mean, spec.qrs_width_scale);
      const auto lo = static_cast<std::ptrdiff_t>(std::floor((t - 0.35) * fs));
      const auto hi = static_cast<std::ptrdiff_t>(std::ceil((t + 0.55) * fs));
      for (auto i = std::max<std::ptrdiff_t>(lo, 0);
           i <= hi && i < static_cast<std::ptrdiff_t>(n); ++i) {
        const double tau = static_cast<double>(i) / fs - t;
        double v = 0;
        for (const auto& w : waves) v += gauss(tau, w);
        clean[static_cast<std::size_t>(i)] += gain * v;
      }
      last_beat = t;
      double rr = rr_mean * (1.0 + rr_jitter(spec.rhythm) * unit(beat_rng));
      rr = std::clamp(rr, 0.9 * rr_mean, 1.1 * rr_mean);
      t += rr;
    }
  }

  Recording rec;
  rec.id = std::move(id);
  rec.ecg.rate_hz = fs;
  rec.iegm.rate_hz = fs;
  rec.ecg.samples.resize(n);
  rec.iegm.samples.resize(n);

  // Derivative scaled so a unit R wave keeps roughly unit amplitude.
  constexpr double kDerivTau = 0.02;
  const double wander_phase_e = 2 * std::numbers::pi * uniform(ecg_noise_rng);
  const double wander_phase_i = 2 * std::numbers::pi * uniform(iegm_noise_rng);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& spec = specs[spec_of_sample[i]];
    const double t = static_cast<double>(i) / fs;
    const double sigma = spec.noise_level;
    const double ecg = clean[i] + sigma * unit(ecg_noise_rng) +
                       0.5 * sigma * std::sin(2 * std::numbers::pi * 0.25 * t + wander_phase_e);
    const double prev = clean[i > 0 ? i - 1 : i];
    const double next = clean[i + 1 < n ? i + 1 : i];
    const double deriv = (next - prev) * fs / 2.0 * kDerivTau;
    const auto& m = spec.morphology;
    const double shaped = (1.0 - m.sharpness) * clean[i] + m.sharpness * deriv;
    const double iegm = m.amplitude_scale * shaped + m.baseline_offset +
                        sigma * unit(iegm_noise_rng) +
                        0.5 * sigma * std::sin(2 * std::numbers::pi * 0.2 * t + wander_phase_i);
    rec.ecg.samples[i] = static_cast<float>(ecg);
    rec.iegm.samples[i] = static_cast<float>(iegm);
  }

  rec.beats = std::move(beats);
  for (std::size_t k = 0; k < specs.size(); ++k)
    rec.events.push_back({starts[k], starts[k] + specs[k].duration_s, label_of(specs[k].rhythm)});
  return rec;
}

Waveform downsample(const Waveform& w, double target_rate_hz) {
  if (!(target_rate_hz > 0)) throw ValidationError("target rate must be positive");
  const double ratio = w.rate_hz / target_rate_hz;
  const double factor_d = std::round(ratio);
  if (factor_d < 1 || std::abs(ratio - factor_d) > 1e-9)
    throw ValidationError("unsupported rate: " + fmt_double("%g", w.rate_hz) + " Hz is not an " +
                          "integer multiple of " + fmt_double("%g", target_rate_hz) + " Hz");
  const auto factor = static_cast<std::size_t>(factor_d);
  Waveform out;
  out.rate_hz = target_rate_hz;
  if (factor == 1) {
    out.samples = w.samples;
    return out;
  }
  const std::size_t m = w.samples.size() / factor;
  out.samples.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < factor; ++j) acc += w.samples[i * factor + j];
    out.samples[i] = static_cast<float>(acc / static_cast<double>(factor));
  }
  return out;
}

Recording downsample(const Recording& rec, double target_rate_hz) {
  Recording out = rec;
  out.ecg = downsample(rec.ecg, target_rate_hz);
  out.iegm = downsample(rec.iegm, target_rate_hz);
  return out;
}

std::vector<Segment> segment_recording(const Recording& rec, Domain domain) {
  if (rec.rate_hz() != kSegmentRateHz)
    throw ValidationError("segment_recording requires a 125 Hz recording, got " +
                          fmt_double("%g", rec.rate_hz()) + " Hz");
  const auto& w = domain == Domain::ECG ? rec.ecg : rec.iegm;
  const std::size_t count = w.samples.size() / kSegmentSamples;
  std::vector<Segment> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Segment seg;
    seg.domain = domain;
    seg.t_start = static_cast<double>(s) * kSegmentSeconds;
    const auto first = w.samples.begin() + static_cast<std::ptrdiff_t>(s * kSegmentSamples);
    seg.samples.assign(first, first + static_cast<std::ptrdiff_t>(kSegmentSamples));
    const double mid = seg.midpoint();
    for (const auto& ev : rec.events)
      if (ev.contains(mid)) {
        seg.label = ev.label;
        break;
      }
    out.push_back(std::move(seg));
  }
  return out;
}

std::vector<EventSegments> group_by_event(const Recording& rec) {
  const auto ecg = segment_recording(rec, Domain::ECG);
  const auto iegm = segment_recording(rec, Domain::IEGM);
  std::vector<EventSegments> out;
  out.reserve(rec.events.size());
  for (const auto& ev : rec.events) {
    EventSegments es;
    es.recording_id = rec.id;
    es.span = ev;
    for (std::size_t i = 0; i < ecg.size(); ++i)
      if (ev.contains(ecg[i].midpoint())) {
        es.ecg.push_back(ecg[i]);
        es.iegm.push_back(iegm[i]);
      }
    out.push_back(std::move(es));
  }
  return out;
}

EventSegments slice_event(const EventSegments& ev, std::size_t first, std::size_t count) {
  if (first + count > ev.size()) throw DataError("slice_event: range out of bounds");
  EventSegments out;
  out.recording_id = ev.recording_id;
  out.span.label = ev.span.label;
  const auto b = static_cast<std::ptrdiff_t>(first);
  const auto e = static_cast<std::ptrdiff_t>(first + count);
  out.ecg.assign(ev.ecg.begin() + b, ev.ecg.begin() + e);
  out.iegm.assign(ev.iegm.begin() + b, ev.iegm.begin() + e);
  if (count > 0) {
    out.span.start_s = out.iegm.front().t_start;
    out.span.end_s = out.iegm.back().t_start + kSegmentSeconds;
  } else {
    out.span.start_s = out.span.end_s = ev.span.start_s;
  }
  return out;
}

PersonalizationSplit split_personalization(std::span<const EventSegments> events) {
  PersonalizationSplit split;
  for (std::size_t e = 0; e < events.size(); ++e) {
    const auto& ev = events[e];
    if (ev.ecg.size() != ev.iegm.size()) throw DataError("event has misaligned ECG/IEGM");
    const std::size_t n = ev.size();
    if (n < 3) {
      split.skipped.push_back(e);
      continue;
    }
    const std::size_t base = n / 3, rem = n % 3;
    std::size_t first = 0;
    for (std::size_t g = 0; g < 3; ++g) {
      const std::size_t count = base + (g < rem ? 1 : 0);
      split.groups[g].push_back(slice_event(ev, first, count));
      first += count;
    }
  }
  return split;
}

void write_recording_csv(const Recording& rec, const std::filesystem::path& path) {
  rec.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  out << "# pva-recording v1, rate=" << fmt_double("%.17g", rec.rate_hz()) << ", id=" << rec.id
      << "\n";
  out << "t,ecg,iegm\n";
  const double fs = rec.rate_hz();
  char line[128];
  for (std::size_t i = 0; i < rec.ecg.samples.size(); ++i) {
    std::snprintf(line, sizeof line, "%.6f,%.9g,%.9g\n", static_cast<double>(i) / fs,
                  static_cast<double>(rec.ecg.samples[i]),
                  static_cast<double>(rec.iegm.samples[i]));
    out << line;
  }
  out << "# beats\n";
  for (double b : rec.beats) out << fmt_double("%.17g", b) << "\n";
  out << "# events\n";
  out << "start,end,label\n";
  for (const auto& ev : rec.events)
    out << fmt_double("%.17g", ev.start_s) << "," << fmt_double("%.17g", ev.end_s) << ","
        << to_string(ev.label) << "\n";
  if (!out) throw FileError("write failed for " + path.string());
}

Recording load_recording_csv(const std::filesystem::path& path,
                             std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());

  auto fail = [&](std::size_t row, const std::string& what) -> ParseError {
    return ParseError(path.string() + ": row " + std::to_string(row) + ": " + what);
  };

  std::string line;
  std::size_t row = 0;
  if (!std::getline(in, line)) throw fail(1, "empty file");
  ++row;
  std::string_view header = trim(line);
  constexpr std::string_view kMagic = "# pva-recording v1";
  if (header.substr(0, kMagic.size()) != kMagic) throw fail(row, "malformed header");

  Recording rec;
  double rate = 0;
  bool have_rate = false, have_id = false;
  {
    auto rest = header.substr(kMagic.size());
    const auto rate_pos = rest.find("rate=");
    const auto id_pos = rest.find("id=");
    if (rate_pos == std::string_view::npos || id_pos == std::string_view::npos)
      throw fail(row, "malformed header: expected rate= and id=");
    auto rate_text = rest.substr(rate_pos + 5);
    rate_text = rate_text.substr(0, rate_text.find(','));
    have_rate = parse_double(rate_text, rate) && rate > 0 && std::isfinite(rate);
    rec.id = std::string(trim(rest.substr(id_pos + 3)));
    have_id = true;
  }
  if (!have_rate || !have_id) throw fail(row, "malformed header: bad rate");
  rec.ecg.rate_hz = rec.iegm.rate_hz = rate;

  enum class Section { Samples, Beats, Events } section = Section::Samples;
  bool saw_beats = false, saw_events = false;
  while (std::getline(in, line)) {
    ++row;
    const std::string_view text = trim(line);
    if (text.empty()) continue;
    if (text.front() == '#') {
      if (text == "# beats") {
        section = Section::Beats;
        saw_beats = true;
      } else if (text == "# events") {
        section = Section::Events;
        saw_events = true;
      } else {
        throw fail(row, "unknown section '" + std::string(text) + "'");
      }
      continue;
    }
    const auto fields = split_commas(text);
    switch (section) {
      case Section::Samples: {
        if (text == "t,ecg,iegm") continue;
        if (fields.size() != 3) throw fail(row, "expected 3 fields, got " + std::to_string(fields.size()));
        double t, e, g;
        if (!parse_double(fields[0], t) || !parse_double(fields[1], e) ||
            !parse_double(fields[2], g))
          throw fail(row, "not a number");
        if (!std::isfinite(t) || !std::isfinite(e) || !std::isfinite(g))
          throw fail(row, "non-finite value");
        rec.ecg.samples.push_back(static_cast<float>(e));
        rec.iegm.samples.push_back(static_cast<float>(g));
        break;
      }
      case Section::Beats: {
        double b;
        if (fields.size() != 1 || !parse_double(fields[0], b)) throw fail(row, "bad beat timestamp");
        if (!std::isfinite(b)) throw fail(row, "non-finite value");
        rec.beats.push_back(b);
        break;
      }
      case Section::Events: {
        if (text == "start,end,label") continue;
        if (fields.size() != 3) throw fail(row, "expected start,end,label");
        double s, e;
        if (!parse_double(fields[0], s) || !parse_double(fields[1], e))
          throw fail(row, "bad event bounds");
        if (!std::isfinite(s) || !std::isfinite(e)) throw fail(row, "non-finite value");
        try {
          rec.events.push_back({s, e, label_from_string(fields[2])});
        } catch (const ValidationError& err) {
          throw fail(row, err.what());
        }
        break;
      }
    }
  }
  if (warnings) {
    if (!saw_beats) warnings->push_back(path.string() + ": no beats section; beats left empty");
    if (!saw_events) warnings->push_back(path.string() + ": no events section; events left empty");
  }
  try {
    rec.validate();
  } catch (const Error& err) {
    throw ParseError(path.string() + ": " + err.what());
  }
  return rec;
}

}  // namespace pva
