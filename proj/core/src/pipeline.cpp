#include "pva/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include "json.hpp"
#include "pva/error.hpp"

namespace pva {

using nlohmann::json;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw FileError("write failed for " + path.string());
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(what + ": " + e.what());
  }
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ValidationError("unknown field '" + key + "' in " + where);
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("field '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

// ---- JSON <-> config types ----

json to_j(const nn::TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"momentum", c.momentum},
          {"epochs", c.epochs},
          {"seed", c.seed}};
}

void from_j(const json& j, nn::TrainConfig& c, const std::string& where) {
  check_keys(j, {"learning_rate", "batch_size", "momentum", "epochs", "seed"}, where);
  get_if(j, "learning_rate", c.learning_rate, where);
  get_if(j, "batch_size", c.batch_size, where);
  get_if(j, "momentum", c.momentum, where);
  get_if(j, "epochs", c.epochs, where);
  get_if(j, "seed", c.seed, where);
}

json to_j(const AdaptConfig& c) {
  json mmd = json::object();
  mmd["bandwidth"] = c.mmd.bandwidth ? json(*c.mmd.bandwidth) : json(nullptr);
  return {{"lambda_mmd", c.lambda_mmd}, {"train", to_j(c.train)}, {"mmd", mmd}};
}

void from_j(const json& j, AdaptConfig& c, const std::string& where) {
  check_keys(j, {"lambda_mmd", "train", "mmd"}, where);
  get_if(j, "lambda_mmd", c.lambda_mmd, where);
  if (j.contains("train")) from_j(j["train"], c.train, where + ".train");
  if (j.contains("mmd")) {
    const auto& m = j["mmd"];
    check_keys(m, {"bandwidth"}, where + ".mmd");
    if (m.contains("bandwidth")) {
      if (m["bandwidth"].is_null())
        c.mmd.bandwidth.reset();
      else if (m["bandwidth"].is_number())
        c.mmd.bandwidth = m["bandwidth"].get<double>();
      else
        throw ValidationError("field 'bandwidth' in " + where + ".mmd must be a number or null");
    }
  }
}

json to_j(const PolicyTrainConfig& c) { return {{"beta", c.beta}, {"train", to_j(c.train)}}; }

void from_j(const json& j, PolicyTrainConfig& c, const std::string& where) {
  check_keys(j, {"beta", "train"}, where);
  get_if(j, "beta", c.beta, where);
  if (j.contains("train")) from_j(j["train"], c.train, where + ".train");
}

json to_j(const CostModel& c) {
  return {{"l_imp_ms", c.l_imp_ms},         {"l_up_ms", c.l_up_ms},
          {"l_down_ms", c.l_down_ms},       {"l_wear_ecg_ms", c.l_wear_ecg_ms},
          {"l_policy_ms", c.l_policy_ms},   {"l_wear_iegm_ms", c.l_wear_iegm_ms},
          {"e_imp_inf_mj", c.e_imp_inf_mj}, {"e_tx_mj", c.e_tx_mj},
          {"e_rx_mj", c.e_rx_mj}};
}

void from_j(const json& j, CostModel& c, const std::string& where) {
  check_keys(j,
             {"l_imp_ms", "l_up_ms", "l_down_ms", "l_wear_ecg_ms", "l_policy_ms", "l_wear_iegm_ms",
              "e_imp_inf_mj", "e_tx_mj", "e_rx_mj"},
             where);
  get_if(j, "l_imp_ms", c.l_imp_ms, where);
  get_if(j, "l_up_ms", c.l_up_ms, where);
  get_if(j, "l_down_ms", c.l_down_ms, where);
  get_if(j, "l_wear_ecg_ms", c.l_wear_ecg_ms, where);
  get_if(j, "l_policy_ms", c.l_policy_ms, where);
  get_if(j, "l_wear_iegm_ms", c.l_wear_iegm_ms, where);
  get_if(j, "e_imp_inf_mj", c.e_imp_inf_mj, where);
  get_if(j, "e_tx_mj", c.e_tx_mj, where);
  get_if(j, "e_rx_mj", c.e_rx_mj, where);
}

json to_j(const ClassicConfig& c) {
  return {{"vt_lo_bpm", c.vt_lo_bpm},
          {"vf_lo_bpm", c.vf_lo_bpm},
          {"window", c.window},
          {"confirm", c.confirm},
          {"stale_timeout_s", c.stale_timeout_s}};
}

void from_j(const json& j, ClassicConfig& c, const std::string& where) {
  check_keys(j, {"vt_lo_bpm", "vf_lo_bpm", "window", "confirm", "stale_timeout_s"}, where);
  get_if(j, "vt_lo_bpm", c.vt_lo_bpm, where);
  get_if(j, "vf_lo_bpm", c.vf_lo_bpm, where);
  get_if(j, "window", c.window, where);
  get_if(j, "confirm", c.confirm, where);
  get_if(j, "stale_timeout_s", c.stale_timeout_s, where);
}

json to_j(const RhythmSpec& s) {
  return {{"rhythm", std::string(to_string(s.rhythm))},
          {"rate_bpm", s.rate_bpm},
          {"duration_s", s.duration_s},
          {"noise_level", s.noise_level},
          {"morphology",
           {{"amplitude_scale", s.morphology.amplitude_scale},
            {"sharpness", s.morphology.sharpness},
            {"baseline_offset", s.morphology.baseline_offset}}},
          {"qrs_width_scale", s.qrs_width_scale}};
}

RhythmSpec spec_from_j(const json& j, const std::string& where) {
  check_keys(j, {"rhythm", "rate_bpm", "duration_s", "noise_level", "morphology", "qrs_width_scale"},
             where);
  RhythmSpec s;
  std::string rhythm;
  get_if(j, "rhythm", rhythm, where);
  if (rhythm.empty()) throw ValidationError(where + ": missing 'rhythm'");
  s.rhythm = rhythm_from_string(rhythm);
  get_if(j, "rate_bpm", s.rate_bpm, where);
  get_if(j, "duration_s", s.duration_s, where);
  get_if(j, "noise_level", s.noise_level, where);
  get_if(j, "qrs_width_scale", s.qrs_width_scale, where);
  if (j.contains("morphology")) {
    const auto& m = j["morphology"];
    const std::string w = where + ".morphology";
    check_keys(m, {"amplitude_scale", "sharpness", "baseline_offset"}, w);
    get_if(m, "amplitude_scale", s.morphology.amplitude_scale, w);
    get_if(m, "sharpness", s.morphology.sharpness, w);
    get_if(m, "baseline_offset", s.morphology.baseline_offset, w);
  }
  return s;
}

json opt_j(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

RhythmSpec make_spec(RhythmClass rhythm, double rate, double duration, double noise,
                     const Morphology& m, double qrs) {
  RhythmSpec s;
  s.rhythm = rhythm;
  s.rate_bpm = rhythm == RhythmClass::VF ? 0.0 : rate;
  s.duration_s = duration;
  s.noise_level = noise;
  s.morphology = m;
  s.qrs_width_scale = qrs;
  return s;
}

std::vector<nn::Example> ecg_examples(std::span<const EventSegments> events) {
  std::vector<nn::Example> out;
  for (const auto& ev : events) {
    const auto ex = labeled_examples(ev.ecg);
    out.insert(out.end(), ex.begin(), ex.end());
  }
  if (out.empty()) throw DataError("no labeled ECG segments for personalization");
  return out;
}

std::vector<std::span<const float>> iegm_inputs(std::span<const EventSegments> events) {
  std::vector<std::span<const float>> out;
  for (const auto& ev : events)
    for (const auto& s : ev.iegm) out.emplace_back(s.samples);
  if (out.empty()) throw DataError("no IEGM segments for personalization");
  return out;
}

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

// ---- cohorts ----

std::string_view to_string(Role role) { return role == Role::Population ? "population" : "patient"; }

Role role_from_string(std::string_view text) {
  if (text == "population") return Role::Population;
  if (text == "patient") return Role::Patient;
  throw ValidationError("unknown role '" + std::string(text) + "'");
}

void CohortSpec::validate() const {
  if (recordings.empty()) throw ValidationError("cohort has no recordings");
  std::set<std::string> ids;
  bool pop = false, pat = false;
  for (const auto& r : recordings) {
    if (r.id.empty() || r.id.find_first_of("/\\ ,") != std::string::npos)
      throw ValidationError("recording id '" + r.id + "' is empty or not file-name safe");
    if (!ids.insert(r.id).second) throw ValidationError("duplicate recording id '" + r.id + "'");
    if (r.specs.empty()) throw ValidationError("recording " + r.id + " has no rhythm specs");
    for (const auto& s : r.specs) s.validate();
    (r.role == Role::Population ? pop : pat) = true;
  }
  if (!pop) throw ValidationError("cohort needs at least one population recording");
  if (!pat) throw ValidationError("cohort needs at least one patient recording");
}

CohortSpec demo_cohort() {
  CohortSpec c;
  c.name = "demo";
  for (int p = 0; p < 14; ++p) {
    Morphology m{0.9 + 0.05 * (p % 5), 0.1 + 0.05 * (p % 4), 0.05 * ((p % 3) - 1)};
    const double qrs = 0.9 + 0.04 * (p % 6);
    const double noise = 0.02 + 0.005 * (p % 3);
    std::vector<RhythmSpec> specs{
        make_spec(RhythmClass::NSR, 62 + (p * 7) % 36, 30, noise, m, qrs),
        make_spec(RhythmClass::VT, 165 + (p * 11) % 50, 30, noise, m, qrs),
        make_spec(RhythmClass::SVT, 152 + (p * 9) % 36, 30, noise, m, qrs),
        make_spec(RhythmClass::VF, 0, 30, noise, m, qrs),
        make_spec(RhythmClass::NSR, 64 + (p * 5) % 34, 30, noise, m, qrs),
    };
    std::rotate(specs.begin(), specs.begin() + (p % 5), specs.end());
    char id[16];
    std::snprintf(id, sizeof id, "pop%02d", p);
    c.recordings.push_back({id, Role::Population, static_cast<std::uint64_t>(100 + p), specs});
  }
  const Morphology pm{1.3, 0.35, 0.15};
  for (int q = 0; q < 6; ++q) {
    const double noise = 0.03;
    const double qrs = 1.2;
    std::vector<RhythmSpec> specs{
        make_spec(RhythmClass::NSR, 70 + 4 * q, 30, noise, pm, qrs),
        make_spec(RhythmClass::SVT, 168 + 3 * q, 30, noise, pm, qrs),
        make_spec(RhythmClass::VT, 172 + 6 * q, 30, noise, pm, qrs),
        make_spec(RhythmClass::NSR, 78 + 3 * q, 30, noise, pm, qrs),
        make_spec(RhythmClass::VF, 0, 30, noise, pm, qrs),
    };
    std::rotate(specs.begin(), specs.begin() + (q % 5), specs.end());
    char id[16];
    std::snprintf(id, sizeof id, "pat%02d", q);
    c.recordings.push_back({id, Role::Patient, static_cast<std::uint64_t>(200 + q), specs});
  }
  return c;
}

CohortSpec cohort_from_json(const std::string& text) {
  const json j = parse_json(text, "cohort spec");
  check_keys(j, {"name", "recordings"}, "cohort");
  CohortSpec c;
  get_if(j, "name", c.name, "cohort");
  if (!j.contains("recordings") || !j["recordings"].is_array())
    throw ValidationError("cohort: 'recordings' must be an array");
  std::size_t k = 0;
  for (const auto& r : j["recordings"]) {
    const std::string where = "recordings[" + std::to_string(k++) + "]";
    check_keys(r, {"id", "role", "seed", "specs"}, where);
    CohortEntry e;
    get_if(r, "id", e.id, where);
    std::string role = "population";
    get_if(r, "role", role, where);
    e.role = role_from_string(role);
    get_if(r, "seed", e.seed, where);
    if (!r.contains("specs") || !r["specs"].is_array())
      throw ValidationError(where + ": 'specs' must be an array");
    std::size_t s = 0;
    for (const auto& sj : r["specs"])
      e.specs.push_back(spec_from_j(sj, where + ".specs[" + std::to_string(s++) + "]"));
    c.recordings.push_back(std::move(e));
  }
  c.validate();
  return c;
}

std::string cohort_to_json(const CohortSpec& spec) {
  json recs = json::array();
  for (const auto& r : spec.recordings) {
    json specs = json::array();
    for (const auto& s : r.specs) specs.push_back(to_j(s));
    recs.push_back({{"id", r.id}, {"role", std::string(to_string(r.role))}, {"seed", r.seed},
                    {"specs", specs}});
  }
  return json{{"name", spec.name}, {"recordings", recs}}.dump(2) + "\n";
}

CohortSpec load_cohort_spec(const std::filesystem::path& path) {
  return cohort_from_json(read_text(path));
}

void save_cohort_spec(const CohortSpec& spec, const std::filesystem::path& path) {
  write_text(path, cohort_to_json(spec));
}

const Recording* Cohort::find(const std::string& id) const {
  for (const auto* group : {&population, &patient})
    for (const auto& r : *group)
      if (r.id == id) return &r;
  return nullptr;
}

std::vector<Recording> generate_raw(const CohortSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::vector<Recording> out;
  out.reserve(spec.recordings.size());
  for (const auto& e : spec.recordings)
    out.push_back(generate_recording(e.specs, derive_seed(seed, e.seed, e.id), e.id));
  return out;
}

Cohort assemble_cohort(const CohortSpec& spec, std::vector<Recording> raw) {
  if (raw.size() != spec.recordings.size())
    throw DataError("cohort has " + std::to_string(spec.recordings.size()) + " entries but " +
                    std::to_string(raw.size()) + " recordings");
  Cohort c;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i].id != spec.recordings[i].id)
      throw DataError("recording " + raw[i].id + " does not match cohort entry " +
                      spec.recordings[i].id);
    Recording r = raw[i].rate_hz() == kSegmentRateHz ? std::move(raw[i])
                                                     : downsample(raw[i], kSegmentRateHz);
    (spec.recordings[i].role == Role::Population ? c.population : c.patient).push_back(std::move(r));
  }
  return c;
}

Cohort generate_cohort(const CohortSpec& spec, std::uint64_t seed) {
  return assemble_cohort(spec, generate_raw(spec, seed));
}

void write_cohort_dir(const CohortSpec& spec, std::span<const Recording> raw,
                      const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FileError("cannot create " + dir.string() + ": " + ec.message());
  save_cohort_spec(spec, dir / "cohort.json");
  for (const auto& r : raw) write_recording_csv(r, dir / (r.id + ".csv"));
}

Cohort load_cohort_dir(const std::filesystem::path& dir) {
  const CohortSpec spec = load_cohort_spec(dir / "cohort.json");
  std::vector<Recording> raw;
  for (const auto& e : spec.recordings) raw.push_back(load_recording_csv(dir / (e.id + ".csv")));
  return assemble_cohort(spec, std::move(raw));
}

// ---- run configuration ----

void RunConfig::validate() const {
  base_train.validate();
  ecg_finetune.validate();
  adapt.validate();
  policy.validate();
  costs.validate();
  classic.validate();
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ValidationError("threshold must be in [0, 1]");
  parse_threshold_grid(thresholds);
  if (threads == 0) throw ValidationError("threads must be >= 1");
}

RunConfig run_config_from_json(const std::string& text) {
  const json j = parse_json(text, "run config");
  const std::string w = "run config";
  check_keys(j,
             {"seed", "base_train", "ecg_finetune", "adapt", "policy", "costs", "classic", "threshold",
              "thresholds", "threads"},
             w);
  RunConfig c;
  get_if(j, "seed", c.seed, w);
  if (j.contains("base_train")) from_j(j["base_train"], c.base_train, "base_train");
  if (j.contains("ecg_finetune")) from_j(j["ecg_finetune"], c.ecg_finetune, "ecg_finetune");
  if (j.contains("adapt")) from_j(j["adapt"], c.adapt, "adapt");
  if (j.contains("policy")) from_j(j["policy"], c.policy, "policy");
  if (j.contains("costs")) from_j(j["costs"], c.costs, "costs");
  if (j.contains("classic")) from_j(j["classic"], c.classic, "classic");
  get_if(j, "threshold", c.threshold, w);
  get_if(j, "thresholds", c.thresholds, w);
  get_if(j, "threads", c.threads, w);
  c.validate();
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  json j = {{"seed", c.seed},
            {"base_train", to_j(c.base_train)},
            {"ecg_finetune", to_j(c.ecg_finetune)},
            {"adapt", to_j(c.adapt)},
            {"policy", to_j(c.policy)},
            {"costs", to_j(c.costs)},
            {"classic", to_j(c.classic)},
            {"threshold", c.threshold},
            {"thresholds", c.thresholds},
            {"threads", c.threads}};
  return j.dump(2) + "\n";
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(read_text(path));
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  write_text(path, run_config_to_json(cfg));
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t local, std::string_view tag) {
  return splitmix(splitmix(master) ^ splitmix(local ^ fnv1a(tag)));
}

// ---- protocol stages ----

PatientSplit split_patient(std::span<const Recording> patient) {
  if (patient.empty()) throw DataError("no patient recordings");
  std::vector<EventSegments> events;
  for (const auto& r : patient) {
    auto ev = group_by_event(r);
    for (auto& e : ev) events.push_back(std::move(e));
  }
  auto split = split_personalization(events);
  PatientSplit out;
  out.groups = std::move(split.groups);
  if (out.groups[0].empty()) throw DataError("patient has no event long enough to split in three");
  return out;
}

std::vector<EventSegments> personalization_events(const PatientSplit& split, std::size_t depth) {
  if (depth < 1 || depth > 2) throw ValidationError("personalization depth must be 1 or 2");
  std::vector<EventSegments> out = split.groups[0];
  if (depth == 2) out.insert(out.end(), split.groups[1].begin(), split.groups[1].end());
  return out;
}

std::vector<Segment> population_segments(std::span<const Recording> population, Domain domain) {
  std::vector<Segment> out;
  for (const auto& r : population) {
    auto s = segment_recording(r, domain);
    for (auto& seg : s)
      if (seg.label) out.push_back(std::move(seg));
  }
  return out;
}

nn::Model train_base_model(std::span<const Recording> population, const RunConfig& cfg,
                           nn::TrainReport* report) {
  cfg.validate();
  const auto segs = population_segments(population, Domain::ECG);
  const auto data = labeled_examples(segs);
  if (data.empty()) throw DataError("no labeled population ECG segments");
  nn::TrainConfig tc = cfg.base_train;
  tc.seed = derive_seed(cfg.seed, cfg.base_train.seed, "base-train");
  nn::Model model = make_detector(derive_seed(cfg.seed, cfg.base_train.seed, "base-init"));
  auto r = nn::train_supervised(model, data, tc);
  if (report) *report = std::move(r);
  return model;
}

nn::Model finetune_ecg(const nn::Model& base, std::span<const EventSegments> events,
                       const RunConfig& cfg, nn::TrainReport* report) {
  cfg.validate();
  const auto data = ecg_examples(events);
  nn::TrainConfig tc = cfg.ecg_finetune;
  tc.seed = derive_seed(cfg.seed, cfg.ecg_finetune.seed, "ecg-finetune");
  nn::Model model = base;
  auto r = nn::train_supervised(model, data, tc);
  if (report) *report = std::move(r);
  return model;
}

CandidatePool build_candidate_pool(const nn::Model& ecg, std::span<const EventSegments> events,
                                   const RunConfig& cfg) {
  cfg.validate();
  const auto source = ecg_examples(events);
  const auto target = iegm_inputs(events);
  AdaptConfig ac = cfg.adapt;
  ac.train.seed = derive_seed(cfg.seed, cfg.adapt.train.seed, "adapt");
  return build_pool(ecg, source, target, ac, cfg.threads);
}

std::vector<PolicySample> policy_samples(std::span<const EventSegments> events) {
  std::vector<PolicySample> out;
  for (const auto& ev : events)
    for (const auto& s : ev.iegm) {
      if (!s.label) throw DataError("IEGM segment at t=" + fmt6(s.t_start) + " has no annotation");
      out.push_back({s.samples, *s.label});
    }
  if (out.empty()) throw DataError("no IEGM segments for policy training");
  return out;
}

PolicyStage train_policy_stage(const CandidatePool& pool, std::span<const EventSegments> events,
                               const RunConfig& cfg) {
  cfg.validate();
  const auto samples = policy_samples(events);
  PolicyTrainConfig pc = cfg.policy;
  pc.train.seed = derive_seed(cfg.seed, cfg.policy.train.seed, "policy-train");
  PolicyStage st;
  st.policy = PolicyNet::make(derive_seed(cfg.seed, cfg.policy.train.seed, "policy-init"));
  st.report = train_policy(st.policy, pool, samples, pc);
  st.implant_index = st.report.best_candidate;
  return st;
}

RunConfig depth_config(const RunConfig& cfg, std::size_t depth) {
  RunConfig c = cfg;
  // Keep depth-1 and depth-2 runs on distinct random streams.
  c.seed = derive_seed(cfg.seed, depth, "depth");
  return c;
}

Personalization personalize(const nn::Model& base, const PatientSplit& split, std::size_t depth,
                            const RunConfig& cfg) {
  const auto events = personalization_events(split, depth);
  const RunConfig c = depth_config(cfg, depth);
  Personalization p;
  p.depth = depth;
  p.ecg = finetune_ecg(base, events, c);
  p.pool = build_candidate_pool(p.ecg, events, c);
  p.policy = train_policy_stage(p.pool, events, c);
  return p;
}

// ---- evaluation modes ----

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::Cnn0G: return "cnn-0g";
    case Mode::Cnn1G: return "cnn-1g";
    case Mode::Cnn2G: return "cnn-2g";
    case Mode::NoPolicy: return "no-policy";
    case Mode::Classic: return "classic";
  }
  return "?";
}

Mode mode_from_string(std::string_view text) {
  for (Mode m : kAllModes)
    if (to_string(m) == text) return m;
  throw ValidationError("unknown mode '" + std::string(text) +
                        "' (expected cnn-0g, cnn-1g, cnn-2g, no-policy or classic)");
}

DeployedModels deployment(Mode mode, const nn::Model& base, const Personalization* g1,
                          const Personalization* g2) {
  DeployedModels d;
  switch (mode) {
    case Mode::Cnn0G:
      d.ecg = base;
      d.iegm = base;
      d.pool = replicate_pool(base);
      d.policy = PolicyNet::zeros();
      break;
    case Mode::Cnn1G:
    case Mode::Cnn2G:
    case Mode::NoPolicy: {
      const Personalization* p = mode == Mode::Cnn1G ? g1 : g2;
      if (!p) throw ValidationError(std::string(to_string(mode)) + " needs personalized models");
      d.ecg = p->ecg;
      d.iegm = p->implant();
      if (mode != Mode::NoPolicy) {
        d.pool = p->pool;
        d.policy = p->policy.policy;
      }
      break;
    }
    case Mode::Classic:
      throw ValidationError("classic mode deploys no models");
  }
  return d;
}

ModeEvaluation evaluate_cnn(Mode mode, const DeployedModels& models,
                            std::span<const EventSegments> test_events, const RunConfig& cfg) {
  ModeEvaluation e;
  e.mode = mode;
  e.trace = simulate_events(test_events, models, cfg.threshold, cfg.costs);
  e.decisions = e.trace->events;
  e.counts = event_confusion(e.decisions);
  e.metrics = metrics(e.counts);
  return e;
}

ModeEvaluation evaluate_classic(std::span<const EventSegments> test_events, const Cohort& cohort,
                                const RunConfig& cfg) {
  ModeEvaluation e;
  e.mode = Mode::Classic;
  for (const auto& ev : test_events) {
    if (ev.iegm.empty()) continue;
    const Recording* r = cohort.find(ev.recording_id);
    if (!r) throw DataError("no recording '" + ev.recording_id + "' for classic evaluation");
    e.decisions.push_back(classic_detect(r->beats, ev.span, cfg.classic).decision);
  }
  e.counts = event_confusion(e.decisions);
  e.metrics = metrics(e.counts);
  return e;
}

const ModeEvaluation& ExperimentReport::at(Mode mode) const {
  for (const auto& m : modes)
    if (m.mode == mode) return m;
  throw ValidationError("mode " + std::string(to_string(mode)) + " was not evaluated");
}

ExperimentReport run_experiment(const Cohort& cohort, const RunConfig& cfg,
                                std::span<const Mode> modes) {
  cfg.validate();
  auto needs = [&](Mode m) { return std::find(modes.begin(), modes.end(), m) != modes.end(); };
  const bool want_cnn = needs(Mode::Cnn0G) || needs(Mode::Cnn1G) || needs(Mode::Cnn2G) ||
                        needs(Mode::NoPolicy);
  const PatientSplit split = split_patient(cohort.patient);
  const auto& test = split.groups[2];

  ExperimentReport rep;
  rep.seed = cfg.seed;
  auto& base = rep.models.base;
  auto& g1 = rep.models.g1;
  auto& g2 = rep.models.g2;
  if (want_cnn) base = train_base_model(cohort.population, cfg);
  if (needs(Mode::Cnn1G)) g1 = personalize(*base, split, 1, cfg);
  if (needs(Mode::Cnn2G) || needs(Mode::NoPolicy)) g2 = personalize(*base, split, 2, cfg);

  for (Mode m : modes) {
    if (m == Mode::Classic) {
      rep.modes.push_back(evaluate_classic(test, cohort, cfg));
      continue;
    }
    const auto d = deployment(m, *base, g1 ? &*g1 : nullptr, g2 ? &*g2 : nullptr);
    rep.modes.push_back(evaluate_cnn(m, d, test, cfg));
  }
  return rep;
}

void save_experiment_models(const ExperimentModels& models, const std::filesystem::path& root) {
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw FileError("cannot create " + root.string() + ": " + ec.message());
  if (models.base) nn::save_model(*models.base, root / "base.pva1");
  if (models.g1) save_personalization(*models.g1, root / "g1");
  if (models.g2) save_personalization(*models.g2, root / "g2");
}

std::string metrics_json(const ExperimentReport& report) {
  json modes = json::object();
  for (const auto& m : report.modes) {
    json j = {{"tp", m.counts.tp},           {"fn", m.counts.fn},
              {"tn", m.counts.tn},           {"fp", m.counts.fp},
              {"se", opt_j(m.metrics.se)},   {"sp", opt_j(m.metrics.sp)},
              {"ppv", opt_j(m.metrics.ppv)}, {"npv", opt_j(m.metrics.npv)},
              {"acc", opt_j(m.metrics.acc)}, {"bac", opt_j(m.metrics.bac)},
              {"f1", opt_j(m.metrics.f1)}};
    if (m.trace) {
      j["threshold"] = m.trace->threshold;
      j["upload_frac"] = m.trace->upload_fraction();
      j["mean_latency_ms"] = m.trace->mean_latency_ms();
      j["total_energy_mj"] = m.trace->total_energy_mj();
    }
    modes[std::string(to_string(m.mode))] = j;
  }
  return json{{"seed", report.seed}, {"modes", modes}}.dump(2) + "\n";
}

// ---- artifacts ----

void save_personalization(const Personalization& p, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "pool", ec);
  if (ec) throw FileError("cannot create " + dir.string() + ": " + ec.message());
  nn::save_model(p.ecg, dir / "ecg.pva1");
  save_pool(p.pool, dir / "pool");
  nn::save_model(p.policy.policy.model, dir / "policy.pva1");
  std::ostringstream m;
  m << "output: sigmoid over 5 logits, x_i = P(fine-tune conv layer i+1)\n"
    << "selection: a_i = x_i >= 0.5, candidate index = sum a_i << i\n"
    << "depth: " << p.depth << "\n"
    << "implant_index: " << p.policy.implant_index << "\n";
  write_text(dir / "policy.txt", m.str());
}

Personalization load_personalization(const std::filesystem::path& dir) {
  Personalization p;
  p.ecg = nn::load_model(dir / "ecg.pva1");
  p.pool = load_pool(dir / "pool");
  p.policy.policy.model = nn::load_model(dir / "policy.pva1");
  p.policy.policy.validate();
  std::istringstream in(read_text(dir / "policy.txt"));
  std::string line;
  bool have_index = false;
  while (std::getline(in, line)) {
    unsigned v = 0;
    if (std::sscanf(line.c_str(), "implant_index: %u", &v) == 1) {
      if (v >= kPoolSize) throw ParseError("policy.txt: implant_index out of range");
      p.policy.implant_index = v;
      have_index = true;
    } else if (std::sscanf(line.c_str(), "depth: %u", &v) == 1) {
      p.depth = v;
    }
  }
  if (!have_index) throw ParseError("policy.txt: missing implant_index");
  return p;
}

void write_trace_csv(const SimTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  out << "event,recording_id,t_start,cs_in,implant_class,uploaded,resolved_by,final_class,final_cs,"
         "latency_ms,energy_mj\n";
  for (const auto& o : trace.outcomes) {
    out << o.event << "," << trace.event_recordings.at(o.event) << "," << fmt6(o.t_start) << ","
        << fmt6(o.implant.cs) << "," << to_string(o.implant.klass) << "," << (o.uploaded ? 1 : 0)
        << "," << to_string(o.resolved_by) << "," << to_string(o.prediction.klass) << ","
        << fmt6(o.prediction.cs) << "," << fmt6(o.latency_ms) << "," << fmt6(o.energy_mj) << "\n";
  }
  out << "# events\nevent,recording_id,truth,shocked,shock_segment\n";
  for (std::size_t e = 0; e < trace.events.size(); ++e) {
    const auto& d = trace.events[e];
    out << e << "," << trace.event_recordings[e] << "," << to_string(d.truth) << ","
        << (d.shocked ? 1 : 0) << ","
        << (d.shock_segment_index ? std::to_string(*d.shock_segment_index) : std::string("NA"))
        << "\n";
  }
  if (!out) throw FileError("write failed for " + path.string());
}

}  // namespace pva
