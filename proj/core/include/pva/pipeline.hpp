#pragma once

// Experiment pipeline shared by the CLI, the acceptance suite and the
// benchmarks: cohort specs, run configuration, the population / G1 / G2 / G3
// protocol and the five evaluation modes.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pva/adapt.hpp"
#include "pva/baseline.hpp"
#include "pva/coopsim.hpp"
#include "pva/evalkit.hpp"
#include "pva/policy.hpp"
#include "pva/rhythm.hpp"
#include "pva/tinynn.hpp"

namespace pva {

// ---- cohorts ----

enum class Role { Population, Patient };
std::string_view to_string(Role role);
Role role_from_string(std::string_view text);

struct CohortEntry {
  std::string id;
  Role role = Role::Population;
  std::uint64_t seed = 0;
  std::vector<RhythmSpec> specs;
};

struct CohortSpec {
  std::string name = "cohort";
  std::vector<CohortEntry> recordings;

  void validate() const;
};

// 14 population recordings and 6 recordings of one held-out patient whose
// QRS width and ECG->IEGM morphology differ from the population.
CohortSpec demo_cohort();

CohortSpec cohort_from_json(const std::string& text);
std::string cohort_to_json(const CohortSpec& spec);
CohortSpec load_cohort_spec(const std::filesystem::path& path);
void save_cohort_spec(const CohortSpec& spec, const std::filesystem::path& path);

// Recordings at 125 Hz, split by role and kept in spec order.
struct Cohort {
  std::vector<Recording> population;
  std::vector<Recording> patient;

  const Recording* find(const std::string& id) const;
};

// Recording k is generated with seed derive_seed(seed, entry.seed, entry.id).
std::vector<Recording> generate_raw(const CohortSpec& spec, std::uint64_t seed);
Cohort assemble_cohort(const CohortSpec& spec, std::vector<Recording> raw);
Cohort generate_cohort(const CohortSpec& spec, std::uint64_t seed);

// dir/cohort.json plus one CSV per recording at the generator rate.
void write_cohort_dir(const CohortSpec& spec, std::span<const Recording> raw,
                      const std::filesystem::path& dir);
Cohort load_cohort_dir(const std::filesystem::path& dir);

// ---- run configuration ----

struct RunConfig {
  std::uint64_t seed = 1;
  nn::TrainConfig base_train;
  nn::TrainConfig ecg_finetune;
  AdaptConfig adapt;
  PolicyTrainConfig policy;
  CostModel costs;
  ClassicConfig classic;
  double threshold = 0.5;
  std::string thresholds = "0:0.1:1";
  unsigned threads = 1;

  void validate() const;
};

// Unknown keys are rejected; missing keys keep their defaults.
RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t local, std::string_view tag);

// ---- protocol stages ----

// Patient events grouped into G1, G2, G3 (contiguous thirds of every event).
struct PatientSplit {
  std::array<std::vector<EventSegments>, 3> groups;
};
PatientSplit split_patient(std::span<const Recording> patient);

// G1 for depth 1, G1+G2 for depth 2.
std::vector<EventSegments> personalization_events(const PatientSplit& split, std::size_t depth);

std::vector<Segment> population_segments(std::span<const Recording> population, Domain domain);

nn::Model train_base_model(std::span<const Recording> population, const RunConfig& cfg,
                           nn::TrainReport* report = nullptr);

nn::Model finetune_ecg(const nn::Model& base, std::span<const EventSegments> events,
                       const RunConfig& cfg, nn::TrainReport* report = nullptr);

// MMD adaptation of `ecg` from labeled ECG to unlabeled IEGM of `events`.
CandidatePool build_candidate_pool(const nn::Model& ecg, std::span<const EventSegments> events,
                                   const RunConfig& cfg);

// IEGM segments with the labels of their aligned annotations.
std::vector<PolicySample> policy_samples(std::span<const EventSegments> events);

struct PolicyStage {
  PolicyNet policy;
  PolicyTrainReport report;
  unsigned implant_index = 0;  // best candidate on the policy training set
};
PolicyStage train_policy_stage(const CandidatePool& pool, std::span<const EventSegments> events,
                               const RunConfig& cfg);

struct Personalization {
  std::size_t depth = 0;
  nn::Model ecg;
  CandidatePool pool;
  PolicyStage policy;

  const nn::Model& implant() const { return pool[policy.implant_index]; }
};
// personalize() runs every stage with depth_config(cfg, depth).
RunConfig depth_config(const RunConfig& cfg, std::size_t depth);
Personalization personalize(const nn::Model& base, const PatientSplit& split, std::size_t depth,
                            const RunConfig& cfg);

// ---- evaluation modes ----

enum class Mode { Cnn0G, Cnn1G, Cnn2G, NoPolicy, Classic };
std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view text);
inline constexpr std::array<Mode, 5> kAllModes{Mode::Cnn0G, Mode::Cnn1G, Mode::Cnn2G,
                                               Mode::NoPolicy, Mode::Classic};

// Models for a CNN mode. cnn-0g deploys the base model on both nodes;
// no-policy uses the depth-2 models with the wearable answering from ECG only.
DeployedModels deployment(Mode mode, const nn::Model& base, const Personalization* g1,
                          const Personalization* g2);

struct ModeEvaluation {
  Mode mode = Mode::Cnn0G;
  std::vector<EventDecision> decisions;
  ConfusionCounts counts;
  MetricsReport metrics;
  std::optional<SimTrace> trace;  // all modes but classic
};

ModeEvaluation evaluate_cnn(Mode mode, const DeployedModels& models,
                            std::span<const EventSegments> test_events, const RunConfig& cfg);
ModeEvaluation evaluate_classic(std::span<const EventSegments> test_events, const Cohort& cohort,
                                const RunConfig& cfg);

// Models trained along the way; absent when no requested mode needed them.
struct ExperimentModels {
  std::optional<nn::Model> base;
  std::optional<Personalization> g1;
  std::optional<Personalization> g2;
};

struct ExperimentReport {
  std::uint64_t seed = 0;
  std::vector<ModeEvaluation> modes;
  ExperimentModels models;

  const ModeEvaluation& at(Mode mode) const;
};

// Trains everything the requested modes need and evaluates them on G3.
ExperimentReport run_experiment(const Cohort& cohort, const RunConfig& cfg,
                                std::span<const Mode> modes = kAllModes);

std::string metrics_json(const ExperimentReport& report);

// root/base.pva1, root/g1/, root/g2/ (the layout simulate and sweep read).
void save_experiment_models(const ExperimentModels& models, const std::filesystem::path& root);

// ---- artifacts ----

// dir/ecg.pva1, dir/pool/, dir/policy.pva1, dir/policy.txt, dir/implant.txt
void save_personalization(const Personalization& p, const std::filesystem::path& dir);
Personalization load_personalization(const std::filesystem::path& dir);

void write_trace_csv(const SimTrace& trace, const std::filesystem::path& path);

}  // namespace pva
