// pva: command-line driver for the two-node detection pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pva/error.hpp"
#include "pva/pipeline.hpp"

namespace fs = std::filesystem;
using namespace pva;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--seed", c.seed, "master seed (overrides the config)");
  cmd->add_option("--config", c.config, "run config JSON")->check(CLI::ExistingFile);
  auto* o = cmd->add_option("--out", c.out, "output directory");
  if (out_required) o->required();
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.validate();
  return cfg;
}

void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw FileError("cannot create " + p.string() + ": " + ec.message());
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw FileError("cannot open " + p.string() + " for writing");
  out << text;
  if (!out) throw FileError("write failed for " + p.string());
}

void write_series_csv(const fs::path& p, const char* header, const std::vector<double>& v) {
  std::ostringstream s;
  s << "epoch," << header << "\n";
  char buf[48];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i + 1, v[i]);
    s << buf;
  }
  write_text(p, s.str());
}

fs::path depth_dir(const fs::path& models, std::size_t depth) {
  return models / ("g" + std::to_string(depth));
}

// Models for a CNN mode from a models root laid out by train-base and
// personalize / train-policy.
DeployedModels load_deployment(Mode mode, const fs::path& models) {
  const nn::Model base = mode == Mode::Cnn0G ? nn::load_model(models / "base.pva1") : nn::Model{};
  std::optional<Personalization> p;
  if (mode == Mode::Cnn1G) p = load_personalization(depth_dir(models, 1));
  if (mode == Mode::Cnn2G || mode == Mode::NoPolicy) p = load_personalization(depth_dir(models, 2));
  const Personalization* pp = p ? &*p : nullptr;
  return deployment(mode, base, pp, pp);
}

int cmd_gen_data(const std::string& spec_path, const Common& c) {
  const CohortSpec spec = spec_path.empty() ? demo_cohort() : load_cohort_spec(spec_path);
  const std::uint64_t seed = c.seed.value_or(1);
  const auto raw = generate_raw(spec, seed);
  write_cohort_dir(spec, raw, c.out);
  std::cout << "wrote " << raw.size() << " recordings to " << c.out << "\n";
  return 0;
}

int cmd_train_base(const std::string& data, const Common& c) {
  const RunConfig cfg = resolve(c);
  const Cohort cohort = load_cohort_dir(data);
  make_dir(c.out);
  save_run_config(cfg, fs::path(c.out) / "train-base.config.json");
  nn::TrainReport rep;
  const nn::Model base = train_base_model(cohort.population, cfg, &rep);
  nn::save_model(base, fs::path(c.out) / "base.pva1");
  write_series_csv(fs::path(c.out) / "base_train.csv", "loss", rep.epoch_loss);
  std::cout << "base model: " << base.param_count() << " parameters, final loss "
            << (rep.epoch_loss.empty() ? 0.0 : rep.epoch_loss.back()) << "\n";
  return 0;
}

int cmd_personalize(const std::string& data, const std::string& base_path, std::size_t groups,
                    const Common& c) {
  const RunConfig cfg = resolve(c);
  const RunConfig dc = depth_config(cfg, groups);
  const Cohort cohort = load_cohort_dir(data);
  const nn::Model base = nn::load_model(base_path);
  const PatientSplit split = split_patient(cohort.patient);
  const auto events = personalization_events(split, groups);
  const fs::path out = c.out;
  make_dir(out / "pool");
  save_run_config(cfg, out / "personalize.config.json");
  nn::TrainReport rep;
  const nn::Model ecg = finetune_ecg(base, events, dc, &rep);
  nn::save_model(ecg, out / "ecg.pva1");
  write_series_csv(out / "ecg_finetune.csv", "loss", rep.epoch_loss);
  const CandidatePool pool = build_candidate_pool(ecg, events, dc);
  save_pool(pool, out / "pool");
  std::cout << "personalized on G1" << (groups == 2 ? "+G2" : "") << ": " << events.size()
            << " events, pool of " << pool.size() << " candidates ("
            << pool.serialized_bytes() << " bytes)\n";
  return 0;
}

int cmd_train_policy(const std::string& data, const std::string& models, std::size_t groups,
                     const Common& c) {
  const RunConfig cfg = resolve(c);
  const RunConfig dc = depth_config(cfg, groups);
  const Cohort cohort = load_cohort_dir(data);
  const PatientSplit split = split_patient(cohort.patient);
  const auto events = personalization_events(split, groups);
  const fs::path in = models;
  const fs::path out = c.out.empty() ? in : fs::path(c.out);
  const CandidatePool pool = load_pool(in / "pool");
  make_dir(out);
  save_run_config(cfg, out / "train-policy.config.json");
  const PolicyStage st = train_policy_stage(pool, events, dc);
  Personalization p;
  p.depth = groups;
  p.ecg = nn::load_model(in / "ecg.pva1");
  p.pool = pool;
  p.policy = st;
  save_personalization(p, out);
  write_series_csv(out / "policy_train.csv", "mean_reward", st.report.epoch_reward);
  std::ostringstream acc;
  acc << "candidate,accuracy\n";
  for (std::size_t i = 0; i < st.report.candidate_accuracy.size(); ++i) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%zu,%.6f\n", i, st.report.candidate_accuracy[i]);
    acc << buf;
  }
  write_text(out / "candidate_accuracy.csv", acc.str());
  std::cout << "policy trained for " << st.report.steps << " steps; implant candidate "
            << st.implant_index << "\n";
  return 0;
}

std::vector<EventSegments> test_events(const Cohort& cohort) {
  return split_patient(cohort.patient).groups[2];
}

int cmd_simulate(const std::string& data, const std::string& models, const std::string& mode_name,
                 std::optional<double> threshold, const Common& c) {
  RunConfig cfg = resolve(c);
  if (threshold) cfg.threshold = *threshold;
  cfg.validate();
  const Mode mode = mode_from_string(mode_name);
  const Cohort cohort = load_cohort_dir(data);
  const auto test = test_events(cohort);
  const fs::path out = c.out;
  make_dir(out);
  save_run_config(cfg, out / "simulate.config.json");
  ExperimentReport rep;
  rep.seed = cfg.seed;
  if (mode == Mode::Classic) {
    rep.modes.push_back(evaluate_classic(test, cohort, cfg));
  } else {
    const auto d = load_deployment(mode, models);
    rep.modes.push_back(evaluate_cnn(mode, d, test, cfg));
    write_trace_csv(*rep.modes.back().trace, out / "trace.csv");
  }
  write_text(out / "metrics.json", metrics_json(rep));
  std::cout << metrics_json(rep);
  return 0;
}

int cmd_sweep(const std::string& data, const std::string& models, const std::string& mode_name,
              const std::string& ts, const Common& c) {
  RunConfig cfg = resolve(c);
  if (!ts.empty()) cfg.thresholds = ts;
  cfg.validate();
  const Mode mode = mode_from_string(mode_name);
  if (mode == Mode::Classic) throw ValidationError("classic mode has no confidence threshold to sweep");
  const auto grid = parse_threshold_grid(cfg.thresholds);
  const Cohort cohort = load_cohort_dir(data);
  const auto test = test_events(cohort);
  const auto d = load_deployment(mode, models);
  const fs::path out = c.out;
  make_dir(out);
  save_run_config(cfg, out / "sweep.config.json");
  const auto res = sweep_threshold(test, d, grid, cfg.costs);
  write_sweep_csv(res.rows, out / "sweep.csv");
  std::ostringstream s;
  s << "mode: " << to_string(mode) << "\nplateau_T: ";
  if (res.plateau_threshold)
    s << *res.plateau_threshold << "\n";
  else
    s << "NA\n";
  write_text(out / "plateau.txt", s.str());
  std::cout << "wrote " << res.rows.size() << " rows to " << (out / "sweep.csv").string() << "\n";
  return 0;
}

int cmd_report(const std::string& in, const std::string& series, const std::string& title,
               const std::string& out) {
  const auto rows = read_sweep_csv(in);
  std::vector<std::string> names;
  std::stringstream ss(series);
  std::string name;
  while (std::getline(ss, name, ','))
    if (!name.empty()) {
      SweepRow probe;
      sweep_value(probe, name);  // rejects unknown columns
      names.push_back(name);
    }
  write_sweep_svg(rows, names, out, title);
  std::cout << "wrote " << out << "\n";
  return 0;
}

int cmd_pipeline(const std::string& data, const std::string& spec_path, const Common& c) {
  const RunConfig cfg = resolve(c);
  const fs::path out = c.out;
  make_dir(out);
  save_run_config(cfg, out / "pipeline.config.json");
  Cohort cohort;
  if (!data.empty()) {
    cohort = load_cohort_dir(data);
  } else {
    const CohortSpec spec = spec_path.empty() ? demo_cohort() : load_cohort_spec(spec_path);
    cohort = generate_cohort(spec, cfg.seed);
  }
  const ExperimentReport rep = run_experiment(cohort, cfg);
  write_text(out / "metrics.json", metrics_json(rep));
  for (const auto& m : rep.modes)
    if (m.trace) write_trace_csv(*m.trace, out / (std::string(to_string(m.mode)) + "_trace.csv"));
  save_experiment_models(rep.models, out / "models");
  std::cout << metrics_json(rep);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pva: personalized two-node VT/VF detection pipeline"};
  app.require_subcommand(1);

  Common common;
  std::string spec, data, base, models, mode = "cnn-2g", ts, in, series = "acc,upload_frac", title;
  std::size_t groups = 2;
  std::optional<double> threshold;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic cohort");
  gen->add_option("--spec", spec, "cohort spec JSON (default: built-in demo cohort)")
      ->check(CLI::ExistingFile);
  add_common(gen, common);

  auto* tb = app.add_subcommand("train-base", "train the generalized ECG model on population data");
  tb->add_option("--data", data, "cohort directory from gen-data")->required();
  add_common(tb, common);

  auto* pers = app.add_subcommand("personalize", "fine-tune the ECG model and build the candidate pool");
  pers->add_option("--data", data, "cohort directory")->required();
  pers->add_option("--base", base, "base model file")->required()->check(CLI::ExistingFile);
  pers->add_option("--groups", groups, "personalization groups (1 = G1, 2 = G1+G2)")
      ->check(CLI::Range(1, 2));
  add_common(pers, common);

  auto* tp = app.add_subcommand("train-policy", "train the candidate-selection policy");
  tp->add_option("--data", data, "cohort directory")->required();
  tp->add_option("--models", models, "personalization directory holding ecg.pva1 and pool/")
      ->required()
      ->check(CLI::ExistingDirectory);
  tp->add_option("--groups", groups, "personalization groups (1 or 2)")->check(CLI::Range(1, 2));
  add_common(tp, common, false);

  auto* sim = app.add_subcommand("simulate", "run the cooperative protocol at one threshold");
  sim->add_option("--data", data, "cohort directory")->required();
  sim->add_option("--models", models, "models root (base.pva1, g1/, g2/)");
  sim->add_option("--mode", mode, "cnn-0g | cnn-1g | cnn-2g | no-policy | classic");
  sim->add_option("--threshold", threshold, "confidence threshold T")->check(CLI::Range(0.0, 1.0));
  add_common(sim, common);

  auto* sw = app.add_subcommand("sweep", "sweep the confidence threshold");
  sw->add_option("--data", data, "cohort directory")->required();
  sw->add_option("--models", models, "models root (base.pva1, g1/, g2/)")->required();
  sw->add_option("--mode", mode, "cnn-0g | cnn-1g | cnn-2g | no-policy");
  sw->add_option("--ts", ts, "threshold grid lo:step:hi");
  add_common(sw, common);

  auto* rp = app.add_subcommand("report", "render a sweep CSV as an SVG line chart");
  rp->add_option("--in", in, "sweep CSV")->required()->check(CLI::ExistingFile);
  rp->add_option("--series", series, "comma-separated columns to plot");
  rp->add_option("--title", title, "chart title");
  std::string svg_out;
  rp->add_option("--out", svg_out, "output SVG file")->required();

  auto* pl = app.add_subcommand("pipeline", "train every mode end to end and report metrics");
  pl->add_option("--data", data, "cohort directory (default: generate the cohort in memory)");
  pl->add_option("--spec", spec, "cohort spec JSON")->check(CLI::ExistingFile);
  add_common(pl, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return cmd_gen_data(spec, common);
    if (*tb) return cmd_train_base(data, common);
    if (*pers) return cmd_personalize(data, base, groups, common);
    if (*tp) return cmd_train_policy(data, models, groups, common);
    if (*sim) {
      if (models.empty() && mode != "classic") throw ValidationError("--models is required for CNN modes");
      return cmd_simulate(data, models, mode, threshold, common);
    }
    if (*sw) return cmd_sweep(data, models, mode, ts, common);
    if (*rp) return cmd_report(in, series, title, svg_out);
    if (*pl) return cmd_pipeline(data, spec, common);
  } catch (const pva::Error& e) {
    std::cerr << "pva: error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "pva: unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
