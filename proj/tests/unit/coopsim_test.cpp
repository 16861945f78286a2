#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "pva/coopsim.hpp"
#include "pva/error.hpp"

namespace {

using namespace pva;

// probe_model(0, 4) has CS = |tanh(4 x0)|.
float level_for_cs(double cs, bool vtvf) {
  const auto v = static_cast<float>(std::atanh(cs) / 4.0);
  return vtvf ? v : -v;
}

Segment seg(Domain d, float x0, double t = 0.0) {
  Segment s;
  s.samples.assign(kSegmentSamples, 0.0f);
  s.samples[0] = x0;
  s.domain = d;
  s.t_start = t;
  return s;
}

DeployedModels probe_deployment(bool with_policy) {
  DeployedModels m;
  m.ecg = fixture::probe_model(0);
  m.iegm = fixture::probe_model(0);
  if (with_policy) {
    m.pool = replicate_pool(fixture::probe_model(0));
    m.policy = PolicyNet::zeros();
  }
  return m;
}

TEST(CostModel, DefaultsAndExtra) {
  const CostModel c;
  EXPECT_EQ(c.l_imp_ms, 31.0);
  EXPECT_EQ(c.upload_extra_ms(true), 120.0);
  EXPECT_EQ(c.upload_extra_ms(false), 108.0);
  CostModel bad;
  bad.e_tx_mj = -1;
  EXPECT_THROW(bad.validate(), ValidationError);
}

TEST(ImplantStep, ThresholdBoundaries) {
  const auto m = fixture::probe_model(0);
  const auto s = seg(Domain::IEGM, 0.3f);
  EXPECT_FALSE(implantable_step(m, s.samples, 0.0).upload);
  EXPECT_TRUE(implantable_step(m, s.samples, 1.0).upload);
  const auto s04 = seg(Domain::IEGM, level_for_cs(0.4, true));
  const auto step = implantable_step(m, s04.samples, 0.5);
  EXPECT_NEAR(step.prediction.cs, 0.4, 1e-6);
  EXPECT_TRUE(step.upload);
  EXPECT_THROW(implantable_step(m, s.samples, 1.5), ValidationError);
}

TEST(WearableResolve, HigherConfidenceWins) {
  const auto models = probe_deployment(true);
  const auto ecg = seg(Domain::ECG, level_for_cs(0.9, false));
  const auto iegm = seg(Domain::IEGM, level_for_cs(0.3, true));
  const auto r = wearable_resolve(ecg, iegm, models.ecg, &*models.pool, &*models.policy);
  EXPECT_EQ(r.prediction.klass, Label::NonVTVF);
  EXPECT_EQ(r.resolved_by, ResolvedBy::WearableECG);
  const auto ecg_lo = seg(Domain::ECG, level_for_cs(0.2, false));
  const auto iegm_hi = seg(Domain::IEGM, level_for_cs(0.7, true));
  const auto r2 = wearable_resolve(ecg_lo, iegm_hi, models.ecg, &*models.pool, &*models.policy);
  EXPECT_EQ(r2.prediction.klass, Label::VTVF);
  EXPECT_EQ(r2.resolved_by, ResolvedBy::WearablePolicy);
}

TEST(WearableResolve, TieGoesToEcg) {
  const auto models = probe_deployment(true);
  const auto ecg = seg(Domain::ECG, -0.2f);
  const auto iegm = seg(Domain::IEGM, 0.2f);
  const auto r = wearable_resolve(ecg, iegm, models.ecg, &*models.pool, &*models.policy);
  EXPECT_EQ(r.prediction.klass, Label::NonVTVF);
  EXPECT_EQ(r.resolved_by, ResolvedBy::WearableECG);
}

TEST(WearableResolve, DegenerateEqualsSingleModel) {
  const auto models = probe_deployment(true);
  const auto ecg = seg(Domain::ECG, 0.17f), iegm = seg(Domain::IEGM, 0.17f);
  const auto r = wearable_resolve(ecg, iegm, models.ecg, &*models.pool, &*models.policy);
  EXPECT_EQ(r.prediction.cs, infer_with_confidence(models.ecg, ecg.samples).cs);
  const auto ecg_only = wearable_resolve(ecg, iegm, models.ecg, nullptr, nullptr);
  EXPECT_EQ(ecg_only.resolved_by, ResolvedBy::WearableECG);
  EXPECT_EQ(ecg_only.prediction.cs, r.prediction.cs);
}

TEST(WearableResolve, MisalignedRejected) {
  const auto models = probe_deployment(false);
  EXPECT_THROW(wearable_resolve(seg(Domain::ECG, 0, 0.0), seg(Domain::IEGM, 0, 2.0), models.ecg, nullptr, nullptr),
               DataError);
  EXPECT_THROW(wearable_resolve(seg(Domain::IEGM, 0), seg(Domain::IEGM, 0), models.ecg, nullptr, nullptr),
               DataError);
}

void check_identities(const SimTrace& tr) {
  const CostModel& c = tr.costs;
  std::size_t ups = 0;
  for (const auto& o : tr.outcomes) {
    EXPECT_EQ(o.uploaded, o.implant.cs < tr.threshold);
    if (!o.uploaded) {
      EXPECT_EQ(o.resolved_by, ResolvedBy::Implant);
      EXPECT_EQ(o.latency_ms, c.l_imp_ms);
      EXPECT_EQ(o.prediction.klass, o.implant.klass);
    }
    ups += o.uploaded;
  }
  const double n = static_cast<double>(tr.outcomes.size());
  const double p = static_cast<double>(ups) / n;
  EXPECT_EQ(tr.uploads(), ups);
  EXPECT_NEAR(tr.upload_fraction(), p, 1e-15);
  EXPECT_NEAR(tr.mean_latency_ms(), c.l_imp_ms + p * c.upload_extra_ms(tr.with_policy), 1e-9);
  EXPECT_NEAR(tr.total_energy_mj(), n * c.e_imp_inf_mj + ups * (c.e_tx_mj + c.e_rx_mj), 1e-9);
  // Replaying final classes through fresh evaluators reproduces every decision.
  std::vector<std::vector<Label>> per_event(tr.events.size());
  for (const auto& o : tr.outcomes) per_event[o.event].push_back(o.prediction.klass);
  for (std::size_t e = 0; e < tr.events.size(); ++e) {
    const auto d = decide_event(per_event[e], tr.events[e].truth);
    EXPECT_EQ(d.shocked, tr.events[e].shocked);
    EXPECT_EQ(d.shock_segment_index, tr.events[e].shock_segment_index);
  }
}

TEST(Simulate, NoUploadsAtZeroThreshold) {
  const auto events = fixture::crafted_events(4, 6, {0.5f, -0.05f, 0.02f}, 1);
  const auto tr = simulate_events(events, probe_deployment(true), 0.0);
  ASSERT_EQ(tr.outcomes.size(), 24u);
  EXPECT_EQ(tr.uploads(), 0u);
  EXPECT_EQ(tr.mean_latency_ms(), 31.0);
  EXPECT_NEAR(tr.total_energy_mj(), 24 * 0.1, 1e-12);
  check_identities(tr);
}

TEST(Simulate, ForcedThirdUploadGives71ms) {
  // CS is ~1 for |x0| = 2 and ~0.04 for x0 = 0.01.
  const auto events = fixture::crafted_events(3, 9, {2.0f, -2.0f, 0.01f}, 2);
  const auto tr = simulate_events(events, probe_deployment(true), 0.5);
  EXPECT_EQ(tr.uploads() * 3, tr.outcomes.size());
  EXPECT_EQ(tr.mean_latency_ms(), 71.0);
  check_identities(tr);
  const auto np = simulate_events(events, probe_deployment(false), 0.5);
  EXPECT_EQ(np.uploads(), tr.uploads());
  EXPECT_LE(np.mean_latency_ms(), tr.mean_latency_ms());
  EXPECT_NEAR(np.mean_latency_ms(), 31.0 + 108.0 / 3, 1e-9);
}

TEST(Simulate, CooperationFixesLowConfidenceErrors) {
  // The implant sees IEGM x0 = 0.01 on every segment: weakly VT/VF. The ECG
  // side carries the truth with CS ~1, so uploads repair NonVTVF events.
  const auto events = fixture::crafted_events(4, 5, {0.01f}, 3);
  const auto local = simulate_events(events, probe_deployment(true), 0.0);
  const auto coop = simulate_events(events, probe_deployment(true), 0.5);
  std::size_t local_ok = 0, coop_ok = 0;
  for (const auto& d : local.events) local_ok += d.shocked == (d.truth == Label::VTVF);
  for (const auto& d : coop.events) coop_ok += d.shocked == (d.truth == Label::VTVF);
  EXPECT_EQ(local_ok, 2u);
  EXPECT_EQ(coop_ok, 4u);
  for (const auto& o : coop.outcomes) EXPECT_EQ(o.resolved_by, ResolvedBy::WearableECG);
}

TEST(Simulate, CountMismatchRejected) {
  auto events = fixture::crafted_events(1, 4, {0.5f}, 4);
  events[0].ecg.pop_back();
  EXPECT_THROW(simulate_events(events, probe_deployment(false), 0.5), DataError);
  const auto ok = fixture::crafted_events(1, 4, {0.5f}, 4);
  EXPECT_THROW(simulate_events(ok, probe_deployment(false), -0.1), ValidationError);
}

TEST(Simulate, EmptyEventsSkipped) {
  auto events = fixture::crafted_events(2, 4, {0.5f}, 5);
  events.insert(events.begin() + 1, EventSegments{});
  const auto tr = simulate_events(events, probe_deployment(false), 0.5);
  EXPECT_EQ(tr.events.size(), 2u);
  EXPECT_EQ(tr.event_recordings.size(), 2u);
}

TEST(ThresholdGrid, ParseAndArithmetic) {
  const auto g = parse_threshold_grid("0:0.1:1");
  ASSERT_EQ(g.size(), 11u);
  EXPECT_EQ(g.front(), 0.0);
  EXPECT_EQ(g.back(), 1.0);
  EXPECT_NEAR(g[3], 0.3, 1e-12);
  EXPECT_EQ(threshold_grid(0.2, 0.25, 0.9).size(), 3u);
  EXPECT_THROW(parse_threshold_grid("0:0.1"), ValidationError);
  EXPECT_THROW(parse_threshold_grid("0:x:1"), ValidationError);
  EXPECT_THROW(threshold_grid(0, 0, 1), ValidationError);
  EXPECT_THROW(threshold_grid(0, 0.1, 1.5), ValidationError);
}

TEST(Sweep, MatchesPerThresholdSimulationAndIsMonotone) {
  const auto events = fixture::crafted_events(6, 7, {0.9f, -0.02f, 0.05f, -0.3f, 0.12f, 0.0f, -0.6f}, 6);
  const auto models = probe_deployment(true);
  const auto grid = threshold_grid(0, 0.1, 1);
  const auto res = sweep_threshold(events, models, grid);
  ASSERT_EQ(res.rows.size(), 11u);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto direct = simulate_events(events, models, grid[k]);
    const auto& tr = res.traces[k];
    ASSERT_EQ(direct.outcomes.size(), tr.outcomes.size());
    for (std::size_t i = 0; i < tr.outcomes.size(); ++i) {
      EXPECT_EQ(direct.outcomes[i].uploaded, tr.outcomes[i].uploaded);
      EXPECT_EQ(direct.outcomes[i].prediction.klass, tr.outcomes[i].prediction.klass);
      EXPECT_EQ(direct.outcomes[i].prediction.cs, tr.outcomes[i].prediction.cs);
      EXPECT_EQ(direct.outcomes[i].latency_ms, tr.outcomes[i].latency_ms);
    }
    check_identities(tr);
    if (k > 0) {
      EXPECT_GE(res.rows[k].upload_frac, res.rows[k - 1].upload_frac);
      EXPECT_GE(res.rows[k].mean_latency_ms, res.rows[k - 1].mean_latency_ms);
      EXPECT_GE(res.rows[k].total_energy_mj, res.rows[k - 1].total_energy_mj);
    }
  }
  const auto local = simulate_events(events, models, 0.0);
  EXPECT_EQ(res.rows[0].metrics.acc, metrics(event_confusion(local.events)).acc);
  const std::vector<double> unsorted{0.5, 0.1};
  EXPECT_THROW(sweep_threshold(events, models, unsorted), ValidationError);
}

TEST(Plateau, FirstStableThreshold) {
  std::vector<SweepRow> rows(5);
  const double acc[] = {0.5, 0.6, 0.8, 0.803, 0.801};
  for (int i = 0; i < 5; ++i) {
    rows[i].threshold = 0.25 * i;
    rows[i].metrics.acc = acc[i];
  }
  EXPECT_EQ(plateau_threshold(rows), 0.5);
  rows[4].metrics.acc = 0.9;
  EXPECT_EQ(plateau_threshold(rows), 1.0);
  rows[2].metrics.acc.reset();
  EXPECT_FALSE(plateau_threshold(rows).has_value());
}

TEST(SimulateRecording, DownsamplesAndGroups) {
  RhythmSpec nsr;
  nsr.rhythm = RhythmClass::NSR;
  nsr.rate_bpm = 70;
  nsr.duration_s = 10;
  RhythmSpec vt = nsr;
  vt.rhythm = RhythmClass::VT;
  vt.rate_bpm = 190;
  const std::vector<RhythmSpec> specs{nsr, vt};
  const Recording rec = generate_recording(specs, 4, "sim");
  const auto tr = simulate_recording(rec, probe_deployment(true), 0.5);
  EXPECT_EQ(tr.outcomes.size(), 10u);
  EXPECT_EQ(tr.events.size(), 2u);
  EXPECT_EQ(tr.event_recordings[0], "sim");
  check_identities(tr);
  EXPECT_EQ(to_string(ResolvedBy::WearablePolicy), "wearable_policy");
}

}  // namespace
