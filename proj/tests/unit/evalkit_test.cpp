#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "pva/error.hpp"
#include "pva/evalkit.hpp"

namespace {

using namespace pva;

EventDecision dec(bool shocked, Label truth) {
  EventDecision d;
  d.shocked = shocked;
  d.truth = truth;
  if (shocked) d.shock_segment_index = 3;
  return d;
}

TEST(Confusion, Tallies) {
  const std::vector<EventDecision> one{dec(true, Label::VTVF)};
  EXPECT_EQ(event_confusion(one), (ConfusionCounts{1, 0, 0, 0}));
  const std::vector<EventDecision> mixed{dec(true, Label::VTVF),     dec(false, Label::VTVF),
                                         dec(true, Label::NonVTVF),  dec(false, Label::NonVTVF),
                                         dec(false, Label::NonVTVF), dec(true, Label::VTVF),
                                         dec(true, Label::VTVF),     dec(false, Label::NonVTVF)};
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
  for (const auto& d : mixed) {
    const bool pos = d.truth == Label::VTVF;
    tp += pos && d.shocked;
    fn += pos && !d.shocked;
    fp += !pos && d.shocked;
    tn += !pos && !d.shocked;
  }
  EXPECT_EQ(event_confusion(mixed), (ConfusionCounts{tp, fn, tn, fp}));
  EXPECT_EQ(event_confusion(mixed).total(), 8u);
}

TEST(Metrics, HandComputed) {
  const auto m = metrics({3, 1, 5, 1});
  EXPECT_NEAR(*m.se, 0.75, 1e-12);
  EXPECT_NEAR(*m.sp, 5.0 / 6, 1e-12);
  EXPECT_NEAR(*m.ppv, 0.75, 1e-12);
  EXPECT_NEAR(*m.npv, 5.0 / 6, 1e-12);
  EXPECT_NEAR(*m.acc, 0.8, 1e-12);
  EXPECT_NEAR(*m.bac, (0.75 + 5.0 / 6) / 2, 1e-12);
  EXPECT_NEAR(*m.f1, 0.75, 1e-12);
}

TEST(Metrics, PerfectAndUndefined) {
  const auto p = metrics({4, 0, 6, 0});
  for (auto v : {p.se, p.sp, p.ppv, p.npv, p.acc, p.bac, p.f1}) EXPECT_EQ(*v, 1.0);
  const auto e = metrics({});
  for (auto v : {e.se, e.sp, e.ppv, e.npv, e.acc, e.bac, e.f1}) EXPECT_FALSE(v.has_value());
  const auto only_neg = metrics({0, 0, 3, 1});
  EXPECT_FALSE(only_neg.se.has_value());
  EXPECT_FALSE(only_neg.bac.has_value());
  EXPECT_EQ(*only_neg.ppv, 0.0);
  EXPECT_NEAR(*only_neg.sp, 0.75, 1e-12);
  const auto zero_f1 = metrics({0, 2, 3, 1});
  EXPECT_EQ(*zero_f1.se, 0.0);
  EXPECT_FALSE(zero_f1.f1.has_value());
}

TEST(Metrics, ScaleFreeAndIdentities) {
  for (std::size_t tp = 0; tp < 4; ++tp)
    for (std::size_t fn = 0; fn < 3; ++fn)
      for (std::size_t tn = 0; tn < 3; ++tn)
        for (std::size_t fp = 0; fp < 3; ++fp) {
          const ConfusionCounts c{tp, fn, tn, fp};
          const auto m = metrics(c);
          const auto s = metrics({7 * tp, 7 * fn, 7 * tn, 7 * fp});
          EXPECT_EQ(m.se.has_value(), s.se.has_value());
          if (m.acc) EXPECT_NEAR(*m.acc, *s.acc, 1e-12);
          if (m.f1) EXPECT_NEAR(*m.f1, *s.f1, 1e-12);
          if (m.se && m.sp) EXPECT_NEAR(*m.bac, (*m.se + *m.sp) / 2, 1e-15);
          if (m.f1) EXPECT_NEAR(*m.f1, 2 * *m.ppv * *m.se / (*m.ppv + *m.se), 1e-15);
        }
}

TEST(Metrics, PublishedRowConsistency) {
  EXPECT_NEAR(*f1_score(0.965, 0.984), 0.975, 0.0015);
  EXPECT_FALSE(f1_score(std::nullopt, 0.5).has_value());
  EXPECT_FALSE(f1_score(0.0, 0.0).has_value());
}

std::vector<SweepRow> sample_rows() {
  std::vector<SweepRow> rows;
  for (int i = 0; i <= 10; ++i) {
    SweepRow r;
    r.threshold = i / 10.0;
    r.upload_frac = i / 20.0;
    r.mean_latency_ms = 31 + r.upload_frac * 120;
    r.total_energy_mj = 10 + i * 0.25;
    r.metrics = metrics({5, static_cast<std::size_t>(i % 3), 4, 1});
    if (i == 4) r.metrics.se.reset();
    rows.push_back(r);
  }
  return rows;
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "pva_evalkit_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

TEST(SweepCsv, RoundTrip) {
  const auto rows = sample_rows();
  const auto path = temp_file("sweep.csv");
  write_sweep_csv(rows, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kSweepCsvHeader);
  std::size_t data = 0;
  while (std::getline(in, line)) data += !line.empty();
  EXPECT_EQ(data, 11u);
  const auto back = read_sweep_csv(path);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_NEAR(back[i].threshold, rows[i].threshold, 1e-9);
    EXPECT_NEAR(back[i].mean_latency_ms, rows[i].mean_latency_ms, 1e-6);
    EXPECT_NEAR(*back[i].metrics.acc, *rows[i].metrics.acc, 1e-6);
    EXPECT_EQ(back[i].metrics.se.has_value(), rows[i].metrics.se.has_value());
  }
}

TEST(SweepCsv, BadInputs) {
  const auto path = temp_file("bad.csv");
  {
    std::ofstream out(path);
    out << "T,x\n";
  }
  EXPECT_THROW(read_sweep_csv(path), ParseError);
  EXPECT_THROW(read_sweep_csv(temp_file("absent.csv")), FileError);
}

TEST(SweepSvg, OnePolylinePerSeries) {
  const auto rows = sample_rows();
  const std::vector<std::string> series{"acc", "upload_frac", "mean_latency_ms"};
  const auto path = temp_file("plot.svg");
  write_sweep_svg(rows, series, path, "Accuracy & upload <T>");
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string svg = ss.str();
  EXPECT_EQ(svg.rfind("<?xml", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  std::size_t n = 0;
  for (auto p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++n;
  EXPECT_EQ(n, series.size());
  EXPECT_NE(svg.find("Confidence score threshold T"), std::string::npos);
  EXPECT_EQ(svg.find("<T>"), std::string::npos);
  // Every tag that opens is closed or self-closing.
  std::size_t opens = 0, closes = 0;
  const std::regex open_tag("<([a-z]+)[^>]*[^/]>"), close_tag("</[a-z]+>");
  for (std::sregex_iterator it(svg.begin(), svg.end(), open_tag), end; it != end; ++it) ++opens;
  for (std::sregex_iterator it(svg.begin(), svg.end(), close_tag), end; it != end; ++it) ++closes;
  EXPECT_EQ(opens, closes);
  EXPECT_THROW(write_sweep_svg({}, series, path), DataError);
  const std::vector<std::string> unknown{"nope"};
  EXPECT_THROW(write_sweep_svg(rows, unknown, path), ValidationError);
}

TEST(SweepValue, Columns) {
  const auto r = sample_rows()[2];
  EXPECT_EQ(*sweep_value(r, "T"), r.threshold);
  EXPECT_EQ(*sweep_value(r, "f1"), *r.metrics.f1);
  EXPECT_THROW(sweep_value(r, "bogus"), ValidationError);
}

}  // namespace
