#include "pva/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pva/error.hpp"

namespace pva {

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt(std::optional<double> v) {
  if (!v) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

std::string fmt_num(double v, const char* f = "%.6f") {
  char buf[40];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::optional<double> parse_field(const std::string& s, std::size_t row) {
  if (s == "NA") return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("sweep csv row " + std::to_string(row) + ": bad number '" + s + "'");
  }
}

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

}  // namespace

ConfusionCounts event_confusion(std::span<const EventDecision> decisions) {
  ConfusionCounts c;
  for (const auto& d : decisions) {
    if (d.truth == Label::VTVF)
      (d.shocked ? c.tp : c.fn)++;
    else
      (d.shocked ? c.fp : c.tn)++;
  }
  return c;
}

std::optional<double> f1_score(std::optional<double> ppv, std::optional<double> se) {
  if (!ppv || !se || *ppv + *se == 0.0) return std::nullopt;
  return 2.0 * *ppv * *se / (*ppv + *se);
}

MetricsReport metrics(const ConfusionCounts& c) {
  MetricsReport m;
  m.se = ratio(c.tp, c.tp + c.fn);
  m.sp = ratio(c.tn, c.tn + c.fp);
  m.ppv = ratio(c.tp, c.tp + c.fp);
  m.npv = ratio(c.tn, c.tn + c.fn);
  m.acc = ratio(c.tp + c.tn, c.total());
  if (m.se && m.sp) m.bac = (*m.se + *m.sp) / 2.0;
  m.f1 = f1_score(m.ppv, m.se);
  return m;
}

std::optional<double> sweep_value(const SweepRow& row, const std::string& column) {
  if (column == "T") return row.threshold;
  if (column == "upload_frac") return row.upload_frac;
  if (column == "mean_latency_ms") return row.mean_latency_ms;
  if (column == "total_energy_mj") return row.total_energy_mj;
  if (column == "se") return row.metrics.se;
  if (column == "sp") return row.metrics.sp;
  if (column == "ppv") return row.metrics.ppv;
  if (column == "npv") return row.metrics.npv;
  if (column == "acc") return row.metrics.acc;
  if (column == "bac") return row.metrics.bac;
  if (column == "f1") return row.metrics.f1;
  throw ValidationError("unknown sweep column '" + column + "'");
}

void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  out << kSweepCsvHeader << "\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << fmt_num(r.threshold, "%.4f") << "," << fmt_num(r.upload_frac) << ","
        << fmt_num(r.mean_latency_ms) << "," << fmt_num(r.total_energy_mj) << "," << fmt(m.se)
        << "," << fmt(m.sp) << "," << fmt(m.ppv) << "," << fmt(m.npv) << "," << fmt(m.acc) << ","
        << fmt(m.bac) << "," << fmt(m.f1) << "\n";
  }
  if (!out) throw FileError("write failed for " + path.string());
}

std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kSweepCsvHeader)
    throw ParseError("sweep csv row 1: unexpected header");
  std::vector<SweepRow> rows;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 11) throw ParseError("sweep csv row " + std::to_string(row) + ": expected 11 fields");
    auto req = [&](std::size_t i) {
      const auto v = parse_field(f[i], row);
      if (!v) throw ParseError("sweep csv row " + std::to_string(row) + ": NA in required column");
      return *v;
    };
    SweepRow r;
    r.threshold = req(0);
    r.upload_frac = req(1);
    r.mean_latency_ms = req(2);
    r.total_energy_mj = req(3);
    r.metrics.se = parse_field(f[4], row);
    r.metrics.sp = parse_field(f[5], row);
    r.metrics.ppv = parse_field(f[6], row);
    r.metrics.npv = parse_field(f[7], row);
    r.metrics.acc = parse_field(f[8], row);
    r.metrics.bac = parse_field(f[9], row);
    r.metrics.f1 = parse_field(f[10], row);
    rows.push_back(r);
  }
  return rows;
}

void write_sweep_svg(std::span<const SweepRow> rows, std::span<const std::string> series,
                     const std::filesystem::path& path, const std::string& title) {
  if (rows.empty()) throw DataError("no sweep rows to plot");
  if (series.empty()) throw DataError("no series requested");
  for (const auto& s : series) (void)sweep_value(rows.front(), s);  // rejects unknown columns
  constexpr double W = 640, H = 400, L = 70, R = 150, T = 40, B = 50;
  const double pw = W - L - R, ph = H - T - B;

  double xmin = rows.front().threshold, xmax = rows.front().threshold;
  double ymin = 0.0, ymax = 0.0;
  bool first = true;
  for (const auto& r : rows) {
    xmin = std::min(xmin, r.threshold);
    xmax = std::max(xmax, r.threshold);
    for (const auto& s : series)
      if (auto v = sweep_value(r, s)) {
        if (first) ymin = ymax = *v, first = false;
        ymin = std::min(ymin, *v);
        ymax = std::max(ymax, *v);
      }
  }
  ymin = std::min(ymin, 0.0);
  if (ymax <= ymin) ymax = ymin + 1.0;
  if (xmax <= xmin) xmax = xmin + 1.0;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return T + ph - (y - ymin) / (ymax - ymin) * ph; };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  if (!title.empty())
    out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
        << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T + ph << "\" x2=\"" << L + pw << "\" y2=\"" << T + ph
      << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << T + ph
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 5.0;
    const double yv = ymin + (ymax - ymin) * i / 5.0;
    out << "<text x=\"" << fmt_num(px(xv), "%.1f") << "\" y=\"" << T + ph + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt_num(xv, "%.2f") << "</text>\n";
    out << "<text x=\"" << L - 6 << "\" y=\"" << fmt_num(py(yv) + 4, "%.1f")
        << "\" text-anchor=\"end\" font-size=\"11\">" << fmt_num(yv, "%.3g") << "</text>\n";
  }
  out << "<text x=\"" << L + pw / 2 << "\" y=\"" << H - 10
      << "\" text-anchor=\"middle\" font-size=\"13\">Confidence score threshold T</text>\n";
  out << "<text x=\"18\" y=\"" << T + ph / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
      << "transform=\"rotate(-90 18 " << T + ph / 2 << ")\">value</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kColors[s % std::size(kColors)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    bool sep = false;
    for (const auto& r : rows)
      if (auto v = sweep_value(r, series[s])) {
        out << (sep ? " " : "") << fmt_num(px(r.threshold), "%.2f") << ","
            << fmt_num(py(*v), "%.2f");
        sep = true;
      }
    out << "\"/>\n";
    const double ly = T + 16 + 18.0 * static_cast<double>(s);
    out << "<line x1=\"" << L + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << L + pw + 32
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << L + pw + 38 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">"
        << xml_escape(series[s]) << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw FileError("write failed for " + path.string());
}

}  // namespace pva
