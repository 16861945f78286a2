#pragma once

// Event-level confusion accounting, the detection metric suite, and sweep
// report emission (CSV tables and SVG line charts).

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pva/detect.hpp"

namespace pva {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;

  std::size_t total() const { return tp + fn + tn + fp; }
  bool operator==(const ConfusionCounts&) const = default;
};

ConfusionCounts event_confusion(std::span<const EventDecision> decisions);

// Each metric is empty when its ratio is 0/0.
struct MetricsReport {
  std::optional<double> se, sp, ppv, npv, acc, bac, f1;
};

MetricsReport metrics(const ConfusionCounts& c);
// Harmonic mean of precision and recall; empty when undefined.
std::optional<double> f1_score(std::optional<double> ppv, std::optional<double> se);

struct SweepRow {
  double threshold = 0.0;
  double upload_frac = 0.0;
  double mean_latency_ms = 0.0;
  double total_energy_mj = 0.0;
  MetricsReport metrics;
};

inline constexpr const char* kSweepCsvHeader =
    "T,upload_frac,mean_latency_ms,total_energy_mj,se,sp,ppv,npv,acc,bac,f1";

// Undefined metrics are written as NA.
void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path);
std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path);

// Line chart with T on the x axis and one polyline per series. Series names
// are CSV column names (e.g. "acc", "upload_frac", "mean_latency_ms").
void write_sweep_svg(std::span<const SweepRow> rows, std::span<const std::string> series,
                     const std::filesystem::path& path, const std::string& title = "");

std::optional<double> sweep_value(const SweepRow& row, const std::string& column);

}  // namespace pva
