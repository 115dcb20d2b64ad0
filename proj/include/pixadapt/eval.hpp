#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pixadapt/adapters.hpp"
#include "pixadapt/feature_store.hpp"

namespace pixadapt {

/// Intersection over union of the non-background pixels of two masks.
/// Two empty masks agree perfectly (1.0).
double iou(const LabelMask& pred, const LabelMask& gt);
/// IoU restricted to pixels carrying `label` in each mask.
double iou(const LabelMask& pred, const LabelMask& gt, int label);

struct LocalizationCase {
  std::optional<Pixel> predicted;
  Pixel ground_truth;
  int label = 0;
  std::string slice;
  std::string volume;
};

enum class CaseUnit { kSlice, kVolume };

/// Fraction of cases whose prediction lies strictly closer than `radius`
/// (Euclidean) to the ground truth; missing predictions fail. In volume
/// mode a (volume, label) case passes only if all of its slices pass.
double localization_accuracy(std::span<const LocalizationCase> cases, double radius,
                             CaseUnit unit = CaseUnit::kSlice);

/// One binary prediction from a single-label method plus the per-pixel score
/// it was derived from (read from `channel`).
struct LabelClaim {
  int label = 0;
  LabelMask mask;
  ScoreMap scores;
  int channel = 0;
};

/// Merges per-label binary predictions: each claimed pixel goes to the
/// claiming label with the highest score there (lower label on ties).
LabelMask aggregate_binary_multilabel(std::span<const LabelClaim> claims);

struct LabelMetrics {
  std::optional<double> iou;
  std::optional<double> localization_accuracy;
  std::size_t cases = 0;

  friend bool operator==(const LabelMetrics&, const LabelMetrics&) = default;
};

struct MetricReport {
  std::string task;
  std::string adapter;
  std::map<int, LabelMetrics> per_label;
  LabelMetrics aggregate;
  double radius = 10.0;
  std::vector<std::uint64_t> seeds;
  std::string config_hash;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

/// Writes the report as JSON at `path` and an aligned text table next to it
/// (same stem, .txt extension). Ratios in the table use three decimals.
void emit_report(const MetricReport& report, const std::filesystem::path& path);
MetricReport read_report(const std::filesystem::path& path);
std::string format_report_table(const MetricReport& report);

}  // namespace pixadapt
