#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pixadapt/feature_store.hpp"

namespace pixadapt::synth {

enum class Shape { kFull, kRect, kDisk };

/// A feature cluster painted over a region of the slice. Label 0 marks a
/// background cluster.
struct RegionSpec {
  int label = 0;
  Shape shape = Shape::kRect;
  int row = 0;   // rect: top-left row; disk: centre row
  int col = 0;   // rect: top-left col; disk: centre col
  int rows = 0;  // rect extent
  int cols = 0;
  int radius = 0;  // disk radius (pixels within Euclidean distance <= radius)
  std::vector<double> direction;  // cluster mean direction, normalised on use
  double noise = 0.0;             // per-component Gaussian std
  double gray = 0.5;              // intensity level before drift

  bool contains(int r, int c, int row_shift, int col_shift) const;
};

struct SliceSpec {
  double drift = 1.0;  // multiplies features and intensity
  int row_shift = 0;   // applied to foreground regions
  int col_shift = 0;
  bool foreground = true;  // false: background clusters only
};

struct ScenarioSpec {
  std::string name;
  int height = 64;
  int width = 64;
  int dim = 32;
  int label_count = 1;
  std::vector<RegionSpec> regions;     // foreground, label >= 1
  std::vector<RegionSpec> background;  // label 0; the first fills uncovered pixels
  std::vector<SliceSpec> slices;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Slice {
  FeatureMap features;
  LabelMask mask;
  IntensityImage intensity;
  /// Per pixel: index into background clusters, or background.size() + i for
  /// foreground region i.
  std::vector<int> source;
};

struct Scenario {
  ScenarioSpec spec;
  std::vector<Slice> slices;
};

Scenario generate_scenario(const ScenarioSpec& spec);

/// 64x64, D=32, three foreground labels with near-orthogonal directions,
/// two background clusters, six slices with drift and small shifts.
ScenarioSpec separable_spec(std::uint64_t seed);

/// Cosine between the foreground direction and the confound background
/// direction in confound_spec().
inline constexpr double kConfoundCosine = 0.8;
/// Index of the confound cluster in confound_spec().background.
inline constexpr int kConfoundCluster = 1;

/// One foreground label plus a background cluster whose mean direction has
/// cosine kConfoundCosine with it, so a fixed 0.5 cosine threshold fires on
/// it while a learned boundary can still separate the two.
ScenarioSpec confound_spec(std::uint64_t seed);

/// Copy of `spec` whose slices contain background clusters only.
ScenarioSpec background_only(const ScenarioSpec& spec, int slice_count, std::uint64_t seed);

std::string spec_to_json(const ScenarioSpec& spec);
ScenarioSpec spec_from_json(const std::string& text);

/// Writes slice_NNN.pxf / slice_NNN.pxm / slice_NNN_intensity.pxf and
/// scenario.json into `dir`; returns the written paths in write order.
std::vector<std::filesystem::path> write_scenario(const Scenario& scenario,
                                                  const std::filesystem::path& dir);

}  // namespace pixadapt::synth
