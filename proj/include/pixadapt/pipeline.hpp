#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pixadapt/adapters.hpp"
#include "pixadapt/error.hpp"
#include "pixadapt/eval.hpp"
#include "pixadapt/feature_store.hpp"
#include "pixadapt/sampling.hpp"

namespace pixadapt {

// ---------------------------------------------------------------------------
// Post-processing
// ---------------------------------------------------------------------------

/// Connected components of one label, each listed in BFS discovery order and
/// the components themselves ordered by their first pixel in row-major scan.
std::vector<std::vector<Pixel>> connected_components(const LabelMask& mask, int label,
                                                     int connectivity = 8);

/// Sets every component smaller than `min_size` to background, per label.
LabelMask filter_components(const LabelMask& mask, int connectivity = 8, int min_size = 5);

/// Rounded centroid of the largest component of `label` (earliest in scan
/// order on ties); empty when the label is absent.
std::optional<Pixel> landmark_from_mask(const LabelMask& mask, int label, int connectivity = 8);

// ---------------------------------------------------------------------------
// Prompting and refinement
// ---------------------------------------------------------------------------

struct PromptSet {
  int label = 0;
  std::vector<Pixel> points;

  std::size_t count() const { return points.size(); }
  friend bool operator==(const PromptSet&, const PromptSet&) = default;
};

/// min(n, |region|) distinct pixels of `label`, uniformly without replacement.
PromptSet select_prompts(const LabelMask& mask, int label, int n, std::uint64_t seed);

struct RefinerRequest {
  std::string image;  // path of the image the refiner should segment
  int height = 0;
  int width = 0;
  std::vector<PromptSet> prompts;

  void validate() const;
  friend bool operator==(const RefinerRequest&, const RefinerRequest&) = default;
};

/// Union of 8-connected region growths from each prompt, admitting pixels
/// whose intensity differs from that prompt's seed value by <= tolerance.
LabelMask mock_refine(const IntensityImage& image, const PromptSet& prompts, double tolerance);

/// Promptable segmenter interface. Implementations return a mask with one
/// label per prompt set (pixels claimed by several sets keep the lowest label).
class Refiner {
 public:
  virtual ~Refiner() = default;
  virtual LabelMask refine(const RefinerRequest& request, const IntensityImage& image,
                           int label_count) const = 0;
};

class MockRefiner final : public Refiner {
 public:
  explicit MockRefiner(double tolerance) : tolerance_(tolerance) {}
  LabelMask refine(const RefinerRequest& request, const IntensityImage& image,
                   int label_count) const override;

 private:
  double tolerance_;
};

/// JSON prompt file: {"image", "height", "width", "labels": [{"label", "points": [[r, c], ...]}]}.
void export_prompts(const RefinerRequest& request, const std::filesystem::path& path);
RefinerRequest import_prompts(const std::filesystem::path& path);

/// Reads a PXM1 mask produced by an external refiner and checks its size.
LabelMask import_refined_mask(const std::filesystem::path& path, int expected_height,
                              int expected_width);

// ---------------------------------------------------------------------------
// End-to-end runs
// ---------------------------------------------------------------------------

enum class Task { kLocalize, kSegment };
enum class AdapterKind { kBasic, kClassification, kContrastive };

const char* to_string(Task task);
const char* to_string(AdapterKind adapter);
const char* to_string(Reduction reduction);

struct PipelineConfig {
  Task task = Task::kLocalize;
  AdapterKind adapter = AdapterKind::kContrastive;

  std::vector<std::filesystem::path> template_features;
  std::vector<std::filesystem::path> template_masks;
  std::vector<std::filesystem::path> target_features;
  std::vector<std::filesystem::path> target_masks;      // optional ground truth
  std::vector<std::filesystem::path> target_intensity;  // required for segment
  std::optional<std::filesystem::path> model;           // skip training when set
  std::filesystem::path output_dir;

  bool normalize = false;
  double threshold = 0.5;
  Reduction reduction = Reduction::kMean;
  PairSamplingOptions pairs;
  int references = 16;
  double background_margin = 0.0;
  ClassificationOptions classification;
  ContrastiveOptions contrastive;

  int connectivity = 8;
  int min_size = 5;
  int prompt_count = 10;
  double refine_tolerance = 0.05;
  double radius = 10.0;
  CaseUnit case_unit = CaseUnit::kSlice;

  std::uint64_t seed = 0;
  /// Hash of the effective configuration as echoed in the manifest; computed
  /// from describe() when empty.
  std::string config_hash;

  void validate() const;
};

/// Canonical JSON text of the effective configuration.
std::string describe(const PipelineConfig& config);
/// FNV-1a 64-bit hash rendered as 16 hex digits.
std::string stable_hash(const std::string& text);

struct SliceResult {
  std::string name;
  LabelMask mask;                       // localization after filtering
  std::optional<LabelMask> refined;     // segment task
  std::vector<std::optional<Pixel>> landmarks;  // index = label - 1
  std::vector<PromptSet> prompts;
};

struct RunArtifacts {
  std::vector<SliceResult> slices;
  std::optional<MetricReport> report;
  std::vector<std::filesystem::path> files;  // everything written, manifest last
  std::filesystem::path manifest;
};

/// Stage-tagged failure raised by run_pipeline.
class PipelineError : public Error {
 public:
  PipelineError(std::string stage, const Error& cause)
      : Error(cause.code(), stage + ": " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct TemplateSet {
  std::vector<FeatureMap> features;
  std::vector<LabelMask> masks;
  int label_count = 0;
};

/// Reads (and optionally normalises) the configured template slices.
TemplateSet load_templates(const PipelineConfig& config);

/// Trains the classification adapter on the pooled per-template sets.
nn::MlpModel fit_classification(const PipelineConfig& config, const TemplateSet& templates);
/// Trains the contrastive adapter on the pooled per-template pairs.
ContrastiveModel fit_contrastive(const PipelineConfig& config, const TemplateSet& templates);
/// Up to `config.references` reference pixels per label from every template
/// containing that label.
std::vector<ReferenceSet> gather_references(const PipelineConfig& config,
                                            const TemplateSet& templates);

struct EvaluatedSlice {
  std::string name;
  std::string volume;
  const LabelMask* prediction = nullptr;
  const LabelMask* truth = nullptr;
};

/// Per-label IoU (mean over slices) and localization accuracy of landmarks
/// derived from the predictions; aggregate IoU is the mean over labels.
MetricReport evaluate_slices(std::span<const EvaluatedSlice> slices, int label_count,
                             double radius, CaseUnit unit, int connectivity);

/// Localize -> filter -> landmarks or prompts + refinement -> metrics, writing
/// every artifact and a manifest under config.output_dir.
RunArtifacts run_pipeline(const PipelineConfig& config);

}  // namespace pixadapt
