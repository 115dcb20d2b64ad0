#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pixadapt/feature_store.hpp"
#include "pixadapt/nn_core.hpp"
#include "pixadapt/sampling.hpp"

namespace pixadapt {

/// Per-pixel score vectors. Trained adapters store a probability
/// distribution per pixel; the basic adapter stores one cosine similarity.
struct ScoreMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;

  ScoreMap() = default;
  ScoreMap(int h, int w, int c)
      : height(h), width(w), channels(c),
        values(static_cast<std::size_t>(h) * w * c, 0.0) {}

  std::span<double> at(std::size_t pixel) {
    return std::span<double>(values).subspan(pixel * channels, channels);
  }
  std::span<const double> at(std::size_t pixel) const {
    return std::span<const double>(values).subspan(pixel * channels, channels);
  }
  double& at(std::size_t pixel, int channel) { return values[pixel * channels + channel]; }
  double at(std::size_t pixel, int channel) const { return values[pixel * channels + channel]; }
};

/// How scores from several reference pixels collapse to one.
enum class Reduction { kMean, kMax };

struct Localization {
  LabelMask mask;
  ScoreMap scores;
};

// ---------------------------------------------------------------------------
// Basic adapter: cosine similarity against a template vector, fixed threshold.
// ---------------------------------------------------------------------------

/// Cosine similarity of every target pixel to the template region. With
/// kMean the template vector is the mean of the L2-normalised region
/// features; with kMax each pixel takes its best match over region pixels.
ScoreMap basic_similarity(const FeatureMap& template_feats, const LabelMask& template_mask,
                          int label, const FeatureMap& target_feats,
                          Reduction reduction = Reduction::kMean);

/// Binary mask (label 1) of pixels whose similarity is >= threshold.
Localization basic_localize(const FeatureMap& template_feats, const LabelMask& template_mask,
                            int label, const FeatureMap& target_feats, double threshold = 0.5,
                            Reduction reduction = Reduction::kMean);

// ---------------------------------------------------------------------------
// Training configuration shared by the learned adapters.
// ---------------------------------------------------------------------------

struct TrainingOptions {
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct ClassificationOptions {
  TrainingOptions training;
  std::vector<int> hidden_widths{256, 128};
};

struct ContrastiveOptions {
  TrainingOptions training;
  int twin_hidden = 64;
  int embedding_dim = 64;
  int head_hidden = 64;
};

// ---------------------------------------------------------------------------
// Classification adapter
// ---------------------------------------------------------------------------

nn::MlpModel train_classification_adapter(const ClassificationSet& set,
                                          const ClassificationOptions& options,
                                          std::uint64_t seed);

/// Per-pixel argmax of the softmax; ties go to the lower class index.
Localization predict_classification(const nn::MlpModel& model, const FeatureMap& target_feats);

// ---------------------------------------------------------------------------
// Contrastive (Siamese) adapter
// ---------------------------------------------------------------------------

/// One shared-weight embedding network applied to both pair members; the
/// head classifies concat(twin(reference), twin(target)) into pair classes
/// (0 = no match, l = both in region l).
struct ContrastiveModel {
  nn::MlpModel twin;
  nn::MlpModel head;
  int pair_class_count = 0;

  int feature_dim() const { return twin.input_dim(); }
  void validate() const;

  friend bool operator==(const ContrastiveModel&, const ContrastiveModel&) = default;
};

ContrastiveModel train_contrastive_adapter(const PairSet& pairs, const ContrastiveOptions& options,
                                           std::uint64_t seed);

/// Embedding of one feature vector through the shared twin.
std::vector<double> embed(const ContrastiveModel& model, std::span<const float> feature);

/// Softmax over pair classes; the reference occupies the first slot.
std::vector<double> pair_score(const ContrastiveModel& model, std::span<const float> reference,
                               std::span<const float> target);

struct ContrastiveLocalizeOptions {
  double background_margin = 0.0;
  Reduction reduction = Reduction::kMean;
};

/// Scores every target pixel against each label's references. A pixel takes
/// the best-scoring label when that score exceeds the no-match score
/// (averaged over all references) plus the margin; otherwise background.
/// The score map has pair_class_count channels: no-match first, then labels.
Localization contrastive_localize(const ContrastiveModel& model,
                                  std::span<const ReferenceSet> references,
                                  const FeatureMap& target_feats,
                                  const ContrastiveLocalizeOptions& options = {});

/// PXC1 container: magic, u32 pair_class_count, twin PXN1 block, head PXN1 block.
void write_contrastive_model(const ContrastiveModel& model, const std::filesystem::path& path);
ContrastiveModel read_contrastive_model(const std::filesystem::path& path);

}  // namespace pixadapt
