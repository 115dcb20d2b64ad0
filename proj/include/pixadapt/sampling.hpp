#pragma once

#include <cstdint>
#include <vector>

#include "pixadapt/feature_store.hpp"

namespace pixadapt {

/// Labelled pixel features for training the classification adapter.
struct ClassificationSet {
  struct Entry {
    Pixel pixel;
    std::vector<float> feature;
    int label = 0;
  };

  std::vector<Entry> entries;
  int class_count = 0;  // foreground labels + background

  std::size_t count(int label) const;
};

/// Feature pairs for the contrastive adapter. Positive pairs carry their
/// region's label as pair class; negative pairs carry the shared no-match
/// class 0.
struct PairSet {
  struct Entry {
    Pixel pixel_a;
    Pixel pixel_b;
    std::vector<float> feature_a;
    std::vector<float> feature_b;
    int pair_class = 0;
    int anchor_label = 0;  // region the pair was drawn for
  };

  std::vector<Entry> entries;
  int pair_class_count = 0;

  std::size_t count(int pair_class) const;
};

/// Template pixels whose features act as references at inference time.
struct ReferenceSet {
  int label = 0;
  std::vector<Pixel> pixels;
  std::vector<std::vector<float>> features;

  std::size_t size() const { return pixels.size(); }
};

/// Coordinates carrying `label`, in row-major order.
std::vector<Pixel> foreground_pixels(const LabelMask& mask, int label);

/// Every foreground pixel plus a class-balanced random background draw.
/// Background size equals the foreground size for a single label and the
/// largest per-label count for multi-label masks.
ClassificationSet sample_classification_set(const FeatureMap& features, const LabelMask& mask,
                                            std::uint64_t seed);

struct PairSamplingOptions {
  int pairs_per_label = 1000;
  /// Minimum Chebyshev distance between a negative partner and the anchor's
  /// region; 0 admits any pixel outside the region.
  int min_negative_offset = 0;
};

PairSet sample_contrastive_pairs(const FeatureMap& features, const LabelMask& mask,
                                 const PairSamplingOptions& options, std::uint64_t seed);

/// Draws min(k, |region|) distinct pixels of `label` uniformly.
ReferenceSet select_reference_pixels(const FeatureMap& features, const LabelMask& mask, int label,
                                     int k, std::uint64_t seed);

/// Chebyshev distance from every pixel to the nearest pixel of `label`
/// (0 on the region itself). Pixels are unreachable only if the region is
/// empty, in which case every entry is INT_MAX.
std::vector<int> chebyshev_distance_to_label(const LabelMask& mask, int label);

/// Seed derivation so independent draws (labels, slices, stages) never share
/// a stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace pixadapt
