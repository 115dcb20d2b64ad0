#include "pixadapt/sampling.hpp"

#include <algorithm>
#include <climits>
#include <random>
#include <string>

#include "pixadapt/error.hpp"

namespace pixadapt {

namespace {

std::vector<float> copy_feature(const FeatureMap& features, Pixel p) {
  const auto v = features.at(p);
  return {v.begin(), v.end()};
}

void require_same_shape(const FeatureMap& features, const LabelMask& mask) {
  if (!mask.same_shape(features)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "mask " + std::to_string(mask.height()) + "x" + std::to_string(mask.width()) +
                    " does not match features " + std::to_string(features.height()) + "x" +
                    std::to_string(features.width()));
  }
}

void require_label_in_range(const LabelMask& mask, int label) {
  if (label < 1 || label > mask.label_count()) {
    throw Error(ErrorCode::kLabelOutOfRange,
                "label " + std::to_string(label) + " outside [1, " +
                    std::to_string(mask.label_count()) + "]");
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::size_t ClassificationSet::count(int label) const {
  return static_cast<std::size_t>(std::count_if(
      entries.begin(), entries.end(), [label](const Entry& e) { return e.label == label; }));
}

std::size_t PairSet::count(int pair_class) const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(),
                                                [pair_class](const Entry& e) {
                                                  return e.pair_class == pair_class;
                                                }));
}

std::vector<Pixel> foreground_pixels(const LabelMask& mask, int label) {
  require_label_in_range(mask, label);
  std::vector<Pixel> out;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (mask.at(r, c) == label) {
        out.push_back({r, c});
      }
    }
  }
  return out;
}

ClassificationSet sample_classification_set(const FeatureMap& features, const LabelMask& mask,
                                            std::uint64_t seed) {
  require_same_shape(features, mask);
  if (mask.label_count() < 1) {
    throw Error(ErrorCode::kEmptyRegion, "mask declares no foreground labels");
  }
  ClassificationSet set;
  set.class_count = mask.label_count() + 1;

  std::size_t largest = 0;
  for (int label = 1; label <= mask.label_count(); ++label) {
    const auto pixels = foreground_pixels(mask, label);
    if (pixels.empty()) {
      throw Error(ErrorCode::kEmptyRegion,
                  "label " + std::to_string(label) + " has no foreground pixels");
    }
    largest = std::max(largest, pixels.size());
    for (const Pixel& p : pixels) {
      set.entries.push_back({p, copy_feature(features, p), label});
    }
  }

  std::vector<Pixel> background;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (mask.at(r, c) == 0) {
        background.push_back({r, c});
      }
    }
  }
  if (background.size() < largest) {
    throw Error(ErrorCode::kInsufficientData,
                "background pool of " + std::to_string(background.size()) +
                    " pixels is smaller than the required " + std::to_string(largest));
  }
  std::vector<Pixel> chosen;
  chosen.reserve(largest);
  std::mt19937_64 rng(seed);
  std::sample(background.begin(), background.end(), std::back_inserter(chosen), largest, rng);
  for (const Pixel& p : chosen) {
    set.entries.push_back({p, copy_feature(features, p), 0});
  }
  return set;
}

std::vector<int> chebyshev_distance_to_label(const LabelMask& mask, int label) {
  const int h = mask.height();
  const int w = mask.width();
  std::vector<int> dist(static_cast<std::size_t>(h) * w, INT_MAX);
  auto at = [&](int r, int c) -> int& { return dist[static_cast<std::size_t>(r) * w + c]; };
  auto relax = [&](int r, int c, int nr, int nc) {
    if (nr < 0 || nc < 0 || nr >= h || nc >= w) return;
    const int d = at(nr, nc);
    if (d != INT_MAX && d + 1 < at(r, c)) at(r, c) = d + 1;
  };
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (mask.at(r, c) == label) at(r, c) = 0;
    }
  }
  // Two-pass chessboard transform; exact for unit-cost 8-neighbour steps.
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      relax(r, c, r - 1, c - 1);
      relax(r, c, r - 1, c);
      relax(r, c, r - 1, c + 1);
      relax(r, c, r, c - 1);
    }
  }
  for (int r = h - 1; r >= 0; --r) {
    for (int c = w - 1; c >= 0; --c) {
      relax(r, c, r + 1, c + 1);
      relax(r, c, r + 1, c);
      relax(r, c, r + 1, c - 1);
      relax(r, c, r, c + 1);
    }
  }
  return dist;
}

PairSet sample_contrastive_pairs(const FeatureMap& features, const LabelMask& mask,
                                 const PairSamplingOptions& options, std::uint64_t seed) {
  require_same_shape(features, mask);
  if (options.pairs_per_label < 1) {
    throw Error(ErrorCode::kInvalidArgument, "pairs_per_label must be >= 1");
  }
  if (options.min_negative_offset < 0) {
    throw Error(ErrorCode::kInvalidArgument, "min_negative_offset must be >= 0");
  }
  if (mask.label_count() < 1) {
    throw Error(ErrorCode::kEmptyRegion, "mask declares no foreground labels");
  }

  PairSet set;
  set.pair_class_count = mask.label_count() + 1;
  const auto pairs = static_cast<std::size_t>(options.pairs_per_label);
  set.entries.reserve(2 * pairs * mask.label_count());

  for (int label = 1; label <= mask.label_count(); ++label) {
    const auto region = foreground_pixels(mask, label);
    if (region.size() < 2) {
      throw Error(ErrorCode::kInsufficientData,
                  "label " + std::to_string(label) + " has " + std::to_string(region.size()) +
                      " pixels; contrastive pairs need at least 2");
    }
    const auto dist = chebyshev_distance_to_label(mask, label);
    const int min_distance = std::max(1, options.min_negative_offset);
    std::vector<Pixel> partners;
    for (int r = 0; r < mask.height(); ++r) {
      for (int c = 0; c < mask.width(); ++c) {
        if (dist[static_cast<std::size_t>(r) * mask.width() + c] >= min_distance) {
          partners.push_back({r, c});
        }
      }
    }
    if (partners.empty()) {
      throw Error(ErrorCode::kInsufficientData,
                  "label " + std::to_string(label) + " has no negative partner at offset " +
                      std::to_string(options.min_negative_offset));
    }

    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(label)));
    std::uniform_int_distribution<std::size_t> pick_region(0, region.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_other(0, region.size() - 2);
    std::uniform_int_distribution<std::size_t> pick_partner(0, partners.size() - 1);
    for (std::size_t i = 0; i < pairs; ++i) {
      const std::size_t a = pick_region(rng);
      std::size_t b = pick_other(rng);
      if (b >= a) ++b;  // distinct within the pair
      set.entries.push_back({region[a], region[b], copy_feature(features, region[a]),
                             copy_feature(features, region[b]), label, label});

      const Pixel anchor = region[pick_region(rng)];
      const Pixel partner = partners[pick_partner(rng)];
      set.entries.push_back({anchor, partner, copy_feature(features, anchor),
                             copy_feature(features, partner), 0, label});
    }
  }
  return set;
}

ReferenceSet select_reference_pixels(const FeatureMap& features, const LabelMask& mask, int label,
                                     int k, std::uint64_t seed) {
  require_same_shape(features, mask);
  if (k < 1) {
    throw Error(ErrorCode::kInvalidArgument, "reference count k must be >= 1");
  }
  const auto region = foreground_pixels(mask, label);
  if (region.empty()) {
    throw Error(ErrorCode::kEmptyRegion,
                "label " + std::to_string(label) + " has no pixels to draw references from");
  }
  ReferenceSet refs;
  refs.label = label;
  std::mt19937_64 rng(seed);
  std::sample(region.begin(), region.end(), std::back_inserter(refs.pixels),
              std::min<std::size_t>(static_cast<std::size_t>(k), region.size()), rng);
  for (const Pixel& p : refs.pixels) {
    refs.features.push_back(copy_feature(features, p));
  }
  return refs;
}

}  // namespace pixadapt
