#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "pixadapt/error.hpp"
#include "pixadapt/sampling.hpp"
#include "test_support.hpp"

using namespace pixadapt;

namespace {

LabelMask mask_from(int h, int w, int label_count, const std::vector<Pixel>& pixels,
                    std::uint8_t label = 1) {
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(h) * w, 0);
  for (const Pixel& p : pixels) labels[static_cast<std::size_t>(p.row) * w + p.col] = label;
  return LabelMask(h, w, label_count, std::move(labels));
}

FeatureMap index_features(int h, int w) {
  std::vector<float> data;
  for (int i = 0; i < h * w; ++i) data.push_back(static_cast<float>(i));
  return FeatureMap(h, w, 1, std::move(data));
}

// Brute-force Chebyshev distance from p to the nearest pixel of `label`.
int brute_chebyshev(const LabelMask& mask, int label, Pixel p) {
  int best = INT32_MAX;
  for (int r = 0; r < mask.height(); ++r) {
    for (int c = 0; c < mask.width(); ++c) {
      if (mask.at(r, c) != label) continue;
      best = std::min(best, std::max(std::abs(r - p.row), std::abs(c - p.col)));
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("sampling") {

TEST_CASE("foreground pixels in row-major order") {
  CHECK(foreground_pixels(mask_from(4, 5, 1, {{2, 3}}), 1) == std::vector<Pixel>{{2, 3}});
  CHECK(foreground_pixels(LabelMask(3, 3, 1), 1).empty());
  const auto l = foreground_pixels(mask_from(3, 3, 1, {{2, 1}, {1, 1}, {1, 2}}), 1);
  CHECK(l == std::vector<Pixel>{{1, 1}, {1, 2}, {2, 1}});
}

TEST_CASE("classification set balances background to foreground") {
  std::vector<Pixel> fg;
  for (int c = 0; c < 10; ++c) fg.push_back({0, c});
  const LabelMask mask = mask_from(10, 10, 1, fg);
  const auto set = sample_classification_set(index_features(10, 10), mask, 3);
  CHECK(set.entries.size() == 20);
  CHECK(set.count(0) == 10);
  CHECK(set.count(1) == 10);
  CHECK(set.class_count == 2);
  std::set<Pixel> unique;
  for (const auto& e : set.entries) {
    CHECK(mask.at(e.pixel) == e.label);
    CHECK(e.feature[0] == static_cast<float>(e.pixel.row * 10 + e.pixel.col));
    unique.insert(e.pixel);
  }
  CHECK(unique.size() == 20);

  const auto again = sample_classification_set(index_features(10, 10), mask, 3);
  REQUIRE(again.entries.size() == set.entries.size());
  for (std::size_t i = 0; i < set.entries.size(); ++i) {
    CHECK(again.entries[i].pixel == set.entries[i].pixel);
  }
}

TEST_CASE("classification set errors") {
  std::vector<Pixel> all;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) all.push_back({r, c});
  CHECK_THROWS_AS(sample_classification_set(index_features(3, 3), mask_from(3, 3, 1, all), 1),
                  Error);
}

TEST_CASE("multi-label background count is the largest label count") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const LabelMask mask = testing::random_mask(16, 16, 3, 0.2, rng);
    if (mask.count(1) == 0 || mask.count(2) == 0 || mask.count(3) == 0) continue;
    const auto set = sample_classification_set(index_features(16, 16), mask, trial);
    const std::size_t expected = std::max({mask.count(1), mask.count(2), mask.count(3)});
    CHECK(set.count(0) == expected);
    for (int l = 1; l <= 3; ++l) CHECK(set.count(l) == mask.count(l));
  }
}

TEST_CASE("two-pixel region yields the only positive pair") {
  const LabelMask mask = mask_from(5, 5, 1, {{1, 1}, {3, 4}});
  const auto pairs = sample_contrastive_pairs(index_features(5, 5), mask, {1, 0}, 2);
  CHECK(pairs.entries.size() == 2);
  CHECK(pairs.count(1) == 1);
  CHECK(pairs.count(0) == 1);
  for (const auto& e : pairs.entries) {
    if (e.pair_class != 1) continue;
    const std::set<Pixel> used{e.pixel_a, e.pixel_b};
    CHECK(used == std::set<Pixel>{{1, 1}, {3, 4}});
  }
}

TEST_CASE("pair counts for three labels") {
  std::mt19937_64 rng(8);
  LabelMask mask(1, 1, 1);
  do {
    mask = testing::random_mask(24, 24, 3, 0.3, rng);
  } while (mask.count(1) < 2 || mask.count(2) < 2 || mask.count(3) < 2);
  const auto pairs = sample_contrastive_pairs(index_features(24, 24), mask, {500, 0}, 1);
  CHECK(pairs.entries.size() == 3000);
  CHECK(pairs.count(0) == 1500);
  CHECK(pairs.pair_class_count == 4);
}

TEST_CASE("offset larger than the image leaves no admissible negative") {
  const LabelMask mask = mask_from(6, 6, 1, {{2, 2}, {2, 3}});
  CHECK_THROWS_AS(sample_contrastive_pairs(index_features(6, 6), mask, {10, 9}, 1), Error);
}

TEST_CASE("pair validity and offset hold on random masks") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const int labels = 1 + trial % 3;
    const LabelMask mask = testing::random_mask(20, 20, labels, 0.15, rng);
    bool usable = true;
    for (int l = 1; l <= labels; ++l) usable = usable && mask.count(l) >= 2;
    if (!usable) continue;
    const int offset = trial % 4;
    const auto features = index_features(20, 20);
    PairSet pairs;
    try {
      pairs = sample_contrastive_pairs(features, mask, {50, offset}, trial);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInsufficientData);
      continue;
    }
    for (const auto& e : pairs.entries) {
      CHECK(mask.at(e.pixel_a) == e.anchor_label);
      CHECK(e.pixel_a != e.pixel_b);
      const bool partner_in_region = mask.at(e.pixel_b) == e.anchor_label;
      CHECK(e.pair_class == (partner_in_region ? e.anchor_label : 0));
      if (e.pair_class == 0) {
        CHECK(brute_chebyshev(mask, e.anchor_label, e.pixel_b) >= std::max(1, offset));
      }
      CHECK(e.feature_a[0] == static_cast<float>(e.pixel_a.row * 20 + e.pixel_a.col));
      CHECK(e.feature_b[0] == static_cast<float>(e.pixel_b.row * 20 + e.pixel_b.col));
    }
    const auto again = sample_contrastive_pairs(features, mask, {50, offset}, trial);
    CHECK(again.entries.size() == pairs.entries.size());
    bool same = true;
    for (std::size_t i = 0; i < pairs.entries.size(); ++i) {
      same = same && again.entries[i].pixel_a == pairs.entries[i].pixel_a &&
             again.entries[i].pixel_b == pairs.entries[i].pixel_b;
    }
    CHECK(same);
  }
}

TEST_CASE("different seeds give different pair selections") {
  std::vector<Pixel> region;
  for (int r = 5; r < 15; ++r)
    for (int c = 5; c < 15; ++c) region.push_back({r, c});
  const LabelMask mask = mask_from(20, 20, 1, region);
  const auto a = sample_contrastive_pairs(index_features(20, 20), mask, {100, 0}, 1);
  const auto b = sample_contrastive_pairs(index_features(20, 20), mask, {100, 0}, 2);
  bool differ = false;
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    differ = differ || a.entries[i].pixel_b != b.entries[i].pixel_b;
  }
  CHECK(differ);
}

TEST_CASE("chebyshev transform matches brute force") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const LabelMask mask = testing::random_mask(13, 11, 2, 0.05, rng);
    for (int l = 1; l <= 2; ++l) {
      const auto dist = chebyshev_distance_to_label(mask, l);
      for (int r = 0; r < 13; ++r) {
        for (int c = 0; c < 11; ++c) {
          CHECK(dist[static_cast<std::size_t>(r) * 11 + c] == brute_chebyshev(mask, l, {r, c}));
        }
      }
    }
  }
}

TEST_CASE("reference pixel selection") {
  const std::vector<Pixel> region{{0, 0}, {0, 1}, {1, 0}, {2, 2}, {3, 3}};
  const LabelMask mask = mask_from(4, 4, 1, region);
  const auto all = select_reference_pixels(index_features(4, 4), mask, 1, 10, 1);
  CHECK(std::set<Pixel>(all.pixels.begin(), all.pixels.end()) ==
        std::set<Pixel>(region.begin(), region.end()));
  const auto one = select_reference_pixels(index_features(4, 4), mask, 1, 1, 1);
  REQUIRE(one.size() == 1);
  CHECK(mask.at(one.pixels[0]) == 1);
  CHECK(select_reference_pixels(index_features(4, 4), mask, 1, 3, 9).pixels ==
        select_reference_pixels(index_features(4, 4), mask, 1, 3, 9).pixels);
  CHECK_THROWS_AS(select_reference_pixels(index_features(4, 4), LabelMask(4, 4, 1), 1, 3, 1),
                  Error);
}

}  // TEST_SUITE
