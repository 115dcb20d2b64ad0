// Helpers shared by the unit and acceptance tests. The oracles here are
// written independently of the library code they check.
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "pixadapt/feature_store.hpp"

namespace testing {

/// Fresh scratch directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("pixadapt_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline pixadapt::FeatureMap random_features(int h, int w, int d, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> data(static_cast<std::size_t>(h) * w * d);
  for (float& v : data) v = dist(rng);
  return pixadapt::FeatureMap(h, w, d, std::move(data));
}

/// Random mask: each pixel is foreground with probability `density`, label
/// drawn uniformly from 1..label_count.
inline pixadapt::LabelMask random_mask(int h, int w, int label_count, double density,
                                       std::mt19937_64& rng) {
  std::bernoulli_distribution fg(density);
  std::uniform_int_distribution<int> pick(1, label_count);
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(h) * w, 0);
  for (auto& l : labels) {
    if (fg(rng)) l = static_cast<std::uint8_t>(pick(rng));
  }
  return pixadapt::LabelMask(h, w, label_count, std::move(labels));
}

/// Union-find component sizes of `label` (8- or 4-connectivity), keyed by
/// flat index of each pixel's root. Returns per-pixel component size (0 for
/// pixels not carrying the label).
inline std::vector<int> union_find_component_sizes(const pixadapt::LabelMask& mask, int label,
                                                   int connectivity) {
  const int h = mask.height();
  const int w = mask.width();
  std::vector<int> parent(static_cast<std::size_t>(h) * w);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      if (mask.at(r, c) != label) continue;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          if (connectivity == 4 && dr != 0 && dc != 0) continue;
          const int rr = r + dr;
          const int cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= h || cc >= w || mask.at(rr, cc) != label) continue;
          unite(r * w + c, rr * w + cc);
        }
      }
    }
  }
  std::vector<int> size(parent.size(), 0);
  for (int i = 0; i < h * w; ++i) {
    if (mask.labels()[i] == label) ++size[find(i)];
  }
  std::vector<int> per_pixel(parent.size(), 0);
  for (int i = 0; i < h * w; ++i) {
    if (mask.labels()[i] == label) per_pixel[i] = size[find(i)];
  }
  return per_pixel;
}

/// Reference cosine similarity in long double.
inline double brute_cosine(std::span<const float> a, std::span<const double> b) {
  long double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<long double>(a[i]) * b[i];
    na += static_cast<long double>(a[i]) * a[i];
    nb += static_cast<long double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return static_cast<double>(dot / std::sqrt(na * nb));
}

}  // namespace testing
