#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pixadapt {

/// Row/column coordinate on the pixel grid.
struct Pixel {
  int row = 0;
  int col = 0;

  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

/// H x W grid of D-dimensional pixel feature vectors, row-major with the
/// channel index fastest. Validated on construction and immutable afterwards.
class FeatureMap {
 public:
  FeatureMap(int height, int width, int dim, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int dim() const { return dim_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }

  std::span<const float> data() const { return data_; }
  std::span<const float> at(int row, int col) const;
  std::span<const float> at(Pixel p) const { return at(p.row, p.col); }
  /// Pixel by flat row-major index.
  std::span<const float> at(std::size_t index) const;

  bool contains(Pixel p) const {
    return p.row >= 0 && p.col >= 0 && p.row < height_ && p.col < width_;
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  int height_;
  int width_;
  int dim_;
  std::vector<float> data_;
};

/// Patch-level features before upsampling to pixel resolution.
class PatchGrid {
 public:
  PatchGrid(int rows, int cols, int dim, std::vector<float> data);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int dim() const { return dim_; }
  std::span<const float> at(int row, int col) const;

 private:
  int rows_;
  int cols_;
  int dim_;
  std::vector<float> data_;
};

/// Per-pixel labels: 0 is background, 1..label_count are regions of interest.
class LabelMask {
 public:
  LabelMask(int height, int width, int label_count, std::vector<std::uint8_t> labels);
  /// All-background mask.
  LabelMask(int height, int width, int label_count);

  int height() const { return height_; }
  int width() const { return width_; }
  int label_count() const { return label_count_; }
  std::size_t pixel_count() const { return labels_.size(); }

  std::span<const std::uint8_t> labels() const { return labels_; }
  std::uint8_t at(int row, int col) const {
    return labels_[static_cast<std::size_t>(row) * width_ + col];
  }
  std::uint8_t at(Pixel p) const { return at(p.row, p.col); }

  bool contains(Pixel p) const {
    return p.row >= 0 && p.col >= 0 && p.row < height_ && p.col < width_;
  }
  bool same_shape(const FeatureMap& map) const {
    return map.height() == height_ && map.width() == width_;
  }
  bool same_shape(const LabelMask& other) const {
    return other.height_ == height_ && other.width_ == width_;
  }
  /// Number of pixels carrying `label`.
  std::size_t count(int label) const;

  friend bool operator==(const LabelMask&, const LabelMask&) = default;

 private:
  int height_;
  int width_;
  int label_count_;
  std::vector<std::uint8_t> labels_;
};

/// Single-channel intensity image consumed by refiners. Stored on disk as a
/// PXF1 feature map with dim 1.
struct IntensityImage {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  float at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
  float at(Pixel p) const { return at(p.row, p.col); }
  bool contains(Pixel p) const {
    return p.row >= 0 && p.col >= 0 && p.row < height && p.col < width;
  }

  FeatureMap to_feature_map() const;
  static IntensityImage from_feature_map(const FeatureMap& map);

  friend bool operator==(const IntensityImage&, const IntensityImage&) = default;
};

FeatureMap read_feature_map(const std::filesystem::path& path);
void write_feature_map(const FeatureMap& map, const std::filesystem::path& path);

IntensityImage read_intensity_image(const std::filesystem::path& path);
void write_intensity_image(const IntensityImage& image, const std::filesystem::path& path);

LabelMask read_label_mask(const std::filesystem::path& path);
void write_label_mask(const LabelMask& mask, const std::filesystem::path& path);

/// Bilinear upsampling of a patch grid with the align-corners-false
/// convention: output pixel i along an axis of N pixels samples the grid at
/// (i + 0.5) * G / N - 0.5, clamped to [0, G - 1].
FeatureMap interpolate_patch_grid(const PatchGrid& grid, int out_height, int out_width);

/// Scales every pixel vector to unit Euclidean norm; vectors whose norm is
/// below `epsilon` become all-zero.
FeatureMap l2_normalize(const FeatureMap& map, double epsilon = 1e-12);

}  // namespace pixadapt
