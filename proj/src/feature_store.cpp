#include "pixadapt/feature_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "binary_io.hpp"
#include "pixadapt/error.hpp"

namespace pixadapt {

namespace detail {

std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorCode::kMissingFile, path.string() + ": no such file");
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kIo, path.string() + ": cannot open for reading");
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorCode::kIo, path.string() + ": cannot open for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) {
    throw Error(ErrorCode::kIo, path.string() + ": write failed");
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<char>(text.begin(), text.end()));
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return {bytes.begin(), bytes.end()};
}

}  // namespace detail

namespace {

constexpr std::string_view kFeatureMagic = "PXF1";
constexpr std::string_view kMaskMagic = "PXM1";

void check_extent(int value, const char* what) {
  if (value < 1) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string(what) + " must be >= 1, got " + std::to_string(value));
  }
}

std::size_t checked_volume(int a, int b, int c) {
  return static_cast<std::size_t>(a) * static_cast<std::size_t>(b) * static_cast<std::size_t>(c);
}

int header_extent(std::uint32_t value, const std::string& source, const char* what) {
  if (value == 0 || value > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
    throw Error(ErrorCode::kMalformed,
                source + ": invalid " + what + " " + std::to_string(value));
  }
  return static_cast<int>(value);
}

}  // namespace

FeatureMap::FeatureMap(int height, int width, int dim, std::vector<float> data)
    : height_(height), width_(width), dim_(dim), data_(std::move(data)) {
  check_extent(height, "feature map height");
  check_extent(width, "feature map width");
  check_extent(dim, "feature map dim");
  if (data_.size() != checked_volume(height, width, dim)) {
    throw Error(ErrorCode::kDimensionMismatch,
                "feature map data length " + std::to_string(data_.size()) + " != " +
                    std::to_string(height) + "x" + std::to_string(width) + "x" +
                    std::to_string(dim));
  }
  const auto bad = std::find_if(data_.begin(), data_.end(),
                                [](float v) { return !std::isfinite(v); });
  if (bad != data_.end()) {
    throw Error(ErrorCode::kNonFinite,
                "feature map component " + std::to_string(bad - data_.begin()) +
                    " is not finite");
  }
}

std::span<const float> FeatureMap::at(int row, int col) const {
  return at(static_cast<std::size_t>(row) * width_ + col);
}

std::span<const float> FeatureMap::at(std::size_t index) const {
  return std::span<const float>(data_).subspan(index * dim_, dim_);
}

PatchGrid::PatchGrid(int rows, int cols, int dim, std::vector<float> data)
    : rows_(rows), cols_(cols), dim_(dim), data_(std::move(data)) {
  check_extent(rows, "patch grid rows");
  check_extent(cols, "patch grid cols");
  check_extent(dim, "patch grid dim");
  if (data_.size() != checked_volume(rows, cols, dim)) {
    throw Error(ErrorCode::kDimensionMismatch, "patch grid data length mismatch");
  }
}

std::span<const float> PatchGrid::at(int row, int col) const {
  return std::span<const float>(data_).subspan(
      (static_cast<std::size_t>(row) * cols_ + col) * dim_, dim_);
}

LabelMask::LabelMask(int height, int width, int label_count, std::vector<std::uint8_t> labels)
    : height_(height), width_(width), label_count_(label_count), labels_(std::move(labels)) {
  check_extent(height, "mask height");
  check_extent(width, "mask width");
  if (label_count < 0 || label_count > 255) {
    throw Error(ErrorCode::kInvalidArgument,
                "label_count must be in [0, 255], got " + std::to_string(label_count));
  }
  if (labels_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw Error(ErrorCode::kDimensionMismatch, "mask data length mismatch");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] > label_count) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  "pixel " + std::to_string(i) + " has label " + std::to_string(labels_[i]) +
                      " > label_count " + std::to_string(label_count));
    }
  }
}

LabelMask::LabelMask(int height, int width, int label_count)
    : LabelMask(height, width, label_count,
                std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(height, 0)) *
                                              static_cast<std::size_t>(std::max(width, 0)),
                                          0)) {}

std::size_t LabelMask::count(int label) const {
  return static_cast<std::size_t>(
      std::count(labels_.begin(), labels_.end(), static_cast<std::uint8_t>(label)));
}

FeatureMap read_feature_map(const std::filesystem::path& path) {
  detail::ByteReader reader(detail::read_file_bytes(path), path.string());
  reader.expect_magic(kFeatureMagic);
  const int height = header_extent(reader.get<std::uint32_t>(), reader.source(), "height");
  const int width = header_extent(reader.get<std::uint32_t>(), reader.source(), "width");
  const int dim = header_extent(reader.get<std::uint32_t>(), reader.source(), "dim");
  const std::size_t count = checked_volume(height, width, dim);
  reader.require(count * sizeof(float));
  std::vector<float> data(count);
  for (auto& v : data) {
    v = reader.get<float>();
  }
  reader.expect_end();
  try {
    return FeatureMap(height, width, dim, std::move(data));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_feature_map(const FeatureMap& map, const std::filesystem::path& path) {
  detail::ByteWriter writer;
  writer.magic(kFeatureMagic);
  writer.put(static_cast<std::uint32_t>(map.height()));
  writer.put(static_cast<std::uint32_t>(map.width()));
  writer.put(static_cast<std::uint32_t>(map.dim()));
  for (float v : map.data()) {
    writer.put(v);
  }
  detail::write_file_bytes(path, writer.bytes());
}

FeatureMap IntensityImage::to_feature_map() const {
  return FeatureMap(height, width, 1, values);
}

IntensityImage IntensityImage::from_feature_map(const FeatureMap& map) {
  if (map.dim() != 1) {
    throw Error(ErrorCode::kDimensionMismatch,
                "intensity image needs dim 1, got " + std::to_string(map.dim()));
  }
  return {map.height(), map.width(), std::vector<float>(map.data().begin(), map.data().end())};
}

IntensityImage read_intensity_image(const std::filesystem::path& path) {
  const FeatureMap map = read_feature_map(path);
  try {
    return IntensityImage::from_feature_map(map);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_intensity_image(const IntensityImage& image, const std::filesystem::path& path) {
  write_feature_map(image.to_feature_map(), path);
}

LabelMask read_label_mask(const std::filesystem::path& path) {
  detail::ByteReader reader(detail::read_file_bytes(path), path.string());
  reader.expect_magic(kMaskMagic);
  const int height = header_extent(reader.get<std::uint32_t>(), reader.source(), "height");
  const int width = header_extent(reader.get<std::uint32_t>(), reader.source(), "width");
  const std::uint32_t label_count = reader.get<std::uint32_t>();
  if (label_count > 255) {
    throw Error(ErrorCode::kMalformed,
                path.string() + ": label_count " + std::to_string(label_count) + " exceeds 255");
  }
  const std::size_t count = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  reader.require(count);
  std::vector<std::uint8_t> labels(count);
  for (auto& v : labels) {
    v = reader.get<std::uint8_t>();
  }
  reader.expect_end();
  try {
    return LabelMask(height, width, static_cast<int>(label_count), std::move(labels));
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_label_mask(const LabelMask& mask, const std::filesystem::path& path) {
  detail::ByteWriter writer;
  writer.magic(kMaskMagic);
  writer.put(static_cast<std::uint32_t>(mask.height()));
  writer.put(static_cast<std::uint32_t>(mask.width()));
  writer.put(static_cast<std::uint32_t>(mask.label_count()));
  for (std::uint8_t v : mask.labels()) {
    writer.put(v);
  }
  detail::write_file_bytes(path, writer.bytes());
}

namespace {

struct AxisSample {
  int lo;
  int hi;
  double frac;
};

AxisSample sample_axis(int index, int out_size, int grid_size) {
  double src = (index + 0.5) * static_cast<double>(grid_size) / out_size - 0.5;
  src = std::clamp(src, 0.0, static_cast<double>(grid_size - 1));
  const int lo = static_cast<int>(std::floor(src));
  const int hi = std::min(lo + 1, grid_size - 1);
  return {lo, hi, src - lo};
}

}  // namespace

FeatureMap interpolate_patch_grid(const PatchGrid& grid, int out_height, int out_width) {
  check_extent(out_height, "output height");
  check_extent(out_width, "output width");
  const int dim = grid.dim();
  std::vector<float> out(checked_volume(out_height, out_width, dim));
  for (int r = 0; r < out_height; ++r) {
    const AxisSample ys = sample_axis(r, out_height, grid.rows());
    for (int c = 0; c < out_width; ++c) {
      const AxisSample xs = sample_axis(c, out_width, grid.cols());
      const auto p00 = grid.at(ys.lo, xs.lo);
      const auto p01 = grid.at(ys.lo, xs.hi);
      const auto p10 = grid.at(ys.hi, xs.lo);
      const auto p11 = grid.at(ys.hi, xs.hi);
      float* dst = out.data() + (static_cast<std::size_t>(r) * out_width + c) * dim;
      for (int k = 0; k < dim; ++k) {
        const double top = p00[k] + (p01[k] - static_cast<double>(p00[k])) * xs.frac;
        const double bottom = p10[k] + (p11[k] - static_cast<double>(p10[k])) * xs.frac;
        dst[k] = static_cast<float>(top + (bottom - top) * ys.frac);
      }
    }
  }
  return FeatureMap(out_height, out_width, dim, std::move(out));
}

FeatureMap l2_normalize(const FeatureMap& map, double epsilon) {
  if (!(epsilon > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "l2_normalize epsilon must be > 0");
  }
  std::vector<float> out(map.data().begin(), map.data().end());
  const int dim = map.dim();
  for (std::size_t i = 0; i < map.pixel_count(); ++i) {
    float* v = out.data() + i * dim;
    double sq = 0.0;
    for (int k = 0; k < dim; ++k) {
      sq += static_cast<double>(v[k]) * v[k];
    }
    const double norm = std::sqrt(sq);
    if (norm < epsilon) {
      std::fill(v, v + dim, 0.0f);
      continue;
    }
    for (int k = 0; k < dim; ++k) {
      v[k] = static_cast<float>(v[k] / norm);
    }
  }
  return FeatureMap(map.height(), map.width(), dim, std::move(out));
}

}  // namespace pixadapt
