#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "pixadapt/error.hpp"
#include "pixadapt/feature_store.hpp"
#include "test_support.hpp"

using namespace pixadapt;

namespace {

std::vector<char> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an exception");
  return ErrorCode::kIo;
}

}  // namespace

TEST_SUITE("feature_store") {

TEST_CASE("feature map invariants are enforced") {
  CHECK_THROWS_AS(FeatureMap(0, 1, 1, {}), Error);
  CHECK_THROWS_AS(FeatureMap(2, 2, 3, std::vector<float>(11)), Error);
  CHECK(code_of([] { FeatureMap(1, 1, 1, {std::nanf("")}); }) == ErrorCode::kNonFinite);
  CHECK(code_of([] { FeatureMap(1, 1, 1, {INFINITY}); }) == ErrorCode::kNonFinite);
}

TEST_CASE("zero feature file reads back as zeros") {
  testing::TempDir dir("fs_zero");
  write_feature_map(FeatureMap(2, 2, 3, std::vector<float>(12, 0.0f)), dir / "z.pxf");
  const FeatureMap m = read_feature_map(dir / "z.pxf");
  CHECK(m.height() == 2);
  CHECK(m.width() == 2);
  CHECK(m.dim() == 3);
  CHECK(m.data().size() == 12);
  for (float v : m.data()) CHECK(v == 0.0f);
}

TEST_CASE("1x1x1 map encodes one little-endian float after the header") {
  testing::TempDir dir("fs_layout");
  write_feature_map(FeatureMap(1, 1, 1, {1.0f}), dir / "one.pxf");
  const auto bytes = file_bytes(dir / "one.pxf");
  const std::vector<unsigned char> expected = {'P', 'X', 'F', '1', 1, 0, 0, 0, 1, 0, 0, 0,
                                               1,   0,   0,   0,   0, 0, 0x80, 0x3f};
  REQUIRE(bytes.size() == expected.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    CHECK(static_cast<unsigned char>(bytes[i]) == expected[i]);
  }
}

TEST_CASE("read errors are reported distinctly") {
  testing::TempDir dir("fs_errors");
  CHECK(code_of([&] { read_feature_map(dir / "missing.pxf"); }) == ErrorCode::kMissingFile);

  write_feature_map(FeatureMap(2, 2, 3, std::vector<float>(12, 0.5f)), dir / "ok.pxf");
  auto bytes = file_bytes(dir / "ok.pxf");

  auto bad_magic = bytes;
  bad_magic[0] = 'Q';
  write_bytes(dir / "magic.pxf", bad_magic);
  CHECK(code_of([&] { read_feature_map(dir / "magic.pxf"); }) == ErrorCode::kBadMagic);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 4);  // 11 of 12 values
  write_bytes(dir / "short.pxf", truncated);
  CHECK(code_of([&] { read_feature_map(dir / "short.pxf"); }) == ErrorCode::kTruncated);

  auto trailing = bytes;
  trailing.push_back(0);
  write_bytes(dir / "long.pxf", trailing);
  CHECK(code_of([&] { read_feature_map(dir / "long.pxf"); }) == ErrorCode::kTrailingData);

  auto nonfinite = bytes;
  const float nan = std::nanf("");
  std::memcpy(nonfinite.data() + 16, &nan, 4);
  write_bytes(dir / "nan.pxf", nonfinite);
  CHECK(code_of([&] { read_feature_map(dir / "nan.pxf"); }) == ErrorCode::kNonFinite);

  CHECK(code_of([&] {
          write_feature_map(FeatureMap(1, 1, 1, {1.0f}), dir / "no" / "such" / "dir" / "x.pxf");
        }) == ErrorCode::kIo);
}

TEST_CASE("feature maps, masks, and intensity images round-trip bit-exactly") {
  testing::TempDir dir("fs_roundtrip");
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> extent(1, 17);
    const int h = extent(rng), w = extent(rng), d = extent(rng);
    const FeatureMap m = testing::random_features(h, w, d, rng);
    write_feature_map(m, dir / "m.pxf");
    CHECK(read_feature_map(dir / "m.pxf") == m);
    const auto first = file_bytes(dir / "m.pxf");
    write_feature_map(read_feature_map(dir / "m.pxf"), dir / "m2.pxf");
    CHECK(file_bytes(dir / "m2.pxf") == first);

    const LabelMask mask = testing::random_mask(h, w, 1 + trial % 5, 0.4, rng);
    write_label_mask(mask, dir / "m.pxm");
    CHECK(read_label_mask(dir / "m.pxm") == mask);

    IntensityImage image{h, w, std::vector<float>(m.data().begin(), m.data().begin() + h * w)};
    write_intensity_image(image, dir / "i.pxf");
    CHECK(read_intensity_image(dir / "i.pxf") == image);
  }
}

TEST_CASE("label mask validates labels against label_count") {
  CHECK_THROWS_AS(LabelMask(1, 2, 2, {0, 3}), Error);
  try {
    LabelMask(1, 2, 2, {0, 3});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kLabelOutOfRange);
  }
  const LabelMask ok(1, 3, 2, {0, 2, 2});
  CHECK(ok.count(2) == 2);
  CHECK(ok.count(1) == 0);
}

TEST_CASE("intensity files with dim != 1 are rejected") {
  testing::TempDir dir("fs_intensity");
  write_feature_map(FeatureMap(1, 1, 2, {1.0f, 2.0f}), dir / "two.pxf");
  CHECK_THROWS_AS(read_intensity_image(dir / "two.pxf"), Error);
}

TEST_CASE("bilinear interpolation of a 2x1 grid to 4x1") {
  const FeatureMap m = interpolate_patch_grid(PatchGrid(2, 1, 1, {0.0f, 1.0f}), 4, 1);
  const float expected[4] = {0.0f, 0.25f, 0.75f, 1.0f};
  for (int r = 0; r < 4; ++r) CHECK(m.at(r, 0)[0] == doctest::Approx(expected[r]).epsilon(1e-7));
}

TEST_CASE("interpolation preserves constants, broadcasts 1x1, and stays in bounds") {
  const FeatureMap single = interpolate_patch_grid(PatchGrid(1, 1, 2, {3.0f, -1.0f}), 5, 7);
  for (std::size_t i = 0; i < single.pixel_count(); ++i) {
    CHECK(single.at(i)[0] == 3.0f);
    CHECK(single.at(i)[1] == -1.0f);
  }
  const FeatureMap constant =
      interpolate_patch_grid(PatchGrid(3, 4, 1, std::vector<float>(12, 0.7f)), 14, 9);
  for (float v : constant.data()) CHECK(std::abs(v - 0.7f) < 1e-6);

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  for (int trial = 0; trial < 20; ++trial) {
    const int rows = 1 + trial % 4, cols = 1 + (trial / 4) % 4, dim = 3;
    std::vector<float> data(static_cast<std::size_t>(rows) * cols * dim);
    for (float& v : data) v = u(rng);
    const PatchGrid grid(rows, cols, dim, data);
    const FeatureMap out = interpolate_patch_grid(grid, 3 + trial, 5 + trial);
    for (int k = 0; k < dim; ++k) {
      float lo = INFINITY, hi = -INFINITY;
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          lo = std::min(lo, grid.at(r, c)[k]);
          hi = std::max(hi, grid.at(r, c)[k]);
        }
      }
      for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        CHECK(out.at(i)[k] >= lo - 1e-6f);
        CHECK(out.at(i)[k] <= hi + 1e-6f);
      }
    }
  }
}

TEST_CASE("l2 normalisation") {
  const FeatureMap m = l2_normalize(FeatureMap(1, 3, 2, {3.0f, 4.0f, 0.0f, 0.0f, 1.0f, 0.0f}));
  CHECK(m.at(0, 0)[0] == doctest::Approx(0.6));
  CHECK(m.at(0, 0)[1] == doctest::Approx(0.8));
  CHECK(m.at(0, 1)[0] == 0.0f);
  CHECK(m.at(0, 1)[1] == 0.0f);
  CHECK(std::abs(m.at(0, 2)[0] - 1.0f) < 1e-6);

  std::mt19937_64 rng(9);
  const FeatureMap r = l2_normalize(testing::random_features(8, 8, 16, rng));
  for (std::size_t i = 0; i < r.pixel_count(); ++i) {
    double n = 0.0;
    for (float v : r.at(i)) n += static_cast<double>(v) * v;
    n = std::sqrt(n);
    CHECK((n == 0.0 || std::abs(n - 1.0) <= 1e-5));
  }
}

}  // TEST_SUITE
