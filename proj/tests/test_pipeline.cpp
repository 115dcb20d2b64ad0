#include <doctest.h>

#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "pixadapt/error.hpp"
#include "pixadapt/pipeline.hpp"
#include "test_support.hpp"

using namespace pixadapt;

namespace {

LabelMask from_rows(const std::vector<std::string>& rows, int label_count = 1) {
  std::vector<std::uint8_t> labels;
  for (const auto& row : rows)
    for (char ch : row) labels.push_back(ch == '.' ? 0 : static_cast<std::uint8_t>(ch - '0'));
  return LabelMask(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()), label_count,
                   std::move(labels));
}

/// Object disk (intensity 1.0, feature e0) on a flat background (0.0, e1).
struct TwoIntensity {
  FeatureMap features;
  LabelMask mask;
  IntensityImage image;
};

TwoIntensity two_intensity(int h, int w, int cr, int cc, int radius, bool with_object = true) {
  std::vector<float> feats;
  std::vector<std::uint8_t> labels;
  IntensityImage image{h, w, {}};
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const bool in = with_object && (r - cr) * (r - cr) + (c - cc) * (c - cc) <= radius * radius;
      labels.push_back(in ? 1 : 0);
      image.values.push_back(in ? 1.0f : 0.0f);
      feats.push_back(in ? 1.0f : 0.0f);
      feats.push_back(in ? 0.0f : 1.0f);
      feats.push_back(0.0f);
    }
  }
  return {FeatureMap(h, w, 3, std::move(feats)), LabelMask(h, w, 1, std::move(labels)),
          std::move(image)};
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("filter_components examples") {
  CHECK(filter_components(from_rows({"...", ".1.", "..."}), 8, 2) == LabelMask(3, 3, 1));
  std::vector<std::string> rows(12, std::string(12, '.'));
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 10; ++c) rows[r][c] = '1';  // 50-pixel blob
  rows[9][9] = rows[9][10] = rows[10][10] = '1';    // 3-pixel speck
  const LabelMask mask = from_rows(rows);
  const LabelMask out = filter_components(mask, 8, 5);
  CHECK(out.count(1) == 50);
  CHECK(out.at(9, 9) == 0);
  CHECK(filter_components(mask, 8, 1) == mask);
  CHECK_THROWS_AS(filter_components(mask, 6, 5), Error);
}

TEST_CASE("filter_components agrees with a union-find counter and is idempotent") {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 100; ++trial) {
    const int connectivity = trial % 2 ? 8 : 4;
    const int min_size = 1 + trial % 7;
    const LabelMask mask = testing::random_mask(16, 20, 1 + trial % 3, 0.35, rng);
    const LabelMask out = filter_components(mask, connectivity, min_size);
    for (int l = 1; l <= mask.label_count(); ++l) {
      const auto sizes = testing::union_find_component_sizes(mask, l, connectivity);
      for (std::size_t i = 0; i < mask.pixel_count(); ++i) {
        if (mask.labels()[i] != l) continue;
        CHECK((out.labels()[i] == l) == (sizes[i] >= min_size));
      }
      const auto out_sizes = testing::union_find_component_sizes(out, l, connectivity);
      for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        if (out.labels()[i] == l) CHECK(out_sizes[i] >= min_size);
      }
    }
    CHECK(filter_components(out, connectivity, min_size) == out);
  }
}

TEST_CASE("landmarks") {
  LabelMask one = from_rows({"........", "........", "........", "........", ".......1"});
  CHECK(landmark_from_mask(one, 1) == Pixel{4, 7});
  std::vector<std::string> rows(7, std::string(7, '.'));
  for (int r = 2; r <= 4; ++r)
    for (int c = 2; c <= 4; ++c) rows[r][c] = '1';
  rows[0][6] = '1';
  CHECK(landmark_from_mask(from_rows(rows), 1) == Pixel{3, 3});
  CHECK_FALSE(landmark_from_mask(LabelMask(4, 4, 1), 1).has_value());
}

TEST_CASE("prompt count law and containment") {
  const LabelMask four = from_rows({"11..", "11..", "....", "...."});
  const PromptSet all = select_prompts(four, 1, 10, 1);
  CHECK(std::set<Pixel>(all.points.begin(), all.points.end()) ==
        std::set<Pixel>{{0, 0}, {0, 1}, {1, 0}, {1, 1}});
  CHECK_THROWS_AS(select_prompts(LabelMask(4, 4, 1), 1, 10, 1), Error);

  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const LabelMask mask = testing::random_mask(24, 24, 2, 0.05 + 0.01 * (trial % 60), rng);
    for (int l = 1; l <= 2; ++l) {
      if (mask.count(l) == 0) continue;
      const int n = 1 + trial % 12;
      const PromptSet p = select_prompts(mask, l, n, trial);
      CHECK(p.count() == std::min<std::size_t>(n, mask.count(l)));
      CHECK(std::set<Pixel>(p.points.begin(), p.points.end()).size() == p.count());
      for (const Pixel& q : p.points) CHECK(mask.at(q) == l);
      CHECK(select_prompts(mask, l, n, trial) == p);
    }
  }
  std::vector<std::string> big(25, std::string(20, '1'));
  CHECK(select_prompts(from_rows(big), 1, 10, 3).count() == 10);
}

TEST_CASE("mock refiner flood fill") {
  IntensityImage uniform{5, 6, std::vector<float>(30, 0.3f)};
  CHECK(mock_refine(uniform, {1, {{2, 2}}}, 0.0).count(1) == 30);

  IntensityImage unique{3, 3, {0, 1, 2, 3, 4, 5, 6, 7, 8}};
  const LabelMask single = mock_refine(unique, {1, {{1, 1}}}, 0.0);
  CHECK(single.count(1) == 1);
  CHECK(single.at(1, 1) == 1);

  const TwoIntensity fx = two_intensity(32, 32, 15, 12, 6);
  const PromptSet prompts = select_prompts(fx.mask, 1, 10, 2);
  CHECK(mock_refine(fx.image, prompts, 0.5) == fx.mask);
  CHECK(MockRefiner(0.5).refine({"img", 32, 32, {prompts}}, fx.image, 1) == fx.mask);
}

TEST_CASE("prompt files and refined-mask import") {
  testing::TempDir dir("prompts");
  RefinerRequest request{"slice.pxf", 10, 12, {{1, {{1, 2}, {3, 4}}}, {2, {{9, 11}}}}};
  export_prompts(request, dir / "p.json");
  CHECK(import_prompts(dir / "p.json") == request);

  RefinerRequest empty{"slice.pxf", 10, 12, {}};
  CHECK_THROWS_AS(export_prompts(empty, dir / "e.json"), Error);
  std::ofstream(dir / "empty.json") << R"({"image": "x", "height": 4, "width": 4, "labels": []})";
  CHECK_THROWS_AS(import_prompts(dir / "empty.json"), Error);
  std::ofstream(dir / "broken.json") << "{not json";
  CHECK_THROWS_AS(import_prompts(dir / "broken.json"), Error);

  write_label_mask(LabelMask(10, 12, 1), dir / "r.pxm");
  CHECK(import_refined_mask(dir / "r.pxm", 10, 12) == LabelMask(10, 12, 1));
  try {
    import_refined_mask(dir / "r.pxm", 10, 13);
    FAIL("expected a dimension error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDimensionMismatch);
  }
}

TEST_CASE("config validation names the offending key") {
  PipelineConfig c;
  try {
    c.validate();
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
    CHECK(std::string(e.what()).find("template_features") != std::string::npos);
  }
  c.template_features = {"t.pxf"};
  c.template_masks = {"t.pxm"};
  c.target_features = {"x.pxf"};
  c.output_dir = "out";
  c.threshold = 1.5;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("threshold"), Error);
  CHECK(stable_hash("abc") == stable_hash("abc"));
  CHECK(stable_hash("abc") != stable_hash("abd"));
  CHECK(stable_hash("").size() == 16);
}

TEST_CASE("segment run on the two-intensity fixture recovers the object exactly") {
  testing::TempDir dir("segment");
  const TwoIntensity tmpl = two_intensity(32, 32, 12, 12, 5);
  const TwoIntensity target = two_intensity(32, 32, 18, 20, 7);
  const TwoIntensity empty = two_intensity(32, 32, 0, 0, 0, false);
  write_feature_map(tmpl.features, dir / "t.pxf");
  write_label_mask(tmpl.mask, dir / "t.pxm");
  write_feature_map(target.features, dir / "a.pxf");
  write_label_mask(target.mask, dir / "a.pxm");
  write_intensity_image(target.image, dir / "a_int.pxf");
  write_feature_map(empty.features, dir / "b.pxf");
  write_label_mask(empty.mask, dir / "b.pxm");
  write_intensity_image(empty.image, dir / "b_int.pxf");

  PipelineConfig c;
  c.task = Task::kSegment;
  c.adapter = AdapterKind::kBasic;
  c.template_features = {dir / "t.pxf"};
  c.template_masks = {dir / "t.pxm"};
  c.target_features = {dir / "a.pxf", dir / "b.pxf"};
  c.target_masks = {dir / "a.pxm", dir / "b.pxm"};
  c.target_intensity = {dir / "a_int.pxf", dir / "b_int.pxf"};
  c.output_dir = dir / "run";
  c.refine_tolerance = 0.5;
  const RunArtifacts run = run_pipeline(c);
  REQUIRE(run.slices.size() == 2);
  CHECK(run.slices[0].refined == target.mask);
  CHECK(run.slices[0].prompts.size() == 1);
  CHECK(run.slices[0].prompts[0].count() == 10);
  CHECK(run.slices[1].prompts.empty());
  CHECK(run.slices[1].refined == LabelMask(32, 32, 1));
  CHECK_FALSE(run.slices[1].landmarks[0].has_value());
  REQUIRE(run.report.has_value());
  CHECK(run.report->per_label.at(1).iou == 1.0);
  CHECK(import_refined_mask(dir / "run" / "refined" / "a.pxm", 32, 32) == target.mask);
  CHECK(import_prompts(dir / "run" / "prompts" / "a.json").prompts[0] ==
        run.slices[0].prompts[0]);
  CHECK_FALSE(std::filesystem::exists(dir / "run" / "prompts" / "b.json"));

  const auto landmarks = nlohmann::json::parse(read_text(dir / "run" / "landmarks.json"));
  CHECK(landmarks["slices"][0]["landmarks"][0]["point"] == nlohmann::json::array({18, 20}));
  CHECK(landmarks["slices"][1]["landmarks"][0]["point"].is_null());

  const auto manifest = nlohmann::json::parse(read_text(dir / "run" / "manifest.json"));
  CHECK(manifest["config_hash"].get<std::string>().size() == 16);
  CHECK(manifest.contains("excluded"));

  // Same seed: byte-identical artifacts.
  c.output_dir = dir / "run2";
  run_pipeline(c);
  for (const char* f : {"masks/a.pxm", "refined/a.pxm", "prompts/a.json", "report.json",
                        "landmarks.json"}) {
    CHECK(read_text(dir / "run" / f) == read_text(dir / "run2" / f));
  }
}

TEST_CASE("pipeline errors carry their stage") {
  testing::TempDir dir("stage");
  PipelineConfig c;
  c.adapter = AdapterKind::kBasic;
  c.template_features = {dir / "missing.pxf"};
  c.template_masks = {dir / "missing.pxm"};
  c.target_features = {dir / "x.pxf"};
  c.output_dir = dir / "run";
  try {
    run_pipeline(c);
    FAIL("expected a pipeline error");
  } catch (const PipelineError& e) {
    CHECK(e.stage() == "load-templates");
    CHECK(e.code() == ErrorCode::kMissingFile);
    CHECK(std::string(e.what()).find("missing.pxf") != std::string::npos);
  }
}

}  // TEST_SUITE
