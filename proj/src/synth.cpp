#include "pixadapt/synth.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include <json.hpp>

#include "binary_io.hpp"
#include "pixadapt/error.hpp"
#include "pixadapt/sampling.hpp"

namespace pixadapt::synth {

namespace {

using nlohmann::ordered_json;

std::vector<double> normalized(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  const double n = std::sqrt(s);
  std::vector<double> out(v);
  if (n > 0.0) {
    for (double& x : out) x /= n;
  }
  return out;
}

/// `count` orthonormal directions in R^dim from Gaussian draws.
std::vector<std::vector<double>> orthonormal_directions(int count, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> basis;
  while (static_cast<int>(basis.size()) < count) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (double& x : v) x = gauss(rng);
    for (const auto& b : basis) {
      double proj = 0.0;
      for (int k = 0; k < dim; ++k) proj += v[k] * b[k];
      for (int k = 0; k < dim; ++k) v[k] -= proj * b[k];
    }
    double n = 0.0;
    for (double x : v) n += x * x;
    if (std::sqrt(n) < 1e-6) continue;
    basis.push_back(normalized(v));
  }
  return basis;
}

void check_region(const ScenarioSpec& spec, const RegionSpec& r, const std::string& what) {
  if (static_cast<int>(r.direction.size()) != spec.dim) {
    throw Error(ErrorCode::kInvalidArgument, what + ": direction length != dim");
  }
  double n = 0.0;
  for (double x : r.direction) n += x * x;
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::kInvalidArgument, what + ": direction must be finite and non-zero");
  }
  if (!(r.noise >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, what + ": noise scale must be >= 0");
  }
  switch (r.shape) {
    case Shape::kFull:
      break;
    case Shape::kRect:
      if (r.rows < 1 || r.cols < 1 || r.row < 0 || r.col < 0 || r.row + r.rows > spec.height ||
          r.col + r.cols > spec.width) {
        throw Error(ErrorCode::kInvalidArgument, what + ": rectangle out of bounds");
      }
      break;
    case Shape::kDisk:
      if (r.radius < 0 || r.row - r.radius < 0 || r.col - r.radius < 0 ||
          r.row + r.radius >= spec.height || r.col + r.radius >= spec.width) {
        throw Error(ErrorCode::kInvalidArgument, what + ": disk out of bounds");
      }
      break;
  }
}

const char* shape_name(Shape s) {
  switch (s) {
    case Shape::kFull: return "full";
    case Shape::kRect: return "rect";
    case Shape::kDisk: return "disk";
  }
  return "rect";
}

Shape shape_from_name(const std::string& name) {
  if (name == "full") return Shape::kFull;
  if (name == "rect") return Shape::kRect;
  if (name == "disk") return Shape::kDisk;
  throw Error(ErrorCode::kMalformed, "unknown region shape \"" + name + "\"");
}

ordered_json region_json(const RegionSpec& r) {
  ordered_json j;
  j["label"] = r.label;
  j["shape"] = shape_name(r.shape);
  j["row"] = r.row;
  j["col"] = r.col;
  j["rows"] = r.rows;
  j["cols"] = r.cols;
  j["radius"] = r.radius;
  j["direction"] = r.direction;
  j["noise"] = r.noise;
  j["gray"] = r.gray;
  return j;
}

RegionSpec region_from_json(const ordered_json& j) {
  RegionSpec r;
  r.label = j.at("label").get<int>();
  r.shape = shape_from_name(j.at("shape").get<std::string>());
  r.row = j.value("row", 0);
  r.col = j.value("col", 0);
  r.rows = j.value("rows", 0);
  r.cols = j.value("cols", 0);
  r.radius = j.value("radius", 0);
  r.direction = j.at("direction").get<std::vector<double>>();
  r.noise = j.value("noise", 0.0);
  r.gray = j.value("gray", 0.5);
  return r;
}

}  // namespace

bool RegionSpec::contains(int r, int c, int row_shift, int col_shift) const {
  switch (shape) {
    case Shape::kFull:
      return true;
    case Shape::kRect: {
      const int top = row + row_shift;
      const int left = col + col_shift;
      return r >= top && r < top + rows && c >= left && c < left + cols;
    }
    case Shape::kDisk: {
      const long dr = r - (row + row_shift);
      const long dc = c - (col + col_shift);
      return dr * dr + dc * dc <= static_cast<long>(radius) * radius;
    }
  }
  return false;
}

void ScenarioSpec::validate() const {
  if (height < 1 || width < 1 || dim < 1) {
    throw Error(ErrorCode::kInvalidArgument, "scenario extents must be >= 1");
  }
  if (label_count < 0 || label_count > 255) {
    throw Error(ErrorCode::kInvalidArgument, "scenario label_count must be in [0, 255]");
  }
  if (background.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "scenario needs at least one background cluster");
  }
  if (slices.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "scenario needs at least one slice");
  }
  for (std::size_t i = 0; i < background.size(); ++i) {
    if (background[i].label != 0) {
      throw Error(ErrorCode::kInvalidArgument, "background clusters must carry label 0");
    }
    check_region(*this, background[i], "background " + std::to_string(i));
  }
  for (std::size_t i = 0; i < regions.size(); ++i) {
    if (regions[i].label < 1 || regions[i].label > label_count) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  "region " + std::to_string(i) + " label outside [1, label_count]");
    }
    check_region(*this, regions[i], "region " + std::to_string(i));
  }
}

Scenario generate_scenario(const ScenarioSpec& spec) {
  spec.validate();
  const int h = spec.height;
  const int w = spec.width;
  const int dim = spec.dim;
  const int nbg = static_cast<int>(spec.background.size());

  std::vector<const RegionSpec*> clusters;
  for (const auto& b : spec.background) clusters.push_back(&b);
  for (const auto& r : spec.regions) clusters.push_back(&r);
  std::vector<std::vector<double>> directions;
  for (const RegionSpec* c : clusters) directions.push_back(normalized(c->direction));

  Scenario scenario;
  scenario.spec = spec;
  for (std::size_t s = 0; s < spec.slices.size(); ++s) {
    const SliceSpec& slice = spec.slices[s];
    std::vector<int> source(static_cast<std::size_t>(h) * w, 0);
    std::vector<std::uint8_t> labels(source.size(), 0);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * w + c;
        for (int b = 1; b < nbg; ++b) {
          if (spec.background[b].contains(r, c, 0, 0)) source[i] = b;
        }
        if (!slice.foreground) continue;
        for (std::size_t g = 0; g < spec.regions.size(); ++g) {
          const RegionSpec& region = spec.regions[g];
          if (!region.contains(r, c, slice.row_shift, slice.col_shift)) continue;
          if (labels[i] != 0 && labels[i] != region.label) {
            throw Error(ErrorCode::kInvalidArgument,
                        "slice " + std::to_string(s) + ": regions with labels " +
                            std::to_string(labels[i]) + " and " + std::to_string(region.label) +
                            " overlap at (" + std::to_string(r) + ", " + std::to_string(c) + ")");
          }
          labels[i] = static_cast<std::uint8_t>(region.label);
          source[i] = nbg + static_cast<int>(g);
        }
      }
    }

    std::mt19937_64 rng(derive_seed(spec.seed, s));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<float> features(source.size() * dim);
    std::vector<float> intensity(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
      const RegionSpec& cluster = *clusters[source[i]];
      const auto& dir = directions[source[i]];
      for (int k = 0; k < dim; ++k) {
        const double z = gauss(rng);
        features[i * dim + k] = static_cast<float>(slice.drift * (dir[k] + cluster.noise * z));
      }
      intensity[i] = static_cast<float>(cluster.gray * slice.drift);
    }
    scenario.slices.push_back(
        {FeatureMap(h, w, dim, std::move(features)),
         LabelMask(h, w, spec.label_count, std::move(labels)), IntensityImage{h, w, intensity},
         std::move(source)});
  }
  return scenario;
}

ScenarioSpec separable_spec(std::uint64_t seed) {
  ScenarioSpec spec;
  spec.name = "separable";
  spec.height = 64;
  spec.width = 64;
  spec.dim = 32;
  spec.label_count = 3;
  spec.seed = seed;
  const auto dirs = orthonormal_directions(5, spec.dim, derive_seed(seed, 1000));
  constexpr double kNoise = 0.08;

  spec.background.push_back({0, Shape::kFull, 0, 0, 0, 0, 0, dirs[0], kNoise, 0.1});
  spec.background.push_back({0, Shape::kRect, 4, 36, 14, 22, 0, dirs[1], kNoise, 0.3});
  spec.regions.push_back({1, Shape::kRect, 6, 6, 14, 16, 0, dirs[2], kNoise, 0.5});
  spec.regions.push_back({2, Shape::kDisk, 42, 18, 0, 0, 9, dirs[3], kNoise, 0.7});
  spec.regions.push_back({3, Shape::kRect, 30, 40, 16, 14, 0, dirs[4], kNoise, 0.9});

  spec.slices = {{1.00, 0, 0, true},  {0.90, 2, -1, true}, {1.10, -2, 2, true},
                 {0.95, 3, 1, true},  {1.05, -1, -3, true}, {0.85, 1, 3, true}};
  return spec;
}

ScenarioSpec confound_spec(std::uint64_t seed) {
  ScenarioSpec spec;
  spec.name = "confound";
  spec.height = 64;
  spec.width = 64;
  spec.dim = 32;
  spec.label_count = 1;
  spec.seed = seed;
  const auto dirs = orthonormal_directions(3, spec.dim, derive_seed(seed, 2000));
  const auto& fg = dirs[0];
  const auto& side = dirs[1];
  std::vector<double> confound(fg.size());
  const double sine = std::sqrt(1.0 - kConfoundCosine * kConfoundCosine);
  for (std::size_t k = 0; k < fg.size(); ++k) {
    confound[k] = kConfoundCosine * fg[k] + sine * side[k];
  }
  constexpr double kNoise = 0.05;

  spec.background.push_back({0, Shape::kFull, 0, 0, 0, 0, 0, dirs[2], kNoise, 0.1});
  spec.background.push_back({0, Shape::kRect, 34, 30, 24, 28, 0, confound, kNoise, 0.5});
  spec.regions.push_back({1, Shape::kDisk, 20, 20, 0, 0, 9, fg, kNoise, 0.8});

  spec.slices = {{1.0, 0, 0, true},  {0.9, 3, 2, true},  {1.1, -2, 4, true},
                 {0.8, 4, -3, true}, {1.2, -3, -2, true}};
  return spec;
}

ScenarioSpec background_only(const ScenarioSpec& spec, int slice_count, std::uint64_t seed) {
  ScenarioSpec out = spec;
  out.name = spec.name + "-background";
  out.seed = seed;
  out.slices.assign(static_cast<std::size_t>(std::max(slice_count, 1)),
                    SliceSpec{1.0, 0, 0, false});
  return out;
}

std::string spec_to_json(const ScenarioSpec& spec) {
  ordered_json j;
  j["name"] = spec.name;
  j["height"] = spec.height;
  j["width"] = spec.width;
  j["dim"] = spec.dim;
  j["label_count"] = spec.label_count;
  j["seed"] = spec.seed;
  j["regions"] = ordered_json::array();
  for (const auto& r : spec.regions) j["regions"].push_back(region_json(r));
  j["background"] = ordered_json::array();
  for (const auto& r : spec.background) j["background"].push_back(region_json(r));
  j["slices"] = ordered_json::array();
  for (const auto& s : spec.slices) {
    j["slices"].push_back({{"drift", s.drift},
                           {"row_shift", s.row_shift},
                           {"col_shift", s.col_shift},
                           {"foreground", s.foreground}});
  }
  return j.dump(2) + "\n";
}

ScenarioSpec spec_from_json(const std::string& text) {
  try {
    const auto j = ordered_json::parse(text);
    ScenarioSpec spec;
    spec.name = j.value("name", std::string("custom"));
    spec.height = j.at("height").get<int>();
    spec.width = j.at("width").get<int>();
    spec.dim = j.at("dim").get<int>();
    spec.label_count = j.at("label_count").get<int>();
    spec.seed = j.value("seed", std::uint64_t{0});
    for (const auto& r : j.at("regions")) spec.regions.push_back(region_from_json(r));
    for (const auto& r : j.at("background")) spec.background.push_back(region_from_json(r));
    for (const auto& s : j.at("slices")) {
      spec.slices.push_back({s.value("drift", 1.0), s.value("row_shift", 0),
                             s.value("col_shift", 0), s.value("foreground", true)});
    }
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformed, std::string("scenario spec: ") + e.what());
  }
}

std::vector<std::filesystem::path> write_scenario(const Scenario& scenario,
                                                  const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw Error(ErrorCode::kIo, dir.string() + ": " + ec.message());
  }
  std::vector<std::filesystem::path> written;
  for (std::size_t s = 0; s < scenario.slices.size(); ++s) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "slice_%03zu", s);
    const auto& slice = scenario.slices[s];
    written.push_back(dir / (std::string(stem) + ".pxf"));
    write_feature_map(slice.features, written.back());
    written.push_back(dir / (std::string(stem) + ".pxm"));
    write_label_mask(slice.mask, written.back());
    written.push_back(dir / (std::string(stem) + "_intensity.pxf"));
    write_intensity_image(slice.intensity, written.back());
  }
  written.push_back(dir / "scenario.json");
  detail::write_text_file(written.back(), spec_to_json(scenario.spec));
  return written;
}

}  // namespace pixadapt::synth
