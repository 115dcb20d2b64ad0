#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "pixadapt/adapters.hpp"
#include "pixadapt/cli.hpp"
#include "pixadapt/eval.hpp"
#include "pixadapt/feature_store.hpp"
#include "pixadapt/pipeline.hpp"
#include "pixadapt/synth.hpp"

namespace py = pybind11;
using namespace pixadapt;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

FeatureMap to_features(const FloatArray& a) {
  if (a.ndim() != 3) throw py::value_error("features must be a (height, width, dim) array");
  return FeatureMap(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                    static_cast<int>(a.shape(2)),
                    std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray from_features(const FeatureMap& m) {
  FloatArray out({m.height(), m.width(), m.dim()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

LabelMask to_mask(const ByteArray& a, int label_count) {
  if (a.ndim() != 2) throw py::value_error("mask must be a (height, width) array");
  return LabelMask(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), label_count,
                   std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
}

int infer_label_count(const ByteArray& a) {
  const auto* begin = a.data();
  return a.size() == 0 ? 0 : *std::max_element(begin, begin + a.size());
}

ByteArray from_mask(const LabelMask& m) {
  ByteArray out({m.height(), m.width()});
  std::copy(m.labels().begin(), m.labels().end(), out.mutable_data());
  return out;
}

py::array_t<double> from_scores(const ScoreMap& s) {
  py::array_t<double> out({s.height, s.width, s.channels});
  std::copy(s.values.begin(), s.values.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_pixadapt, m) {
  m.doc() = "Few-shot pixel-feature localization: file formats, adapters, metrics";

  static py::exception<Error> error(m, "PixadaptError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  // File formats
  m.def("read_feature_map", [](const std::filesystem::path& p) {
    return from_features(read_feature_map(p));
  }, py::arg("path"));
  m.def("write_feature_map", [](const FloatArray& a, const std::filesystem::path& p) {
    write_feature_map(to_features(a), p);
  }, py::arg("features"), py::arg("path"));
  m.def("read_label_mask", [](const std::filesystem::path& p) {
    const LabelMask mask = read_label_mask(p);
    return py::make_tuple(from_mask(mask), mask.label_count());
  }, py::arg("path"), "Returns (labels, label_count).");
  m.def("write_label_mask", [](const ByteArray& a, const std::filesystem::path& p,
                               std::optional<int> label_count) {
    write_label_mask(to_mask(a, label_count.value_or(infer_label_count(a))), p);
  }, py::arg("labels"), py::arg("path"), py::arg("label_count") = py::none());

  m.def("interpolate_patch_grid", [](const FloatArray& grid, int out_height, int out_width) {
    if (grid.ndim() != 3) throw py::value_error("grid must be a (rows, cols, dim) array");
    const PatchGrid g(static_cast<int>(grid.shape(0)), static_cast<int>(grid.shape(1)),
                      static_cast<int>(grid.shape(2)),
                      std::vector<float>(grid.data(), grid.data() + grid.size()));
    return from_features(interpolate_patch_grid(g, out_height, out_width));
  }, py::arg("grid"), py::arg("out_height"), py::arg("out_width"));
  m.def("l2_normalize", [](const FloatArray& a, double epsilon) {
    return from_features(l2_normalize(to_features(a), epsilon));
  }, py::arg("features"), py::arg("epsilon") = 1e-12);

  // Basic adapter
  m.def("basic_localize", [](const FloatArray& tf, const ByteArray& tm, int label,
                             const FloatArray& target, double threshold, const std::string& red) {
    const Reduction reduction = red == "max" ? Reduction::kMax : Reduction::kMean;
    const auto loc = basic_localize(to_features(tf), to_mask(tm, infer_label_count(tm)), label,
                                    to_features(target), threshold, reduction);
    return py::make_tuple(from_mask(loc.mask), from_scores(loc.scores));
  }, py::arg("template_features"), py::arg("template_mask"), py::arg("label"),
     py::arg("target_features"), py::arg("threshold") = 0.5, py::arg("reduction") = "mean",
     "Returns (mask, scores).");

  // Post-processing and prompting
  m.def("filter_components", [](const ByteArray& a, int connectivity, int min_size) {
    return from_mask(filter_components(to_mask(a, infer_label_count(a)), connectivity, min_size));
  }, py::arg("labels"), py::arg("connectivity") = 8, py::arg("min_size") = 5);
  m.def("landmark_from_mask", [](const ByteArray& a, int label, int connectivity)
            -> std::optional<std::pair<int, int>> {
    const auto p = landmark_from_mask(to_mask(a, infer_label_count(a)), label, connectivity);
    if (!p) return std::nullopt;
    return std::make_pair(p->row, p->col);
  }, py::arg("labels"), py::arg("label"), py::arg("connectivity") = 8);
  m.def("select_prompts", [](const ByteArray& a, int label, int n, std::uint64_t seed) {
    std::vector<std::pair<int, int>> out;
    for (const Pixel& p : select_prompts(to_mask(a, infer_label_count(a)), label, n, seed).points) {
      out.emplace_back(p.row, p.col);
    }
    return out;
  }, py::arg("labels"), py::arg("label"), py::arg("n") = 10, py::arg("seed") = 0);
  m.def("mock_refine", [](const FloatArray& image, const std::vector<std::pair<int, int>>& points,
                          double tolerance) {
    if (image.ndim() != 2) throw py::value_error("image must be a (height, width) array");
    IntensityImage img{static_cast<int>(image.shape(0)), static_cast<int>(image.shape(1)),
                       std::vector<float>(image.data(), image.data() + image.size())};
    PromptSet prompts{1, {}};
    for (const auto& [r, c] : points) prompts.points.push_back({r, c});
    return from_mask(mock_refine(img, prompts, tolerance));
  }, py::arg("image"), py::arg("points"), py::arg("tolerance") = 0.05);

  // Metrics
  m.def("iou", [](const ByteArray& pred, const ByteArray& gt, std::optional<int> label) {
    const LabelMask p = to_mask(pred, infer_label_count(pred));
    const LabelMask g = to_mask(gt, infer_label_count(gt));
    return label ? iou(p, g, *label) : iou(p, g);
  }, py::arg("pred"), py::arg("gt"), py::arg("label") = py::none());
  m.def("localization_accuracy",
        [](const std::vector<std::optional<std::pair<int, int>>>& predicted,
           const std::vector<std::pair<int, int>>& truth, double radius) {
    if (predicted.size() != truth.size()) {
      throw py::value_error("predicted and truth must have equal length");
    }
    std::vector<LocalizationCase> cases;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      std::optional<Pixel> p;
      if (predicted[i]) p = Pixel{predicted[i]->first, predicted[i]->second};
      cases.push_back({p, Pixel{truth[i].first, truth[i].second}, 1, std::to_string(i), ""});
    }
    return localization_accuracy(cases, radius);
  }, py::arg("predicted"), py::arg("truth"), py::arg("radius") = 10.0);

  // Fixtures and the command line
  m.def("synth_scenario", [](const std::string& name, std::uint64_t seed) {
    const synth::ScenarioSpec spec =
        name == "confound" ? synth::confound_spec(seed) : synth::separable_spec(seed);
    const synth::Scenario sc = synth::generate_scenario(spec);
    py::list slices;
    for (const synth::Slice& s : sc.slices) {
      FloatArray intensity({s.intensity.height, s.intensity.width});
      std::copy(s.intensity.values.begin(), s.intensity.values.end(), intensity.mutable_data());
      slices.append(py::make_tuple(from_features(s.features), from_mask(s.mask), intensity));
    }
    return slices;
  }, py::arg("name") = "separable", py::arg("seed") = 0,
     "List of (features, mask, intensity) per slice.");
  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs the command line; returns (exit_code, stdout, stderr).");
}
