#include "pixadapt/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <cstdio>
#include <deque>
#include <iterator>
#include <random>
#include <map>
#include <set>

#include <json.hpp>

#include "binary_io.hpp"
#include "pixadapt/error.hpp"

namespace pixadapt {

namespace {

using nlohmann::ordered_json;

void check_connectivity(int connectivity) {
  if (connectivity != 4 && connectivity != 8) {
    throw Error(ErrorCode::kInvalidArgument,
                "connectivity must be 4 or 8, got " + std::to_string(connectivity));
  }
}

constexpr int kDr[8] = {-1, 1, 0, 0, -1, -1, 1, 1};
constexpr int kDc[8] = {0, 0, -1, 1, -1, 1, -1, 1};

}  // namespace

std::vector<std::vector<Pixel>> connected_components(const LabelMask& mask, int label,
                                                     int connectivity) {
  check_connectivity(connectivity);
  const int h = mask.height();
  const int w = mask.width();
  std::vector<bool> visited(mask.pixel_count(), false);
  std::vector<std::vector<Pixel>> components;
  std::deque<Pixel> queue;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const std::size_t start = static_cast<std::size_t>(r) * w + c;
      if (visited[start] || mask.at(r, c) != label) continue;
      visited[start] = true;
      std::vector<Pixel> component;
      queue.push_back({r, c});
      while (!queue.empty()) {
        const Pixel p = queue.front();
        queue.pop_front();
        component.push_back(p);
        for (int k = 0; k < connectivity; ++k) {
          const Pixel q{p.row + kDr[k], p.col + kDc[k]};
          if (!mask.contains(q)) continue;
          const std::size_t qi = static_cast<std::size_t>(q.row) * w + q.col;
          if (visited[qi] || mask.at(q) != label) continue;
          visited[qi] = true;
          queue.push_back(q);
        }
      }
      components.push_back(std::move(component));
    }
  }
  return components;
}

LabelMask filter_components(const LabelMask& mask, int connectivity, int min_size) {
  check_connectivity(connectivity);
  if (min_size < 1) {
    throw Error(ErrorCode::kInvalidArgument, "min_size must be >= 1");
  }
  std::vector<std::uint8_t> labels(mask.labels().begin(), mask.labels().end());
  if (min_size > 1) {
    for (int label = 1; label <= mask.label_count(); ++label) {
      for (const auto& component : connected_components(mask, label, connectivity)) {
        if (static_cast<int>(component.size()) >= min_size) continue;
        for (const Pixel& p : component) {
          labels[static_cast<std::size_t>(p.row) * mask.width() + p.col] = 0;
        }
      }
    }
  }
  return LabelMask(mask.height(), mask.width(), mask.label_count(), std::move(labels));
}

std::optional<Pixel> landmark_from_mask(const LabelMask& mask, int label, int connectivity) {
  if (label < 1 || label > mask.label_count()) return std::nullopt;
  const auto components = connected_components(mask, label, connectivity);
  const std::vector<Pixel>* largest = nullptr;
  for (const auto& component : components) {
    if (!largest || component.size() > largest->size()) largest = &component;
  }
  if (!largest) return std::nullopt;
  double rows = 0.0;
  double cols = 0.0;
  for (const Pixel& p : *largest) {
    rows += p.row;
    cols += p.col;
  }
  const double n = static_cast<double>(largest->size());
  return Pixel{static_cast<int>(std::lround(rows / n)), static_cast<int>(std::lround(cols / n))};
}

PromptSet select_prompts(const LabelMask& mask, int label, int n, std::uint64_t seed) {
  if (n < 1) {
    throw Error(ErrorCode::kInvalidArgument, "prompt count must be >= 1");
  }
  const auto region = foreground_pixels(mask, label);
  if (region.empty()) {
    throw Error(ErrorCode::kEmptyRegion,
                "label " + std::to_string(label) + " has no localized pixels to prompt from");
  }
  PromptSet prompts;
  prompts.label = label;
  std::mt19937_64 rng(seed);
  std::sample(region.begin(), region.end(), std::back_inserter(prompts.points),
              std::min<std::size_t>(static_cast<std::size_t>(n), region.size()), rng);
  return prompts;
}

void RefinerRequest::validate() const {
  if (prompts.empty()) {
    throw Error(ErrorCode::kMalformed, "refiner request has no prompt sets");
  }
  std::set<int> labels;
  for (const PromptSet& set : prompts) {
    if (set.label < 1 || set.label > 255) {
      throw Error(ErrorCode::kMalformed, "prompt label must be in [1, 255]");
    }
    if (!labels.insert(set.label).second) {
      throw Error(ErrorCode::kMalformed, "duplicate prompt label " + std::to_string(set.label));
    }
    if (set.points.empty()) {
      throw Error(ErrorCode::kMalformed,
                  "prompt set for label " + std::to_string(set.label) + " is empty");
    }
    for (const Pixel& p : set.points) {
      const bool in_bounds = p.row >= 0 && p.col >= 0 && (height <= 0 || p.row < height) &&
                             (width <= 0 || p.col < width);
      if (!in_bounds) {
        throw Error(ErrorCode::kMalformed, "prompt (" + std::to_string(p.row) + ", " +
                                               std::to_string(p.col) + ") out of bounds");
      }
    }
  }
}

LabelMask mock_refine(const IntensityImage& image, const PromptSet& prompts, double tolerance) {
  if (!(tolerance >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "refine tolerance must be >= 0");
  }
  for (const Pixel& p : prompts.points) {
    if (!image.contains(p)) {
      throw Error(ErrorCode::kInvalidArgument, "prompt (" + std::to_string(p.row) + ", " +
                                                   std::to_string(p.col) + ") outside the image");
    }
  }
  const int w = image.width;
  std::vector<std::uint8_t> out(image.values.size(), 0);
  std::vector<bool> visited;
  std::deque<Pixel> queue;
  for (const Pixel& seed : prompts.points) {
    const double seed_value = image.at(seed);
    visited.assign(image.values.size(), false);
    visited[static_cast<std::size_t>(seed.row) * w + seed.col] = true;
    queue.push_back(seed);
    while (!queue.empty()) {
      const Pixel p = queue.front();
      queue.pop_front();
      out[static_cast<std::size_t>(p.row) * w + p.col] = 1;
      for (int k = 0; k < 8; ++k) {
        const Pixel q{p.row + kDr[k], p.col + kDc[k]};
        if (!image.contains(q)) continue;
        const std::size_t qi = static_cast<std::size_t>(q.row) * w + q.col;
        if (visited[qi]) continue;
        visited[qi] = true;
        if (std::abs(image.at(q) - seed_value) <= tolerance) queue.push_back(q);
      }
    }
  }
  return LabelMask(image.height, image.width, 1, std::move(out));
}

LabelMask MockRefiner::refine(const RefinerRequest& request, const IntensityImage& image,
                              int label_count) const {
  request.validate();
  std::vector<const PromptSet*> ordered;
  for (const PromptSet& set : request.prompts) ordered.push_back(&set);
  std::sort(ordered.begin(), ordered.end(),
            [](const PromptSet* a, const PromptSet* b) { return a->label < b->label; });
  std::vector<std::uint8_t> labels(image.values.size(), 0);
  for (const PromptSet* set : ordered) {
    if (set->label > label_count) {
      throw Error(ErrorCode::kLabelOutOfRange, "prompt label exceeds label_count");
    }
    const LabelMask grown = mock_refine(image, *set, tolerance_);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == 0 && grown.labels()[i] != 0) labels[i] = static_cast<std::uint8_t>(set->label);
    }
  }
  return LabelMask(image.height, image.width, label_count, std::move(labels));
}

void export_prompts(const RefinerRequest& request, const std::filesystem::path& path) {
  request.validate();
  ordered_json j;
  j["image"] = request.image;
  j["height"] = request.height;
  j["width"] = request.width;
  j["labels"] = ordered_json::array();
  for (const PromptSet& set : request.prompts) {
    ordered_json points = ordered_json::array();
    for (const Pixel& p : set.points) points.push_back({p.row, p.col});
    j["labels"].push_back({{"label", set.label}, {"points", points}});
  }
  detail::write_text_file(path, j.dump(2) + "\n");
}

RefinerRequest import_prompts(const std::filesystem::path& path) {
  const std::string text = detail::read_text_file(path);
  RefinerRequest request;
  try {
    const auto j = ordered_json::parse(text);
    request.image = j.at("image").get<std::string>();
    request.height = j.value("height", 0);
    request.width = j.value("width", 0);
    for (const auto& entry : j.at("labels")) {
      PromptSet set;
      set.label = entry.at("label").get<int>();
      for (const auto& point : entry.at("points")) {
        if (!point.is_array() || point.size() != 2) {
          throw Error(ErrorCode::kMalformed, path.string() + ": points must be [row, col]");
        }
        set.points.push_back({point[0].get<int>(), point[1].get<int>()});
      }
      request.prompts.push_back(std::move(set));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformed, path.string() + ": " + e.what());
  }
  try {
    request.validate();
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
  return request;
}

LabelMask import_refined_mask(const std::filesystem::path& path, int expected_height,
                              int expected_width) {
  LabelMask mask = read_label_mask(path);
  if (mask.height() != expected_height || mask.width() != expected_width) {
    throw Error(ErrorCode::kDimensionMismatch,
                path.string() + ": refined mask is " + std::to_string(mask.height()) + "x" +
                    std::to_string(mask.width()) + ", target is " +
                    std::to_string(expected_height) + "x" + std::to_string(expected_width));
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

const char* to_string(Task task) {
  return task == Task::kLocalize ? "localize" : "segment";
}

const char* to_string(AdapterKind adapter) {
  switch (adapter) {
    case AdapterKind::kBasic: return "basic";
    case AdapterKind::kClassification: return "classification";
    case AdapterKind::kContrastive: return "contrastive";
  }
  return "contrastive";
}

const char* to_string(Reduction reduction) {
  return reduction == Reduction::kMean ? "mean" : "max";
}

void PipelineConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorCode::kConfig, msg); };
  if (template_features.empty()) fail("template_features: at least one template is required");
  if (template_features.size() != template_masks.size()) {
    fail("template_masks: expected one mask per template feature map");
  }
  if (target_features.empty()) fail("targets: at least one target is required");
  if (!target_masks.empty() && target_masks.size() != target_features.size()) {
    fail("ground_truth: expected one mask per target");
  }
  if (task == Task::kSegment && target_intensity.size() != target_features.size()) {
    fail("intensity: segment task needs one intensity image per target");
  }
  if (output_dir.empty()) fail("output: output directory is required");
  if (!(threshold >= -1.0 && threshold <= 1.0)) fail("threshold: must lie in [-1, 1]");
  if (pairs.pairs_per_label < 1) fail("pairs_per_label: must be >= 1");
  if (pairs.min_negative_offset < 0) fail("min_negative_offset: must be >= 0");
  if (references < 1) fail("references: must be >= 1");
  if (connectivity != 4 && connectivity != 8) fail("connectivity: must be 4 or 8");
  if (min_size < 1) fail("min_size: must be >= 1");
  if (prompt_count < 1) fail("prompts: must be >= 1");
  if (!(refine_tolerance >= 0.0)) fail("refine_tolerance: must be >= 0");
  if (!(radius > 0.0)) fail("radius: must be > 0");
  const auto& ct = contrastive.training;
  const auto& kt = classification.training;
  if (ct.epochs < 1 || kt.epochs < 1) fail("epochs: must be >= 1");
  if (ct.batch_size < 1 || kt.batch_size < 1) fail("batch_size: must be >= 1");
  if (!(ct.learning_rate > 0.0) || !(kt.learning_rate > 0.0)) fail("learning_rate: must be > 0");
}

std::string stable_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

ordered_json paths_json(const std::vector<std::filesystem::path>& paths) {
  ordered_json arr = ordered_json::array();
  for (const auto& p : paths) arr.push_back(p.generic_string());
  return arr;
}

ordered_json describe_json(const PipelineConfig& c) {
  ordered_json j;
  j["task"] = to_string(c.task);
  j["adapter"] = to_string(c.adapter);
  j["template_features"] = paths_json(c.template_features);
  j["template_masks"] = paths_json(c.template_masks);
  j["targets"] = paths_json(c.target_features);
  j["ground_truth"] = paths_json(c.target_masks);
  j["intensity"] = paths_json(c.target_intensity);
  j["model"] = c.model ? ordered_json(c.model->generic_string()) : ordered_json(nullptr);
  j["normalize"] = c.normalize;
  j["threshold"] = c.threshold;
  j["reduction"] = to_string(c.reduction);
  j["pairs_per_label"] = c.pairs.pairs_per_label;
  j["min_negative_offset"] = c.pairs.min_negative_offset;
  j["references"] = c.references;
  j["background_margin"] = c.background_margin;
  j["classification"] = {{"epochs", c.classification.training.epochs},
                         {"batch_size", c.classification.training.batch_size},
                         {"learning_rate", c.classification.training.learning_rate},
                         {"hidden_widths", c.classification.hidden_widths}};
  j["contrastive"] = {{"epochs", c.contrastive.training.epochs},
                      {"batch_size", c.contrastive.training.batch_size},
                      {"learning_rate", c.contrastive.training.learning_rate},
                      {"twin_hidden", c.contrastive.twin_hidden},
                      {"embedding_dim", c.contrastive.embedding_dim},
                      {"head_hidden", c.contrastive.head_hidden}};
  j["connectivity"] = c.connectivity;
  j["min_size"] = c.min_size;
  j["prompts"] = c.prompt_count;
  j["refine_tolerance"] = c.refine_tolerance;
  j["radius"] = c.radius;
  j["case_unit"] = c.case_unit == CaseUnit::kSlice ? "slice" : "volume";
  j["seed"] = c.seed;
  return j;
}

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const PipelineError&) {
    throw;
  } catch (const Error& e) {
    throw PipelineError(name, e);
  }
}

FeatureMap load_features(const std::filesystem::path& path, bool normalize) {
  FeatureMap map = read_feature_map(path);
  return normalize ? l2_normalize(map) : map;
}

std::string slice_name(const std::filesystem::path& path, std::size_t index,
                       std::set<std::string>& used) {
  std::string name = path.stem().string();
  if (name.empty() || !used.insert(name).second) {
    name = "target_" + std::to_string(index);
    used.insert(name);
  }
  return name;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

ordered_json pixel_json(const std::optional<Pixel>& p) {
  return p ? ordered_json::array({p->row, p->col}) : ordered_json(nullptr);
}

}  // namespace

std::string describe(const PipelineConfig& config) { return describe_json(config).dump(2); }

TemplateSet load_templates(const PipelineConfig& config) {
  if (config.template_features.empty() ||
      config.template_features.size() != config.template_masks.size()) {
    throw Error(ErrorCode::kConfig, "template_masks: expected one mask per template feature map");
  }
  TemplateSet set;
  for (std::size_t t = 0; t < config.template_features.size(); ++t) {
    set.features.push_back(load_features(config.template_features[t], config.normalize));
    set.masks.push_back(read_label_mask(config.template_masks[t]));
    if (!set.masks.back().same_shape(set.features.back())) {
      throw Error(ErrorCode::kDimensionMismatch,
                  config.template_masks[t].string() + ": mask does not match its features");
    }
    if (set.features.back().dim() != set.features.front().dim()) {
      throw Error(ErrorCode::kDimensionMismatch, "templates disagree on feature dim");
    }
    set.label_count = std::max(set.label_count, set.masks.back().label_count());
  }
  if (set.label_count < 1) throw Error(ErrorCode::kEmptyRegion, "templates declare no labels");
  return set;
}

nn::MlpModel fit_classification(const PipelineConfig& config, const TemplateSet& templates) {
  ClassificationSet set;
  set.class_count = templates.label_count + 1;
  for (std::size_t t = 0; t < templates.features.size(); ++t) {
    auto part = sample_classification_set(templates.features[t], templates.masks[t],
                                          derive_seed(config.seed, 10 + t));
    for (auto& e : part.entries) set.entries.push_back(std::move(e));
  }
  return train_classification_adapter(set, config.classification, derive_seed(config.seed, 20));
}

ContrastiveModel fit_contrastive(const PipelineConfig& config, const TemplateSet& templates) {
  PairSet pairs;
  pairs.pair_class_count = templates.label_count + 1;
  for (std::size_t t = 0; t < templates.features.size(); ++t) {
    auto part = sample_contrastive_pairs(templates.features[t], templates.masks[t], config.pairs,
                                         derive_seed(config.seed, 10 + t));
    for (auto& e : part.entries) pairs.entries.push_back(std::move(e));
  }
  return train_contrastive_adapter(pairs, config.contrastive, derive_seed(config.seed, 20));
}

std::vector<ReferenceSet> gather_references(const PipelineConfig& config,
                                            const TemplateSet& templates) {
  std::vector<ReferenceSet> references;
  for (int label = 1; label <= templates.label_count; ++label) {
    ReferenceSet merged;
    merged.label = label;
    for (std::size_t t = 0; t < templates.features.size(); ++t) {
      const LabelMask& mask = templates.masks[t];
      if (label > mask.label_count() || mask.count(label) == 0) continue;
      auto refs = select_reference_pixels(templates.features[t], mask, label, config.references,
                                          derive_seed(config.seed, 100 + t * 256 + label));
      merged.pixels.insert(merged.pixels.end(), refs.pixels.begin(), refs.pixels.end());
      merged.features.insert(merged.features.end(), refs.features.begin(), refs.features.end());
    }
    if (merged.features.empty()) {
      throw Error(ErrorCode::kEmptyRegion, "no template contains label " + std::to_string(label));
    }
    references.push_back(std::move(merged));
  }
  return references;
}

MetricReport evaluate_slices(std::span<const EvaluatedSlice> slices, int label_count,
                             double radius, CaseUnit unit, int connectivity) {
  if (slices.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "evaluation needs at least one slice");
  }
  if (label_count < 1) {
    throw Error(ErrorCode::kInvalidArgument, "evaluation needs at least one label");
  }
  std::map<int, std::vector<double>> ious;
  std::vector<LocalizationCase> cases;
  for (const EvaluatedSlice& slice : slices) {
    if (!slice.truth->same_shape(*slice.prediction)) {
      throw Error(ErrorCode::kDimensionMismatch,
                  slice.name + ": prediction and ground truth sizes differ");
    }
    for (int label = 1; label <= label_count; ++label) {
      ious[label].push_back(iou(*slice.prediction, *slice.truth, label));
      const auto truth_point = landmark_from_mask(*slice.truth, label, connectivity);
      if (truth_point) {
        cases.push_back({landmark_from_mask(*slice.prediction, label, connectivity), *truth_point,
                         label, slice.name, slice.volume});
      }
    }
  }
  MetricReport report;
  report.radius = radius;
  double iou_total = 0.0;
  for (int label = 1; label <= label_count; ++label) {
    LabelMetrics m;
    const auto& values = ious[label];
    double sum = 0.0;
    for (double v : values) sum += v;
    m.iou = sum / static_cast<double>(values.size());
    iou_total += *m.iou;
    std::vector<LocalizationCase> label_cases;
    std::copy_if(cases.begin(), cases.end(), std::back_inserter(label_cases),
                 [label](const LocalizationCase& c) { return c.label == label; });
    m.cases = label_cases.size();
    if (!label_cases.empty()) {
      m.localization_accuracy = localization_accuracy(label_cases, radius, unit);
    }
    report.per_label[label] = m;
  }
  report.aggregate.iou = iou_total / label_count;
  report.aggregate.cases = cases.size();
  if (!cases.empty()) {
    report.aggregate.localization_accuracy = localization_accuracy(cases, radius, unit);
  }
  return report;
}

RunArtifacts run_pipeline(const PipelineConfig& config) {
  config.validate();
  const std::string config_hash =
      config.config_hash.empty() ? stable_hash(describe(config)) : config.config_hash;
  const auto& out = config.output_dir;
  stage("output", [&] {
    std::error_code ec;
    for (const char* sub : {"masks", "prompts", "refined"}) {
      std::filesystem::create_directories(out / sub, ec);
      if (ec) throw Error(ErrorCode::kIo, (out / sub).string() + ": " + ec.message());
    }
  });

  RunArtifacts run;
  auto record = [&](const std::filesystem::path& p) { run.files.push_back(p); };

  const TemplateSet templates = stage("load-templates", [&] { return load_templates(config); });
  const int label_count = templates.label_count;
  const int dim = templates.features.front().dim();

  nn::MlpModel classifier;
  ContrastiveModel contrastive;
  std::vector<ReferenceSet> references;
  if (config.adapter == AdapterKind::kClassification) {
    classifier = stage("train", [&] {
      if (config.model) return nn::read_model(*config.model);
      auto model = fit_classification(config, templates);
      write_model(model, out / "model.pxn");
      record(out / "model.pxn");
      return model;
    });
    if (classifier.input_dim() != dim || classifier.output_dim() != label_count + 1) {
      throw PipelineError("train", Error(ErrorCode::kDimensionMismatch,
                                         "classification model does not match the templates"));
    }
  } else if (config.adapter == AdapterKind::kContrastive) {
    contrastive = stage("train", [&] {
      if (config.model) return read_contrastive_model(*config.model);
      auto model = fit_contrastive(config, templates);
      write_contrastive_model(model, out / "model.pxc");
      record(out / "model.pxc");
      return model;
    });
    references = stage("references", [&] {
      if (contrastive.feature_dim() != dim || contrastive.pair_class_count != label_count + 1) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "contrastive model does not match the templates");
      }
      return gather_references(config, templates);
    });
  }

  std::set<std::string> used_names;
  std::vector<LabelMask> truths;
  ordered_json landmarks_doc;
  landmarks_doc["slices"] = ordered_json::array();

  for (std::size_t s = 0; s < config.target_features.size(); ++s) {
    SliceResult result{slice_name(config.target_features[s], s, used_names),
                       LabelMask(1, 1, 0), std::nullopt, {}, {}};
    const FeatureMap target = stage("load-target", [&] {
      FeatureMap map = load_features(config.target_features[s], config.normalize);
      if (map.dim() != dim) {
        throw Error(ErrorCode::kDimensionMismatch,
                    config.target_features[s].string() + ": feature dim differs from templates");
      }
      return map;
    });

    LabelMask raw = stage("localize", [&] {
      switch (config.adapter) {
        case AdapterKind::kBasic: {
          std::vector<LabelClaim> claims;
          for (int label = 1; label <= label_count; ++label) {
            std::size_t t = 0;
            while (t < templates.masks.size() &&
                   (label > templates.masks[t].label_count() ||
                    templates.masks[t].count(label) == 0)) {
              ++t;
            }
            if (t == templates.masks.size()) {
              throw Error(ErrorCode::kEmptyRegion,
                          "no template contains label " + std::to_string(label));
            }
            auto loc = basic_localize(templates.features[t], templates.masks[t], label, target,
                                      config.threshold, config.reduction);
            claims.push_back({label, std::move(loc.mask), std::move(loc.scores), 0});
          }
          const LabelMask merged = claims.size() == 1 ? claims.front().mask
                                                      : aggregate_binary_multilabel(claims);
          return LabelMask(merged.height(), merged.width(), label_count,
                           std::vector<std::uint8_t>(merged.labels().begin(),
                                                     merged.labels().end()));
        }
        case AdapterKind::kClassification:
          return predict_classification(classifier, target).mask;
        case AdapterKind::kContrastive:
          return contrastive_localize(contrastive, references, target,
                                      {config.background_margin, config.reduction})
              .mask;
      }
      return LabelMask(target.height(), target.width(), label_count);
    });

    result.mask = stage("filter", [&] {
      return filter_components(raw, config.connectivity, config.min_size);
    });
    const auto mask_path = out / "masks" / (result.name + ".pxm");
    stage("write-mask", [&] { write_label_mask(result.mask, mask_path); });
    record(mask_path);

    if (config.task == Task::kSegment) {
      stage("prompt", [&] {
        for (int label = 1; label <= label_count; ++label) {
          if (result.mask.count(label) == 0) continue;
          result.prompts.push_back(select_prompts(result.mask, label, config.prompt_count,
                                                  derive_seed(config.seed, 300 + s * 256 + label)));
        }
      });
      result.refined = stage("refine", [&] {
        const IntensityImage image = read_intensity_image(config.target_intensity[s]);
        if (image.height != target.height() || image.width != target.width()) {
          throw Error(ErrorCode::kDimensionMismatch,
                      config.target_intensity[s].string() + ": intensity size differs from target");
        }
        if (result.prompts.empty()) return LabelMask(image.height, image.width, label_count);
        RefinerRequest request{config.target_intensity[s].generic_string(), image.height,
                               image.width, result.prompts};
        const auto prompt_path = out / "prompts" / (result.name + ".json");
        export_prompts(request, prompt_path);
        record(prompt_path);
        return MockRefiner(config.refine_tolerance).refine(request, image, label_count);
      });
      const auto refined_path = out / "refined" / (result.name + ".pxm");
      stage("write-refined", [&] { write_label_mask(*result.refined, refined_path); });
      record(refined_path);
    }
    const LabelMask& final_mask = result.refined ? *result.refined : result.mask;

    ordered_json slice_doc;
    slice_doc["slice"] = result.name;
    slice_doc["landmarks"] = ordered_json::array();
    for (int label = 1; label <= label_count; ++label) {
      result.landmarks.push_back(landmark_from_mask(final_mask, label, config.connectivity));
      slice_doc["landmarks"].push_back(
          {{"label", label}, {"point", pixel_json(result.landmarks.back())}});
    }
    landmarks_doc["slices"].push_back(slice_doc);

    if (!config.target_masks.empty()) {
      truths.push_back(stage("load-truth", [&] {
        LabelMask truth = read_label_mask(config.target_masks[s]);
        if (!truth.same_shape(final_mask)) {
          throw Error(ErrorCode::kDimensionMismatch,
                      config.target_masks[s].string() + ": ground truth size differs from target");
        }
        return truth;
      }));
    }
    run.slices.push_back(std::move(result));
  }

  const auto landmarks_path = out / "landmarks.json";
  stage("write-landmarks", [&] {
    detail::write_text_file(landmarks_path, landmarks_doc.dump(2) + "\n");
  });
  record(landmarks_path);

  if (!truths.empty()) {
    std::vector<EvaluatedSlice> evaluated;
    for (std::size_t s = 0; s < run.slices.size(); ++s) {
      const SliceResult& r = run.slices[s];
      evaluated.push_back({r.name, config.target_features[s].parent_path().generic_string(),
                           r.refined ? &*r.refined : &r.mask, &truths[s]});
    }
    MetricReport report = stage("metrics", [&] {
      return evaluate_slices(evaluated, label_count, config.radius, config.case_unit,
                             config.connectivity);
    });
    report.task = to_string(config.task);
    report.adapter = to_string(config.adapter);
    report.seeds = {config.seed};
    report.config_hash = config_hash;
    const auto report_path = out / "report.json";
    stage("report", [&] { emit_report(report, report_path); });
    record(report_path);
    auto table = report_path;
    record(table.replace_extension(".txt"));
    run.report = std::move(report);
  }

  ordered_json manifest;
  manifest["tool"] = "pixadapt";
  manifest["command"] = to_string(config.task);
  manifest["config"] = describe_json(config);
  manifest["config_hash"] = config_hash;
  manifest["seeds"] = {{"seed", config.seed}};
  ordered_json artifacts = ordered_json::array();
  for (const auto& p : run.files) {
    artifacts.push_back(std::filesystem::relative(p, out).generic_string());
  }
  manifest["artifacts"] = artifacts;
  manifest["excluded"] = {{"timestamp", utc_timestamp()}};
  run.manifest = out / "manifest.json";
  stage("manifest", [&] { detail::write_text_file(run.manifest, manifest.dump(2) + "\n"); });
  record(run.manifest);
  return run;
}

}  // namespace pixadapt
