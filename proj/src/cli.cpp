#include "pixadapt/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <map>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "binary_io.hpp"
#include "pixadapt/synth.hpp"

namespace pixadapt::cli {

namespace {

using nlohmann::ordered_json;
namespace fs = std::filesystem;

const std::map<std::string, Command> kCommands = {
    {"synth", Command::kSynth},   {"train", Command::kTrain}, {"localize", Command::kLocalize},
    {"segment", Command::kSegment}, {"eval", Command::kEval},   {"inspect", Command::kInspect}};

const std::map<std::string, AdapterKind> kAdapters = {
    {"basic", AdapterKind::kBasic},
    {"classification", AdapterKind::kClassification},
    {"contrastive", AdapterKind::kContrastive}};

const std::map<std::string, Reduction> kReductions = {{"mean", Reduction::kMean},
                                                      {"max", Reduction::kMax}};

const std::map<std::string, CaseUnit> kCaseUnits = {{"slice", CaseUnit::kSlice},
                                                    {"volume", CaseUnit::kVolume}};

fs::path default_output_root() {
  const char* root = std::getenv(kOutputRootEnv);
  return (root && *root) ? fs::path(root) : fs::path("pixadapt-runs");
}

void require(bool present, const std::string& key, Command command) {
  if (!present) {
    throw ConfigError(key + ": required by the " + std::string(to_string(command)) + " command");
  }
}

// Drops keys that do not influence results from CLI11's effective-config dump.
std::string effective_text(const CLI::App& app) {
  std::istringstream in(app.config_to_str(true, false));
  std::string line;
  std::string kept;
  while (std::getline(in, line)) {
    if (line.rfind("output=", 0) == 0 || line.rfind("config=", 0) == 0) continue;
    kept += line;
    kept += '\n';
  }
  return kept;
}

ordered_json effective_json(const RunConfig& config) {
  ordered_json j = ordered_json::object();
  std::istringstream in(config.effective);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string value = line.substr(eq + 1);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    j[line.substr(0, eq)] = value;
  }
  return j;
}

void write_manifest(const RunConfig& config, const fs::path& dir,
                    const std::vector<fs::path>& artifacts, ordered_json extra = {}) {
  ordered_json manifest;
  manifest["tool"] = "pixadapt";
  manifest["command"] = to_string(config.command);
  manifest["config"] = effective_json(config);
  manifest["config_hash"] = config.hash;
  manifest["seeds"] = {{"seed", config.pipeline.seed}};
  if (!extra.is_null()) {
    for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
  }
  ordered_json files = ordered_json::array();
  for (const auto& p : artifacts) files.push_back(fs::relative(p, dir).generic_string());
  manifest["artifacts"] = files;
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &tm);
  manifest["excluded"] = {{"timestamp", stamp}};
  detail::write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, dir.string() + ": " + ec.message());
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return (na > 0.0 && nb > 0.0) ? dot / std::sqrt(na * nb) : 0.0;
}

// Cosine between the mean foreground feature and the mean feature of the
// confound cluster, measured over every generated slice.
std::optional<double> measured_confound_cosine(const synth::Scenario& scenario) {
  const int dim = scenario.spec.dim;
  std::vector<double> fg(dim, 0.0), confound(dim, 0.0);
  std::size_t n_fg = 0, n_confound = 0;
  for (const synth::Slice& slice : scenario.slices) {
    for (std::size_t p = 0; p < slice.source.size(); ++p) {
      const auto f = slice.features.at(p);
      const bool is_fg = slice.mask.labels()[p] != 0;
      const bool is_confound = slice.source[p] == synth::kConfoundCluster;
      if (!is_fg && !is_confound) continue;
      auto& acc = is_fg ? fg : confound;
      for (int d = 0; d < dim; ++d) acc[d] += f[d];
      (is_fg ? n_fg : n_confound)++;
    }
  }
  if (n_fg == 0 || n_confound == 0) return std::nullopt;
  return cosine(fg, confound);
}

int run_synth(const RunConfig& config, std::ostream& out) {
  const auto& p = config.pipeline;
  synth::ScenarioSpec spec;
  if (config.scenario == "separable") {
    spec = synth::separable_spec(p.seed);
  } else if (config.scenario == "confound") {
    spec = synth::confound_spec(p.seed);
  } else {
    spec = synth::spec_from_json(detail::read_text_file(config.scenario));
    spec.seed = p.seed;
  }
  if (config.background_only) {
    const int n = config.slice_count > 0 ? config.slice_count
                                         : static_cast<int>(spec.slices.size());
    spec = synth::background_only(spec, n, p.seed);
  }
  const synth::Scenario scenario = synth::generate_scenario(spec);
  ensure_dir(p.output_dir);
  const auto files = synth::write_scenario(scenario, p.output_dir);

  ordered_json extra;
  ordered_json construction = ordered_json::parse(synth::spec_to_json(spec));
  extra["scenario"] = spec.name;
  extra["construction"] = construction;
  if (const auto c = measured_confound_cosine(scenario);
      c && config.scenario == "confound") {
    extra["measured"] = {{"confound_cosine", *c}};
  }
  write_manifest(config, p.output_dir, files, extra);
  out << "synth: wrote " << scenario.slices.size() << " slices of '" << spec.name << "' to "
      << p.output_dir.generic_string() << "\n";
  return kExitOk;
}

int run_train(const RunConfig& config, std::ostream& out) {
  const auto& p = config.pipeline;
  if (p.adapter == AdapterKind::kBasic) {
    throw ConfigError("adapter: the basic adapter has no trainable parameters");
  }
  ensure_dir(p.output_dir);
  const TemplateSet templates = load_templates(p);
  fs::path model_path;
  if (p.adapter == AdapterKind::kClassification) {
    model_path = p.output_dir / "model.pxn";
    nn::write_model(fit_classification(p, templates), model_path);
  } else {
    model_path = p.output_dir / "model.pxc";
    write_contrastive_model(fit_contrastive(p, templates), model_path);
  }
  write_manifest(config, p.output_dir, {model_path});
  out << "train: wrote " << model_path.generic_string() << "\n";
  return kExitOk;
}

int run_localize(const RunConfig& config, std::ostream& out) {
  PipelineConfig p = config.pipeline;
  p.config_hash = config.hash;
  ensure_dir(p.output_dir);
  const RunArtifacts run = run_pipeline(p);
  out << to_string(p.task) << ": " << run.slices.size() << " slices, artifacts in "
      << p.output_dir.generic_string() << "\n";
  if (run.report) out << format_report_table(*run.report);
  return kExitOk;
}

int run_eval(const RunConfig& config, std::ostream& out) {
  const auto& p = config.pipeline;
  if (config.predictions.size() != p.target_masks.size()) {
    throw ConfigError("ground_truth: expected one mask per prediction");
  }
  std::vector<LabelMask> predictions;
  std::vector<LabelMask> truths;
  int label_count = 0;
  for (std::size_t i = 0; i < config.predictions.size(); ++i) {
    predictions.push_back(read_label_mask(config.predictions[i]));
    truths.push_back(read_label_mask(p.target_masks[i]));
    label_count = std::max(label_count, truths.back().label_count());
  }
  if (label_count < 1) throw Error(ErrorCode::kEmptyRegion, "ground truth declares no labels");
  std::vector<EvaluatedSlice> slices;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    slices.push_back({config.predictions[i].stem().string(),
                      p.target_masks[i].parent_path().generic_string(), &predictions[i],
                      &truths[i]});
  }
  MetricReport report = evaluate_slices(slices, label_count, p.radius, p.case_unit, p.connectivity);
  report.task = "eval";
  report.adapter = config.adapter_name;
  report.seeds = {p.seed};
  report.config_hash = config.hash;
  ensure_dir(p.output_dir);
  const fs::path report_path = p.output_dir / "report.json";
  emit_report(report, report_path);
  write_manifest(config, p.output_dir, {report_path, p.output_dir / "report.txt"});
  out << format_report_table(report);
  return kExitOk;
}

std::string layer_text(const nn::MlpModel& model) {
  std::string text;
  for (const nn::Layer& layer : model.layers()) {
    if (!text.empty()) text += ", ";
    text += std::to_string(layer.spec.in_dim) + "->" + std::to_string(layer.spec.out_dim) +
            (layer.spec.activation == nn::Activation::kRelu ? " relu" : " identity");
  }
  return text;
}

void inspect_file(const fs::path& path, std::ostream& out) {
  const std::vector<char> bytes = detail::read_file_bytes(path);
  const std::string magic(bytes.begin(), bytes.begin() + std::min<std::size_t>(4, bytes.size()));
  const std::string name = path.generic_string();
  if (magic == "PXF1") {
    const FeatureMap map = read_feature_map(path);
    out << name << ": PXF1 height=" << map.height() << " width=" << map.width()
        << " dim=" << map.dim() << "\n";
  } else if (magic == "PXM1") {
    const LabelMask mask = read_label_mask(path);
    out << name << ": PXM1 height=" << mask.height() << " width=" << mask.width()
        << " label_count=" << mask.label_count();
    for (int l = 1; l <= mask.label_count(); ++l) out << " count[" << l << "]=" << mask.count(l);
    out << "\n";
  } else if (magic == "PXN1") {
    const nn::MlpModel model = nn::read_model(path);
    out << name << ": PXN1 layers=" << model.layers().size() << " [" << layer_text(model)
        << "] parameters=" << model.parameter_count() << "\n";
  } else if (magic == "PXC1") {
    const ContrastiveModel model = read_contrastive_model(path);
    out << name << ": PXC1 pair_class_count=" << model.pair_class_count << " twin=["
        << layer_text(model.twin) << "] head=[" << layer_text(model.head) << "]\n";
  } else {
    throw Error(ErrorCode::kBadMagic, name + ": unrecognised file magic");
  }
}

}  // namespace

const char* to_string(Command command) {
  for (const auto& [name, value] : kCommands) {
    if (value == command) return name.c_str();
  }
  return "localize";
}

std::optional<RunConfig> parse_config(const std::vector<std::string>& args, std::ostream& out) {
  RunConfig config;
  PipelineConfig& p = config.pipeline;

  CLI::App app{"Few-shot pixel-feature localization and segmentation", "pixadapt"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "key=value configuration file; flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);

  std::string command;
  app.add_option("command", command, "synth | train | localize | segment | eval | inspect")
      ->required()
      ->check(CLI::IsMember(kCommands));
  app.add_option("inputs", config.inputs, "Files to describe (inspect)");

  app.add_option("--adapter", config.adapter_name, "Adapter: basic, classification, contrastive")
      ->check(CLI::IsMember(kAdapters));
  app.add_option("--templates", p.template_features, "Template feature maps (PXF1)");
  app.add_option("--template_masks", p.template_masks, "Template label masks (PXM1)");
  app.add_option("--targets", p.target_features, "Target feature maps (PXF1)");
  app.add_option("--ground_truth", p.target_masks, "Ground-truth masks (PXM1)");
  app.add_option("--intensity", p.target_intensity, "Target intensity images (segment)");
  app.add_option("--predictions", config.predictions, "Predicted masks to evaluate (eval)");
  std::string model;
  app.add_option("--model", model, "Trained model file; skips training when set");
  std::string output;
  app.add_option("--output", output,
                 std::string("Output directory (default: $") + kOutputRootEnv + "/<command>)");

  app.add_option("--scenario", config.scenario, "synth: separable, confound, or a spec JSON path");
  app.add_flag("--background_only", config.background_only,
               "synth: emit background-only slices");
  app.add_option("--slices", config.slice_count, "synth: slice count for --background_only")
      ->check(CLI::NonNegativeNumber);

  app.add_flag("--normalize", p.normalize, "L2-normalise pixel features on load");
  app.add_option("--threshold", p.threshold, "Basic adapter cosine threshold")
      ->check(CLI::Range(-1.0, 1.0));
  std::string reduction = "mean";
  app.add_option("--reduction", reduction, "Multi-reference reduction: mean or max")
      ->check(CLI::IsMember(kReductions));
  app.add_option("--pairs_per_label", p.pairs.pairs_per_label, "Positive and negative pairs per label")
      ->check(CLI::PositiveNumber);
  app.add_option("--min_negative_offset", p.pairs.min_negative_offset,
                 "Minimum Chebyshev distance of negatives from the region")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--references", p.references, "Reference pixels per label per template")
      ->check(CLI::PositiveNumber);
  app.add_option("--background_margin", p.background_margin,
                 "Margin a label score must beat the no-match score by");

  int epochs = p.contrastive.training.epochs;
  int batch_size = p.contrastive.training.batch_size;
  double learning_rate = p.contrastive.training.learning_rate;
  app.add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
  app.add_option("--batch_size", batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  app.add_option("--learning_rate", learning_rate, "Adam learning rate")
      ->check(CLI::PositiveNumber);
  app.add_option("--hidden_widths", p.classification.hidden_widths,
                 "Classification adapter hidden widths")
      ->check(CLI::PositiveNumber);
  app.add_option("--twin_hidden", p.contrastive.twin_hidden, "Twin hidden width")
      ->check(CLI::PositiveNumber);
  app.add_option("--embedding_dim", p.contrastive.embedding_dim, "Twin embedding width")
      ->check(CLI::PositiveNumber);
  app.add_option("--head_hidden", p.contrastive.head_hidden, "Pair head hidden width")
      ->check(CLI::PositiveNumber);

  app.add_option("--connectivity", p.connectivity, "Component connectivity: 4 or 8")
      ->check(CLI::IsMember({4, 8}));
  app.add_option("--min_size", p.min_size, "Smallest component kept by filtering")
      ->check(CLI::PositiveNumber);
  app.add_option("--prompts", p.prompt_count, "Prompt points per label")
      ->check(CLI::PositiveNumber);
  app.add_option("--refine_tolerance", p.refine_tolerance, "Mock refiner intensity tolerance")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--radius", p.radius, "Localization accuracy radius (pixels, strict)")
      ->check(CLI::PositiveNumber);
  std::string case_unit = "slice";
  app.add_option("--case_unit", case_unit, "Localization case unit: slice or volume")
      ->check(CLI::IsMember(kCaseUnits));
  app.add_option("--seed", p.seed, "Seed from which all randomness derives");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return std::nullopt;
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }

  config.command = kCommands.at(command);
  p.adapter = kAdapters.at(config.adapter_name);
  p.reduction = kReductions.at(reduction);
  p.case_unit = kCaseUnits.at(case_unit);
  for (TrainingOptions* t : {&p.classification.training, &p.contrastive.training}) {
    t->epochs = epochs;
    t->batch_size = batch_size;
    t->learning_rate = learning_rate;
  }
  if (!model.empty()) p.model = model;
  p.output_dir = output.empty() ? default_output_root() / command : fs::path(output);
  p.task = config.command == Command::kSegment ? Task::kSegment : Task::kLocalize;

  switch (config.command) {
    case Command::kSynth:
      break;
    case Command::kTrain:
      require(!p.template_features.empty(), "templates", config.command);
      require(!p.template_masks.empty(), "template_masks", config.command);
      break;
    case Command::kLocalize:
    case Command::kSegment:
      require(!p.template_features.empty(), "templates", config.command);
      require(!p.template_masks.empty(), "template_masks", config.command);
      require(!p.target_features.empty(), "targets", config.command);
      if (config.command == Command::kSegment) {
        require(!p.target_intensity.empty(), "intensity", config.command);
      }
      break;
    case Command::kEval:
      require(!config.predictions.empty(), "predictions", config.command);
      require(!p.target_masks.empty(), "ground_truth", config.command);
      break;
    case Command::kInspect:
      require(!config.inputs.empty(), "inputs", config.command);
      break;
  }
  if (config.command == Command::kTrain || config.command == Command::kLocalize ||
      config.command == Command::kSegment) {
    if (p.template_features.size() != p.template_masks.size()) {
      throw ConfigError("template_masks: expected one mask per template");
    }
  }

  config.effective = effective_text(app);
  config.hash = stable_hash(config.effective);
  return config;
}

int dispatch(const RunConfig& config, std::ostream& out, std::ostream& err) {
  (void)err;
  switch (config.command) {
    case Command::kSynth: return run_synth(config, out);
    case Command::kTrain: return run_train(config, out);
    case Command::kLocalize:
    case Command::kSegment: return run_localize(config, out);
    case Command::kEval: return run_eval(config, out);
    case Command::kInspect:
      for (const auto& path : config.inputs) inspect_file(path, out);
      return kExitOk;
  }
  return kExitOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    const auto config = parse_config(args, out);
    if (!config) return kExitOk;
    return dispatch(*config, out, err);
  } catch (const Error& e) {
    err << "pixadapt: " << e.what() << "\n";
    if (e.code() == ErrorCode::kConfig) return kExitConfig;
    return is_data_error(e.code()) ? kExitData : kExitPipeline;
  } catch (const std::exception& e) {
    err << "pixadapt: " << e.what() << "\n";
    return kExitPipeline;
  }
}

}  // namespace pixadapt::cli
