#include "pixadapt/adapters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include "model_codec.hpp"
#include "pixadapt/error.hpp"

namespace pixadapt {

namespace {

constexpr std::string_view kContrastiveMagic = "PXC1";

std::vector<double> widen(std::span<const float> v) { return {v.begin(), v.end()}; }

double dot(std::span<const double> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const float> v) {
  double s = 0.0;
  for (float x : v) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

std::vector<double> unit(std::span<const float> v) {
  std::vector<double> out(v.begin(), v.end());
  const double n = norm(v);
  if (n > 0.0) {
    for (double& x : out) x /= n;
  } else {
    std::fill(out.begin(), out.end(), 0.0);
  }
  return out;
}

void require_dim(int expected, int actual, const char* what) {
  if (expected != actual) {
    throw Error(ErrorCode::kDimensionMismatch, std::string(what) + ": feature dim " +
                                                   std::to_string(actual) + " != expected " +
                                                   std::to_string(expected));
  }
}

void validate_training(const TrainingOptions& t) {
  if (t.epochs < 1 || t.batch_size < 1) {
    throw Error(ErrorCode::kInvalidArgument, "epochs and batch_size must be >= 1");
  }
}

/// Shuffled mini-batch driver shared by both learned adapters. `step`
/// receives the example indices of one batch.
template <typename Step>
void run_minibatches(std::size_t example_count, const TrainingOptions& options,
                     std::uint64_t seed, Step&& step) {
  std::vector<std::size_t> order(example_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  const auto batch = static_cast<std::size_t>(options.batch_size);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      step(std::span<const std::size_t>(order.data() + start, end - start));
    }
  }
}

std::size_t argmax_lowest(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

// ---------------------------------------------------------------------------
// Basic adapter
// ---------------------------------------------------------------------------

ScoreMap basic_similarity(const FeatureMap& template_feats, const LabelMask& template_mask,
                          int label, const FeatureMap& target_feats, Reduction reduction) {
  require_dim(template_feats.dim(), target_feats.dim(), "basic adapter target");
  const auto region = foreground_pixels(template_mask, label);
  if (!template_mask.same_shape(template_feats)) {
    throw Error(ErrorCode::kDimensionMismatch, "template mask does not match template features");
  }
  if (region.empty()) {
    throw Error(ErrorCode::kEmptyRegion,
                "template label " + std::to_string(label) + " has no pixels");
  }
  const int dim = target_feats.dim();
  std::vector<std::vector<double>> refs;
  refs.reserve(region.size());
  for (const Pixel& p : region) refs.push_back(unit(template_feats.at(p)));

  if (reduction == Reduction::kMean) {
    std::vector<double> mean(static_cast<std::size_t>(dim), 0.0);
    for (const auto& r : refs) {
      for (int k = 0; k < dim; ++k) mean[k] += r[k];
    }
    for (double& v : mean) v /= static_cast<double>(refs.size());
    refs.assign(1, std::move(mean));
  }
  std::vector<double> ref_norms;
  for (const auto& r : refs) {
    double s = 0.0;
    for (double v : r) s += v * v;
    ref_norms.push_back(std::sqrt(s));
  }

  ScoreMap scores(target_feats.height(), target_feats.width(), 1);
  for (std::size_t i = 0; i < target_feats.pixel_count(); ++i) {
    const auto t = target_feats.at(i);
    const double tn = norm(t);
    double best = -1.0;
    for (std::size_t r = 0; r < refs.size(); ++r) {
      double sim = 0.0;
      if (tn > 0.0 && ref_norms[r] > 0.0) {
        sim = std::clamp(dot(refs[r], t) / (ref_norms[r] * tn), -1.0, 1.0);
      }
      best = std::max(best, sim);
    }
    scores.at(i, 0) = best;
  }
  return scores;
}

Localization basic_localize(const FeatureMap& template_feats, const LabelMask& template_mask,
                            int label, const FeatureMap& target_feats, double threshold,
                            Reduction reduction) {
  if (!(threshold >= -1.0 && threshold <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "basic adapter threshold must lie in [-1, 1]");
  }
  ScoreMap scores =
      basic_similarity(template_feats, template_mask, label, target_feats, reduction);
  std::vector<std::uint8_t> labels(target_feats.pixel_count(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = scores.at(i, 0) >= threshold ? 1 : 0;
  }
  return {LabelMask(target_feats.height(), target_feats.width(), 1, std::move(labels)),
          std::move(scores)};
}

// ---------------------------------------------------------------------------
// Classification adapter
// ---------------------------------------------------------------------------

nn::MlpModel train_classification_adapter(const ClassificationSet& set,
                                          const ClassificationOptions& options,
                                          std::uint64_t seed) {
  if (set.entries.empty()) {
    throw Error(ErrorCode::kInsufficientData, "classification set is empty");
  }
  if (set.class_count < 2) {
    throw Error(ErrorCode::kInvalidArgument, "classification needs at least two classes");
  }
  validate_training(options.training);
  for (int c = 0; c < set.class_count; ++c) {
    if (set.count(c) == 0) {
      throw Error(ErrorCode::kInsufficientData,
                  "class " + std::to_string(c) + " has no training examples");
    }
  }
  const int dim = static_cast<int>(set.entries.front().feature.size());
  std::vector<std::vector<double>> inputs;
  inputs.reserve(set.entries.size());
  for (const auto& e : set.entries) {
    require_dim(dim, static_cast<int>(e.feature.size()), "classification set entry");
    if (e.label < 0 || e.label >= set.class_count) {
      throw Error(ErrorCode::kLabelOutOfRange, "classification entry label out of range");
    }
    inputs.push_back(widen(e.feature));
  }

  std::vector<nn::LayerSpec> specs;
  int width = dim;
  for (int hidden : options.hidden_widths) {
    specs.push_back({width, hidden, nn::Activation::kRelu});
    width = hidden;
  }
  specs.push_back({width, set.class_count, nn::Activation::kIdentity});

  nn::MlpModel model = nn::init_model(std::move(specs), derive_seed(seed, 1));
  const auto& t = options.training;
  nn::AdamState adam =
      nn::AdamState::for_model(model, t.learning_rate, t.beta1, t.beta2, t.epsilon);
  nn::Gradients grads = nn::Gradients::zeros_like(model);

  run_minibatches(inputs.size(), t, derive_seed(seed, 2), [&](std::span<const std::size_t> batch) {
    grads = nn::Gradients::zeros_like(model);
    for (std::size_t idx : batch) {
      const auto acts = nn::forward(model, inputs[idx]);
      const auto probs = nn::softmax(acts.logits());
      const auto ce = nn::cross_entropy(probs, set.entries[idx].label);
      nn::backward_into(model, acts, ce.grad_logits, grads);
    }
    grads.scale(1.0 / static_cast<double>(batch.size()));
    nn::adam_step(model, grads, adam);
  });
  return model;
}

Localization predict_classification(const nn::MlpModel& model, const FeatureMap& target_feats) {
  require_dim(model.input_dim(), target_feats.dim(), "classification target");
  const int classes = model.output_dim();
  if (classes < 2 || classes > 256) {
    throw Error(ErrorCode::kInvalidArgument, "classification model must have 2..256 outputs");
  }
  ScoreMap scores(target_feats.height(), target_feats.width(), classes);
  std::vector<std::uint8_t> labels(target_feats.pixel_count(), 0);
  for (std::size_t i = 0; i < target_feats.pixel_count(); ++i) {
    const auto probs = nn::softmax(nn::predict_logits(model, widen(target_feats.at(i))));
    std::copy(probs.begin(), probs.end(), scores.at(i).begin());
    labels[i] = static_cast<std::uint8_t>(argmax_lowest(probs));
  }
  return {LabelMask(target_feats.height(), target_feats.width(), classes - 1, std::move(labels)),
          std::move(scores)};
}

// ---------------------------------------------------------------------------
// Contrastive adapter
// ---------------------------------------------------------------------------

void ContrastiveModel::validate() const {
  if (twin.layers().empty() || head.layers().empty()) {
    throw Error(ErrorCode::kInvalidArgument, "contrastive model is missing a network");
  }
  if (head.input_dim() != 2 * twin.output_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "head input " + std::to_string(head.input_dim()) +
                    " != 2 x twin embedding " + std::to_string(twin.output_dim()));
  }
  if (pair_class_count < 2 || head.output_dim() != pair_class_count) {
    throw Error(ErrorCode::kInvalidArgument,
                "head output must equal pair_class_count (>= 2)");
  }
}

namespace {

/// The head's first layer acts on concat(reference, target), so its
/// pre-activation splits into a reference half (with the bias) and a target
/// half. Inference computes each half once per pixel or reference and only
/// combines them per pair.
class SplitHead {
 public:
  explicit SplitHead(const ContrastiveModel& model)
      : model_(model), first_(model.head.layers().front()),
        embed_dim_(model.twin.output_dim()) {}

  std::vector<double> reference_part(std::span<const double> embedding) const {
    std::vector<double> out(first_.biases.begin(), first_.biases.end());
    accumulate(embedding, 0, out);
    return out;
  }

  std::vector<double> target_part(std::span<const double> embedding) const {
    std::vector<double> out(first_.biases.size(), 0.0);
    accumulate(embedding, embed_dim_, out);
    return out;
  }

  std::vector<double> probabilities(std::span<const double> ref_part,
                                    std::span<const double> tgt_part,
                                    std::vector<double>& scratch) const {
    scratch.resize(ref_part.size());
    const bool relu = first_.spec.activation == nn::Activation::kRelu;
    for (std::size_t j = 0; j < ref_part.size(); ++j) {
      const double v = ref_part[j] + tgt_part[j];
      scratch[j] = relu && !(v > 0.0) ? 0.0 : v;
    }
    if (model_.head.layers().size() == 1) return nn::softmax(scratch);
    return nn::softmax(nn::predict_logits(model_.head, scratch, 1));
  }

 private:
  void accumulate(std::span<const double> embedding, int row_offset,
                  std::vector<double>& out) const {
    const int cols = first_.spec.out_dim;
    for (int i = 0; i < embed_dim_; ++i) {
      const double x = embedding[i];
      const double* row = first_.weights.data() + static_cast<std::size_t>(i + row_offset) * cols;
      for (int j = 0; j < cols; ++j) out[j] += x * row[j];
    }
  }

  const ContrastiveModel& model_;
  const nn::Layer& first_;
  int embed_dim_;
};

}  // namespace

ContrastiveModel train_contrastive_adapter(const PairSet& pairs, const ContrastiveOptions& options,
                                           std::uint64_t seed) {
  if (pairs.entries.empty()) {
    throw Error(ErrorCode::kInsufficientData, "pair set is empty");
  }
  if (pairs.pair_class_count < 2) {
    throw Error(ErrorCode::kInvalidArgument, "pair set needs at least two pair classes");
  }
  validate_training(options.training);
  for (int c = 0; c < pairs.pair_class_count; ++c) {
    if (pairs.count(c) == 0) {
      throw Error(ErrorCode::kInsufficientData,
                  "pair class " + std::to_string(c) + " has no training pairs");
    }
  }
  const int dim = static_cast<int>(pairs.entries.front().feature_a.size());
  std::vector<std::vector<double>> a_inputs;
  std::vector<std::vector<double>> b_inputs;
  for (const auto& e : pairs.entries) {
    require_dim(dim, static_cast<int>(e.feature_a.size()), "pair reference");
    require_dim(dim, static_cast<int>(e.feature_b.size()), "pair target");
    if (e.pair_class < 0 || e.pair_class >= pairs.pair_class_count) {
      throw Error(ErrorCode::kLabelOutOfRange, "pair class out of range");
    }
    a_inputs.push_back(widen(e.feature_a));
    b_inputs.push_back(widen(e.feature_b));
  }

  ContrastiveModel model;
  model.pair_class_count = pairs.pair_class_count;
  const int emb = options.embedding_dim;
  model.twin = nn::init_model({{dim, options.twin_hidden, nn::Activation::kRelu},
                               {options.twin_hidden, emb, nn::Activation::kIdentity}},
                              derive_seed(seed, 1));
  model.head = nn::init_model({{2 * emb, options.head_hidden, nn::Activation::kRelu},
                               {options.head_hidden, pairs.pair_class_count,
                                nn::Activation::kIdentity}},
                              derive_seed(seed, 2));

  const auto& t = options.training;
  auto twin_adam = nn::AdamState::for_model(model.twin, t.learning_rate, t.beta1, t.beta2,
                                            t.epsilon);
  auto head_adam = nn::AdamState::for_model(model.head, t.learning_rate, t.beta1, t.beta2,
                                            t.epsilon);
  nn::Gradients twin_grads;
  nn::Gradients head_grads;
  std::vector<double> joined(static_cast<std::size_t>(2 * emb));

  run_minibatches(pairs.entries.size(), t, derive_seed(seed, 3),
                  [&](std::span<const std::size_t> batch) {
    twin_grads = nn::Gradients::zeros_like(model.twin);
    head_grads = nn::Gradients::zeros_like(model.head);
    for (std::size_t idx : batch) {
      // Both branches run through the same twin parameters.
      const auto acts_a = nn::forward(model.twin, a_inputs[idx]);
      const auto acts_b = nn::forward(model.twin, b_inputs[idx]);
      std::copy(acts_a.logits().begin(), acts_a.logits().end(), joined.begin());
      std::copy(acts_b.logits().begin(), acts_b.logits().end(), joined.begin() + emb);
      const auto head_acts = nn::forward(model.head, joined);
      const auto probs = nn::softmax(head_acts.logits());
      const auto ce = nn::cross_entropy(probs, pairs.entries[idx].pair_class);
      nn::backward_into(model.head, head_acts, ce.grad_logits, head_grads);
      const std::span<const double> grad_joined(head_grads.input);
      nn::backward_into(model.twin, acts_a, grad_joined.first(emb), twin_grads);
      nn::backward_into(model.twin, acts_b, grad_joined.subspan(emb), twin_grads);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    twin_grads.scale(inv);
    head_grads.scale(inv);
    nn::adam_step(model.twin, twin_grads, twin_adam);
    nn::adam_step(model.head, head_grads, head_adam);
  });
  return model;
}

std::vector<double> embed(const ContrastiveModel& model, std::span<const float> feature) {
  require_dim(model.feature_dim(), static_cast<int>(feature.size()), "embedding input");
  return nn::predict_logits(model.twin, widen(feature));
}

std::vector<double> pair_score(const ContrastiveModel& model, std::span<const float> reference,
                               std::span<const float> target) {
  model.validate();
  const SplitHead head(model);
  std::vector<double> scratch;
  return head.probabilities(head.reference_part(embed(model, reference)),
                            head.target_part(embed(model, target)), scratch);
}

Localization contrastive_localize(const ContrastiveModel& model,
                                  std::span<const ReferenceSet> references,
                                  const FeatureMap& target_feats,
                                  const ContrastiveLocalizeOptions& options) {
  model.validate();
  require_dim(model.feature_dim(), target_feats.dim(), "contrastive target");
  if (references.empty()) {
    throw Error(ErrorCode::kEmptyRegion, "contrastive localization needs references");
  }
  const int classes = model.pair_class_count;
  std::set<int> seen;
  std::size_t total_refs = 0;
  for (const ReferenceSet& refs : references) {
    if (refs.label < 1 || refs.label >= classes) {
      throw Error(ErrorCode::kLabelOutOfRange,
                  "reference label " + std::to_string(refs.label) + " outside [1, " +
                      std::to_string(classes - 1) + "]");
    }
    if (!seen.insert(refs.label).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "duplicate reference set for label " + std::to_string(refs.label));
    }
    if (refs.features.empty()) {
      throw Error(ErrorCode::kEmptyRegion,
                  "label " + std::to_string(refs.label) + " has no reference pixels");
    }
    total_refs += refs.features.size();
  }

  const SplitHead head(model);
  std::vector<std::vector<std::vector<double>>> ref_parts(references.size());
  for (std::size_t s = 0; s < references.size(); ++s) {
    for (const auto& feature : references[s].features) {
      ref_parts[s].push_back(head.reference_part(embed(model, feature)));
    }
  }

  ScoreMap scores(target_feats.height(), target_feats.width(), classes);
  std::vector<std::uint8_t> labels(target_feats.pixel_count(), 0);
  std::vector<double> scratch;
  std::vector<double> label_score(static_cast<std::size_t>(classes));
  const double inv_total = 1.0 / static_cast<double>(total_refs);

  for (std::size_t i = 0; i < target_feats.pixel_count(); ++i) {
    const auto tgt_part = head.target_part(embed(model, target_feats.at(i)));
    auto row = scores.at(i);
    std::fill(label_score.begin(), label_score.end(), 0.0);
    for (std::size_t s = 0; s < references.size(); ++s) {
      const int label = references[s].label;
      double reduced = options.reduction == Reduction::kMax ? -1.0 : 0.0;
      for (const auto& ref_part : ref_parts[s]) {
        const auto probs = head.probabilities(ref_part, tgt_part, scratch);
        for (int c = 0; c < classes; ++c) row[c] += probs[c] * inv_total;
        if (options.reduction == Reduction::kMax) {
          reduced = std::max(reduced, probs[label]);
        } else {
          reduced += probs[label];
        }
      }
      if (options.reduction == Reduction::kMean) {
        reduced /= static_cast<double>(ref_parts[s].size());
      }
      label_score[label] = reduced;
    }
    int best = 0;
    double best_score = -1.0;
    for (int c = 1; c < classes; ++c) {
      if (seen.count(c) && label_score[c] > best_score) {
        best = c;
        best_score = label_score[c];
      }
    }
    labels[i] = best_score > row[0] + options.background_margin ? static_cast<std::uint8_t>(best)
                                                                 : 0;
  }
  return {LabelMask(target_feats.height(), target_feats.width(), classes - 1, std::move(labels)),
          std::move(scores)};
}

void write_contrastive_model(const ContrastiveModel& model, const std::filesystem::path& path) {
  model.validate();
  detail::ByteWriter writer;
  writer.magic(kContrastiveMagic);
  writer.put(static_cast<std::uint32_t>(model.pair_class_count));
  nn::detail::encode_model(writer, model.twin);
  nn::detail::encode_model(writer, model.head);
  detail::write_file_bytes(path, writer.bytes());
}

ContrastiveModel read_contrastive_model(const std::filesystem::path& path) {
  detail::ByteReader reader(detail::read_file_bytes(path), path.string());
  reader.expect_magic(kContrastiveMagic);
  ContrastiveModel model;
  model.pair_class_count = static_cast<int>(reader.get<std::uint32_t>());
  model.twin = nn::detail::decode_model(reader);
  model.head = nn::detail::decode_model(reader);
  reader.expect_end();
  try {
    model.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kMalformed, path.string() + ": " + e.what());
  }
  return model;
}

}  // namespace pixadapt
