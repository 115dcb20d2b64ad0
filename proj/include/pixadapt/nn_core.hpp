#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pixadapt::nn {

enum class Activation : std::uint32_t { kIdentity = 0, kRelu = 1 };

struct LayerSpec {
  int in_dim = 0;
  int out_dim = 0;
  Activation activation = Activation::kIdentity;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// One dense layer: y = act(x W + b) with W stored in_dim x out_dim row-major.
struct Layer {
  LayerSpec spec;
  std::vector<double> weights;
  std::vector<double> biases;

  double& weight(int in, int out) { return weights[static_cast<std::size_t>(in) * spec.out_dim + out]; }
  double weight(int in, int out) const {
    return weights[static_cast<std::size_t>(in) * spec.out_dim + out];
  }

  friend bool operator==(const Layer&, const Layer&) = default;
};

class MlpModel {
 public:
  MlpModel() = default;
  /// Zero-initialised parameters; throws if the specs do not chain.
  explicit MlpModel(std::vector<LayerSpec> specs);

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }
  int input_dim() const { return layers_.front().spec.in_dim; }
  int output_dim() const { return layers_.back().spec.out_dim; }
  std::size_t parameter_count() const;

  friend bool operator==(const MlpModel&, const MlpModel&) = default;

 private:
  std::vector<Layer> layers_;
};

/// Per-layer values recorded by forward(): inputs[i] feeds layer i and
/// outputs[i] is its post-activation result. outputs.back() are the logits.
struct Activations {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> outputs;

  const std::vector<double>& logits() const { return outputs.back(); }
};

/// Same shape as the model parameters; also used for Adam moments.
struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  /// d loss / d input of the first layer. Not accumulated: backward_into()
  /// overwrites it with the gradient of its latest call.
  std::vector<double> input;

  static Gradients zeros_like(const MlpModel& model);
  void add(const Gradients& other);
  void scale(double factor);
};

MlpModel init_model(std::vector<LayerSpec> specs, std::uint64_t seed);

Activations forward(const MlpModel& model, std::span<const double> input);
/// Logits only, skipping the bookkeeping needed for backward(). Evaluation
/// starts at `first_layer`, whose in_dim the input must match.
std::vector<double> predict_logits(const MlpModel& model, std::span<const double> input,
                                   std::size_t first_layer = 0);

std::vector<double> softmax(std::span<const double> logits);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> grad_logits;
};

/// -ln p[target] (log floored at 1e-12) and its gradient p - onehot(target)
/// with respect to the logits that produced `probabilities`.
LossAndGradient cross_entropy(std::span<const double> probabilities, int target_class);

Gradients backward(const MlpModel& model, const Activations& activations,
                   std::span<const double> grad_logits);
/// Adds parameter gradients into `grads` (shaped like `model`).
void backward_into(const MlpModel& model, const Activations& activations,
                   std::span<const double> grad_logits, Gradients& grads);

struct AdamState {
  std::uint64_t step = 0;
  Gradients first_moment;
  Gradients second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-3;

  static AdamState for_model(const MlpModel& model, double learning_rate = 1e-3,
                             double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
};

void adam_step(MlpModel& model, const Gradients& grads, AdamState& state);

/// PXN1 serialization.
void write_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel read_model(const std::filesystem::path& path);

}  // namespace pixadapt::nn
