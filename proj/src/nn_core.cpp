#include "pixadapt/nn_core.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "model_codec.hpp"
#include "pixadapt/error.hpp"

namespace pixadapt::nn {

namespace {

constexpr std::string_view kModelMagic = "PXN1";
constexpr double kLogFloor = 1e-12;

void check_chain(const std::vector<LayerSpec>& specs) {
  if (specs.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "model needs at least one layer");
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].in_dim < 1 || specs[i].out_dim < 1) {
      throw Error(ErrorCode::kInvalidArgument,
                  "layer " + std::to_string(i) + " has a non-positive dimension");
    }
    if (specs[i].activation != Activation::kIdentity && specs[i].activation != Activation::kRelu) {
      throw Error(ErrorCode::kInvalidArgument, "layer " + std::to_string(i) +
                                                   " has an unknown activation code");
    }
    if (i > 0 && specs[i - 1].out_dim != specs[i].in_dim) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "layer " + std::to_string(i - 1) + " outputs " +
                      std::to_string(specs[i - 1].out_dim) + " but layer " + std::to_string(i) +
                      " expects " + std::to_string(specs[i].in_dim));
    }
  }
}

void dense(const Layer& layer, std::span<const double> x, std::vector<double>& y) {
  const int out = layer.spec.out_dim;
  y.assign(layer.biases.begin(), layer.biases.end());
  const double* w = layer.weights.data();
  for (int i = 0; i < layer.spec.in_dim; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* row = w + static_cast<std::size_t>(i) * out;
    for (int j = 0; j < out; ++j) {
      y[j] += xi * row[j];
    }
  }
  if (layer.spec.activation == Activation::kRelu) {
    for (double& v : y) v = v > 0.0 ? v : 0.0;
  }
}

void check_input(const MlpModel& model, std::span<const double> input) {
  if (model.layers().empty()) {
    throw Error(ErrorCode::kInvalidArgument, "model has no layers");
  }
  if (static_cast<int>(input.size()) != model.input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "input length " + std::to_string(input.size()) + " != model input dim " +
                    std::to_string(model.input_dim()));
  }
  for (double v : input) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kNonFinite, "model input contains a non-finite value");
    }
  }
}

}  // namespace

MlpModel::MlpModel(std::vector<LayerSpec> specs) {
  check_chain(specs);
  layers_.reserve(specs.size());
  for (const LayerSpec& spec : specs) {
    Layer layer;
    layer.spec = spec;
    layer.weights.assign(static_cast<std::size_t>(spec.in_dim) * spec.out_dim, 0.0);
    layer.biases.assign(static_cast<std::size_t>(spec.out_dim), 0.0);
    layers_.push_back(std::move(layer));
  }
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& layer : layers_) n += layer.weights.size() + layer.biases.size();
  return n;
}

Gradients Gradients::zeros_like(const MlpModel& model) {
  Gradients g;
  for (const Layer& layer : model.layers()) {
    g.weights.emplace_back(layer.weights.size(), 0.0);
    g.biases.emplace_back(layer.biases.size(), 0.0);
  }
  if (!model.layers().empty()) g.input.assign(static_cast<std::size_t>(model.input_dim()), 0.0);
  return g;
}

void Gradients::add(const Gradients& other) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    for (std::size_t i = 0; i < weights[l].size(); ++i) weights[l][i] += other.weights[l][i];
    for (std::size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += other.biases[l][i];
  }
}

void Gradients::scale(double factor) {
  for (auto& w : weights) for (double& v : w) v *= factor;
  for (auto& b : biases) for (double& v : b) v *= factor;
  for (double& v : input) v *= factor;
}

MlpModel init_model(std::vector<LayerSpec> specs, std::uint64_t seed) {
  MlpModel model(std::move(specs));
  std::mt19937_64 rng(seed);
  for (Layer& layer : model.layers()) {
    const double bound = std::sqrt(6.0 / (layer.spec.in_dim + layer.spec.out_dim));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : layer.weights) w = dist(rng);
  }
  return model;
}

Activations forward(const MlpModel& model, std::span<const double> input) {
  check_input(model, input);
  Activations acts;
  const auto& layers = model.layers();
  acts.inputs.reserve(layers.size());
  acts.outputs.resize(layers.size());
  std::vector<double> current(input.begin(), input.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    acts.inputs.push_back(current);
    dense(layers[l], current, acts.outputs[l]);
    current = acts.outputs[l];
  }
  return acts;
}

std::vector<double> predict_logits(const MlpModel& model, std::span<const double> input,
                                   std::size_t first_layer) {
  const auto& layers = model.layers();
  if (first_layer == 0) {
    check_input(model, input);
  } else if (first_layer >= layers.size() ||
             static_cast<int>(input.size()) != layers[first_layer].spec.in_dim) {
    throw Error(ErrorCode::kDimensionMismatch, "partial evaluation input does not match layer " +
                                                   std::to_string(first_layer));
  }
  std::vector<double> current(input.begin(), input.end());
  std::vector<double> next;
  for (std::size_t l = first_layer; l < layers.size(); ++l) {
    dense(layers[l], current, next);
    current.swap(next);
  }
  return current;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double shift = *std::max_element(p.begin(), p.end());
  double total = 0.0;
  for (double& v : p) {
    v = std::exp(v - shift);
    total += v;
  }
  for (double& v : p) v /= total;
  return p;
}

LossAndGradient cross_entropy(std::span<const double> probabilities, int target_class) {
  if (target_class < 0 || target_class >= static_cast<int>(probabilities.size())) {
    throw Error(ErrorCode::kInvalidArgument,
                "target class " + std::to_string(target_class) + " outside [0, " +
                    std::to_string(probabilities.size()) + ")");
  }
  LossAndGradient out;
  out.loss = -std::log(std::max(probabilities[target_class], kLogFloor));
  out.grad_logits.assign(probabilities.begin(), probabilities.end());
  out.grad_logits[target_class] -= 1.0;
  return out;
}

void backward_into(const MlpModel& model, const Activations& activations,
                   std::span<const double> grad_logits, Gradients& grads) {
  const auto& layers = model.layers();
  if (activations.outputs.size() != layers.size() || activations.inputs.size() != layers.size() ||
      grads.weights.size() != layers.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "activations/gradients do not match the model");
  }
  if (static_cast<int>(grad_logits.size()) != model.output_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "gradient length does not match model output");
  }
  std::vector<double> delta(grad_logits.begin(), grad_logits.end());
  std::vector<double> upstream;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Layer& layer = layers[l];
    const int in = layer.spec.in_dim;
    const int out = layer.spec.out_dim;
    if (layer.spec.activation == Activation::kRelu) {
      const auto& y = activations.outputs[l];
      for (int j = 0; j < out; ++j) {
        if (!(y[j] > 0.0)) delta[j] = 0.0;
      }
    }
    const auto& x = activations.inputs[l];
    auto& gw = grads.weights[l];
    auto& gb = grads.biases[l];
    upstream.assign(static_cast<std::size_t>(in), 0.0);
    for (int i = 0; i < in; ++i) {
      const double xi = x[i];
      const double* w = layer.weights.data() + static_cast<std::size_t>(i) * out;
      double* gwi = gw.data() + static_cast<std::size_t>(i) * out;
      double acc = 0.0;
      for (int j = 0; j < out; ++j) {
        gwi[j] += xi * delta[j];
        acc += w[j] * delta[j];
      }
      upstream[i] = acc;
    }
    for (int j = 0; j < out; ++j) gb[j] += delta[j];
    delta.swap(upstream);
  }
  grads.input.assign(delta.begin(), delta.end());
}

Gradients backward(const MlpModel& model, const Activations& activations,
                   std::span<const double> grad_logits) {
  Gradients grads = Gradients::zeros_like(model);
  backward_into(model, activations, grad_logits, grads);
  return grads;
}

AdamState AdamState::for_model(const MlpModel& model, double learning_rate, double beta1,
                               double beta2, double epsilon) {
  if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "Adam betas must lie in (0, 1)");
  }
  if (!(learning_rate > 0.0) || !(epsilon > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "Adam learning rate and epsilon must be > 0");
  }
  AdamState state;
  state.first_moment = Gradients::zeros_like(model);
  state.second_moment = Gradients::zeros_like(model);
  state.beta1 = beta1;
  state.beta2 = beta2;
  state.epsilon = epsilon;
  state.learning_rate = learning_rate;
  return state;
}

void adam_step(MlpModel& model, const Gradients& grads, AdamState& state) {
  auto& layers = model.layers();
  if (grads.weights.size() != layers.size() || state.first_moment.weights.size() != layers.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "Adam state does not match the model");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  auto update = [&](std::vector<double>& params, const std::vector<double>& g,
                    std::vector<double>& m, std::vector<double>& v) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      params[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    update(layers[l].weights, grads.weights[l], state.first_moment.weights[l],
           state.second_moment.weights[l]);
    update(layers[l].biases, grads.biases[l], state.first_moment.biases[l],
           state.second_moment.biases[l]);
  }
}

namespace detail {

void encode_model(pixadapt::detail::ByteWriter& writer, const MlpModel& model) {
  writer.magic(kModelMagic);
  writer.put(static_cast<std::uint32_t>(model.layers().size()));
  for (const Layer& layer : model.layers()) {
    writer.put(static_cast<std::uint32_t>(layer.spec.in_dim));
    writer.put(static_cast<std::uint32_t>(layer.spec.out_dim));
    writer.put(static_cast<std::uint32_t>(layer.spec.activation));
  }
  for (const Layer& layer : model.layers()) {
    for (double w : layer.weights) writer.put(w);
    for (double b : layer.biases) writer.put(b);
  }
}

MlpModel decode_model(pixadapt::detail::ByteReader& reader) {
  reader.expect_magic(kModelMagic);
  const std::uint32_t count = reader.get<std::uint32_t>();
  if (count == 0 || count > 1024) {
    throw Error(ErrorCode::kMalformed, reader.source() + ": implausible layer count " +
                                           std::to_string(count));
  }
  std::vector<LayerSpec> specs;
  for (std::uint32_t i = 0; i < count; ++i) {
    LayerSpec spec;
    spec.in_dim = static_cast<int>(reader.get<std::uint32_t>());
    spec.out_dim = static_cast<int>(reader.get<std::uint32_t>());
    spec.activation = static_cast<Activation>(reader.get<std::uint32_t>());
    specs.push_back(spec);
  }
  MlpModel model = [&] {
    try {
      return MlpModel(std::move(specs));
    } catch (const Error& e) {
      throw Error(ErrorCode::kMalformed, reader.source() + ": " + e.what());
    }
  }();
  reader.require(model.parameter_count() * sizeof(double));
  for (Layer& layer : model.layers()) {
    for (double& w : layer.weights) w = reader.get<double>();
    for (double& b : layer.biases) b = reader.get<double>();
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(layer.weights.begin(), layer.weights.end(), finite) ||
        !std::all_of(layer.biases.begin(), layer.biases.end(), finite)) {
      throw Error(ErrorCode::kNonFinite, reader.source() + ": non-finite model parameter");
    }
  }
  return model;
}

}  // namespace detail

void write_model(const MlpModel& model, const std::filesystem::path& path) {
  pixadapt::detail::ByteWriter writer;
  detail::encode_model(writer, model);
  pixadapt::detail::write_file_bytes(path, writer.bytes());
}

MlpModel read_model(const std::filesystem::path& path) {
  pixadapt::detail::ByteReader reader(pixadapt::detail::read_file_bytes(path), path.string());
  MlpModel model = detail::decode_model(reader);
  reader.expect_end();
  return model;
}

}  // namespace pixadapt::nn
