#include "comet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "comet/common.hpp"

namespace comet {

namespace {

constexpr double kProbClamp = 1e-12;   // BCE log guard
constexpr double kProbFloor = 1e-15;   // keeps forward output inside (0,1)

double sigmoid(double z) {
  double y;
  if (z >= 0.0) {
    y = 1.0 / (1.0 + std::exp(-z));
  } else {
    const double e = std::exp(z);
    y = e / (1.0 + e);
  }
  return std::clamp(y, kProbFloor, 1.0 - kProbFloor);
}

// Per-example activations for one forward pass. mask holds the scaled
// dropout multipliers (1/(1-p) or 0) for each hidden layer.
struct Activations {
  std::vector<std::vector<double>> pre;   // z per layer
  std::vector<std::vector<double>> post;  // activation after relu/dropout
  std::vector<std::vector<double>> mask;  // hidden layers only
};

void dense_forward(const DenseLayer& layer, std::span<const double> in,
                   std::vector<double>& out) {
  out.resize(static_cast<std::size_t>(layer.out_dim));
  const std::size_t w = static_cast<std::size_t>(layer.in_dim);
  for (std::size_t r = 0; r < out.size(); ++r) {
    const double* row = layer.weights.data() + r * w;
    double acc = layer.biases[r];
    for (std::size_t c = 0; c < w; ++c) acc += row[c] * in[c];
    out[r] = acc;
  }
}

// Full pass through the model; dropout applied when rng != nullptr and
// dropout_rate > 0. Returns the output probability.
double run_forward(const MlpModel& model, std::span<const double> x, Rng* rng,
                   double dropout_rate, Activations* acts) {
  if (static_cast<int>(x.size()) != model.input_dim())
    throw Error("forward: input has " + std::to_string(x.size()) + " components, model expects " +
                std::to_string(model.input_dim()));

  const std::size_t n_layers = model.layers.size();
  if (acts) {
    acts->pre.assign(n_layers, {});
    acts->post.assign(n_layers, {});
    acts->mask.assign(n_layers > 0 ? n_layers - 1 : 0, {});
  }

  std::vector<double> current(x.begin(), x.end());
  std::vector<double> next;
  const bool dropping = rng != nullptr && dropout_rate > 0.0;
  const double keep = 1.0 - dropout_rate;

  for (std::size_t l = 0; l < n_layers; ++l) {
    const DenseLayer& layer = model.layers[l];
    dense_forward(layer, current, next);
    if (acts) acts->pre[l] = next;

    if (l + 1 < n_layers) {
      for (double& v : next) v = v > 0.0 ? v : 0.0;  // ReLU
      if (dropping) {
        std::vector<double> mask(next.size());
        for (std::size_t i = 0; i < next.size(); ++i) {
          mask[i] = rng->next_double() < keep ? 1.0 / keep : 0.0;
          next[i] *= mask[i];
        }
        if (acts) acts->mask[l] = std::move(mask);
      } else if (acts) {
        acts->mask[l].assign(next.size(), 1.0);
      }
      if (acts) acts->post[l] = next;
      current.swap(next);
    } else {
      if (acts) acts->post[l] = next;
      current.swap(next);
    }
  }
  return sigmoid(current[0]);
}

}  // namespace

void MlpModel::validate() const {
  if (layers.empty()) throw Error("model has no layers");
  if (layers.back().out_dim != 1) throw Error("output layer must have a single unit");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw Error("dropout rate must lie in [0,1)");
  int expected_in = layers.front().in_dim;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseLayer& layer = layers[l];
    if (layer.in_dim <= 0 || layer.out_dim <= 0)
      throw Error("layer " + std::to_string(l) + " has non-positive dimensions");
    if (layer.in_dim != expected_in)
      throw Error("layer " + std::to_string(l) + " expects " + std::to_string(expected_in) +
                  " inputs, has " + std::to_string(layer.in_dim));
    if (layer.weights.size() !=
        static_cast<std::size_t>(layer.in_dim) * static_cast<std::size_t>(layer.out_dim))
      throw Error("layer " + std::to_string(l) + " weight shape mismatch");
    if (layer.biases.size() != static_cast<std::size_t>(layer.out_dim))
      throw Error("layer " + std::to_string(l) + " bias shape mismatch");
    for (double v : layer.weights)
      if (!std::isfinite(v)) throw Error("non-finite weight in layer " + std::to_string(l));
    for (double v : layer.biases)
      if (!std::isfinite(v)) throw Error("non-finite bias in layer " + std::to_string(l));
    expected_in = layer.out_dim;
  }
  if (threshold && !(*threshold >= 0.0 && *threshold <= 1.0))
    throw Error("threshold must lie in [0,1]");
}

MlpModel make_mlp(int input_dim, std::span<const int> hidden_dims, double dropout_rate,
                  std::uint64_t seed, std::string category, std::string embedding_name) {
  if (input_dim <= 0) throw Error("input dimension must be positive");
  MlpModel model;
  model.dropout_rate = dropout_rate;
  model.category = std::move(category);
  model.embedding_name = std::move(embedding_name);

  Rng rng(seed);
  int in_dim = input_dim;
  auto add_layer = [&](int out_dim) {
    DenseLayer layer;
    layer.in_dim = in_dim;
    layer.out_dim = out_dim;
    layer.weights.resize(static_cast<std::size_t>(in_dim) * static_cast<std::size_t>(out_dim));
    layer.biases.assign(static_cast<std::size_t>(out_dim), 0.0);
    const double bound = std::sqrt(6.0 / static_cast<double>(in_dim));
    for (double& w : layer.weights) w = rng.next_uniform(-bound, bound);
    model.layers.push_back(std::move(layer));
    in_dim = out_dim;
  };
  for (int h : hidden_dims) add_layer(h);
  add_layer(1);
  model.validate();
  return model;
}

MlpModel make_default_mlp(int input_dim, std::uint64_t seed, std::string category,
                          std::string embedding_name) {
  const int hidden[] = {kHiddenUnits, kHiddenUnits};
  return make_mlp(input_dim, hidden, 0.2, seed, std::move(category), std::move(embedding_name));
}

double forward(const MlpModel& model, std::span<const double> x) {
  return run_forward(model, x, nullptr, 0.0, nullptr);
}

double forward_train(const MlpModel& model, std::span<const double> x, Rng& rng) {
  return run_forward(model, x, &rng, model.dropout_rate, nullptr);
}

double bce_loss(std::span<const double> preds, std::span<const double> targets) {
  if (preds.size() != targets.size())
    throw Error("bce_loss: " + std::to_string(preds.size()) + " predictions vs " +
                std::to_string(targets.size()) + " targets");
  if (preds.empty()) throw Error("bce_loss: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double p = std::clamp(preds[i], kProbClamp, 1.0 - kProbClamp);
    sum += targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
  }
  return -sum / static_cast<double>(preds.size());
}

namespace {

Gradients make_zero_gradients(const MlpModel& model) {
  Gradients grads;
  grads.layers.resize(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    grads.layers[l].weights.assign(model.layers[l].weights.size(), 0.0);
    grads.layers[l].biases.assign(model.layers[l].biases.size(), 0.0);
  }
  return grads;
}

// Accumulates mean-loss gradients into `grads`; returns the summed
// per-example loss so callers can report the batch mean.
double accumulate_backward(const MlpModel& model, std::span<const std::vector<double>> inputs,
                           std::span<const double> targets, Rng* dropout_rng, Gradients& grads) {
  const double inv_n = 1.0 / static_cast<double>(inputs.size());
  const std::size_t n_layers = model.layers.size();
  double loss_sum = 0.0;

  Activations acts;
  std::vector<double> delta, delta_prev;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const double y =
        run_forward(model, inputs[i], dropout_rng, model.dropout_rate, &acts);
    const double t = targets[i];
    {
      const double p = std::clamp(y, kProbClamp, 1.0 - kProbClamp);
      loss_sum -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    }

    // Sigmoid + BCE collapse: dL/dz_out = (y - t), scaled for the batch mean.
    delta.assign(1, (y - t) * inv_n);

    for (std::size_t l = n_layers; l-- > 0;) {
      const DenseLayer& layer = model.layers[l];
      const std::vector<double>& layer_in =
          l == 0 ? inputs[i] : acts.post[l - 1];

      if (layer.trainable) {
        auto& g = grads.layers[l];
        const std::size_t w = static_cast<std::size_t>(layer.in_dim);
        for (std::size_t r = 0; r < delta.size(); ++r) {
          const double d = delta[r];
          if (d == 0.0) continue;
          double* grow = g.weights.data() + r * w;
          for (std::size_t c = 0; c < w; ++c) grow[c] += d * layer_in[c];
          g.biases[r] += d;
        }
      }

      if (l == 0) break;

      // delta for the previous layer's activation: W^T delta, then through
      // dropout mask and ReLU gate.
      delta_prev.assign(static_cast<std::size_t>(layer.in_dim), 0.0);
      const std::size_t w = static_cast<std::size_t>(layer.in_dim);
      for (std::size_t r = 0; r < delta.size(); ++r) {
        const double d = delta[r];
        if (d == 0.0) continue;
        const double* row = layer.weights.data() + r * w;
        for (std::size_t c = 0; c < w; ++c) delta_prev[c] += row[c] * d;
      }
      const auto& mask = acts.mask[l - 1];
      const auto& pre = acts.pre[l - 1];
      for (std::size_t c = 0; c < delta_prev.size(); ++c) {
        double d = delta_prev[c] * mask[c];
        if (pre[c] <= 0.0) d = 0.0;
        delta_prev[c] = d;
      }
      delta.swap(delta_prev);
    }
  }
  return loss_sum;
}

}  // namespace

Gradients backward(const MlpModel& model, std::span<const std::vector<double>> inputs,
                   std::span<const double> targets, Rng* dropout_rng) {
  if (inputs.empty()) throw Error("backward: empty batch");
  if (inputs.size() != targets.size())
    throw Error("backward: " + std::to_string(inputs.size()) + " inputs vs " +
                std::to_string(targets.size()) + " targets");
  Gradients grads = make_zero_gradients(model);
  accumulate_backward(model, inputs, targets, dropout_rng, grads);
  return grads;
}

RmspropState make_rmsprop_state(const MlpModel& model) {
  RmspropState state;
  state.cache.resize(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    state.cache[l].weights.assign(model.layers[l].weights.size(), 0.0);
    state.cache[l].biases.assign(model.layers[l].biases.size(), 0.0);
  }
  return state;
}

void rmsprop_step(MlpModel& model, const Gradients& grads, RmspropState& state,
                  const RmspropConfig& cfg) {
  if (grads.layers.size() != model.layers.size() || state.cache.size() != model.layers.size())
    throw Error("rmsprop_step: layer count mismatch");

  auto update = [&](std::vector<double>& params, const std::vector<double>& grad,
                    std::vector<double>& cache) {
    if (params.size() != grad.size() || params.size() != cache.size())
      throw Error("rmsprop_step: parameter shape mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grad[i];
      cache[i] = cfg.rho * cache[i] + (1.0 - cfg.rho) * g * g;
      params[i] -= cfg.learning_rate * g / (std::sqrt(cache[i]) + cfg.epsilon);
    }
  };

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    if (!model.layers[l].trainable) continue;  // frozen: parameters and cache untouched
    update(model.layers[l].weights, grads.layers[l].weights, state.cache[l].weights);
    update(model.layers[l].biases, grads.layers[l].biases, state.cache[l].biases);
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("dropout_rate must lie in [0,1)");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(rmsprop_rho >= 0.0 && rmsprop_rho < 1.0))
    throw ConfigError("rmsprop_rho must lie in [0,1)");
  if (!(rmsprop_epsilon > 0.0)) throw ConfigError("rmsprop_epsilon must be positive");
}

namespace {

TrainReport run_training(MlpModel& model, std::span<const TrainExample> data,
                         const TrainConfig& cfg) {
  cfg.validate();
  model.validate();
  if (data.empty()) throw Error("train: empty training set");

  std::size_t positives = 0;
  for (const auto& ex : data) positives += ex.positive ? 1 : 0;
  if (positives == 0 || positives == data.size())
    throw Error("train: training set must contain at least one positive and one negative example");

  model.dropout_rate = cfg.dropout_rate;

  TrainReport report;
  report.seed = cfg.seed;

  Rng rng(cfg.seed);
  RmspropState state = make_rmsprop_state(model);
  const RmspropConfig opt{cfg.learning_rate, cfg.rmsprop_rho, cfg.rmsprop_epsilon};

  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  std::vector<std::vector<double>> batch_inputs;
  std::vector<double> batch_targets;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss_sum = 0.0;
    std::size_t steps = 0;

    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      batch_inputs.clear();
      batch_targets.clear();
      for (std::size_t i = start; i < end; ++i) {
        batch_inputs.push_back(data[order[i]].input);
        batch_targets.push_back(data[order[i]].positive ? 1.0 : 0.0);
      }
      Gradients grads = make_zero_gradients(model);
      epoch_loss_sum += accumulate_backward(model, batch_inputs, batch_targets,
                                            cfg.dropout_rate > 0.0 ? &rng : nullptr, grads);
      rmsprop_step(model, grads, state, opt);
      ++steps;
    }

    report.epoch_mean_loss.push_back(epoch_loss_sum / static_cast<double>(n));
    if (epoch == 0) report.steps_first_epoch = steps;
    report.total_steps += steps;
  }

  report.final_checksum = model_checksum(model);
  return report;
}

}  // namespace

TrainReport train(MlpModel& model, std::span<const TrainExample> data, const TrainConfig& cfg) {
  for (auto& layer : model.layers) layer.trainable = true;
  return run_training(model, data, cfg);
}

TrainReport fine_tune(MlpModel& model, std::span<const TrainExample> data,
                      const TrainConfig& cfg) {
  for (std::size_t l = 0; l + 1 < model.layers.size(); ++l) model.layers[l].trainable = false;
  model.layers.back().trainable = true;
  TrainReport report = run_training(model, data, cfg);
  for (auto& layer : model.layers) layer.trainable = true;
  return report;
}

// ---- serialization -------------------------------------------------------

namespace {

constexpr std::string_view kModelMagic = "comet mlp 1";

// Everything that participates in the checksum, i.e. the file minus the
// checksum line itself.
std::string serialize_body(const MlpModel& model) {
  std::ostringstream os;
  os << "category " << model.category << '\n';
  os << "doc_dim " << model.input_dim() << '\n';
  os << "layer_dims " << model.input_dim();
  for (const auto& layer : model.layers) os << ' ' << layer.out_dim;
  os << '\n';
  os << "dropout " << format_double(model.dropout_rate) << '\n';
  os << "embedding " << model.embedding_name << '\n';
  os << "threshold " << (model.threshold ? format_double(*model.threshold) : "none") << '\n';
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const DenseLayer& layer = model.layers[l];
    os << "W" << l << ' ' << layer.out_dim << ' ' << layer.in_dim << '\n';
    const std::size_t w = static_cast<std::size_t>(layer.in_dim);
    for (int r = 0; r < layer.out_dim; ++r) {
      const double* row = layer.weights.data() + static_cast<std::size_t>(r) * w;
      for (std::size_t c = 0; c < w; ++c) {
        if (c) os << ' ';
        os << format_double(row[c]);
      }
      os << '\n';
    }
    os << "b" << l << ' ' << layer.out_dim << '\n';
    for (int r = 0; r < layer.out_dim; ++r) {
      if (r) os << ' ';
      os << format_double(layer.biases[static_cast<std::size_t>(r)]);
    }
    os << '\n';
  }
  return os.str();
}

std::string checksum_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::uint64_t model_checksum(const MlpModel& model) { return fnv1a64(serialize_body(model)); }

void save_model(const MlpModel& model, const std::string& path) {
  model.validate();
  const std::string body = serialize_body(model);
  std::ostringstream os;
  os << kModelMagic << '\n';
  os << "checksum " << checksum_hex(fnv1a64(body)) << '\n';
  os << body;
  write_text_file(path, os.str());
}

MlpModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model file: " + path);

  std::string line;
  auto next_line = [&]() -> std::string& {
    if (!std::getline(in, line)) throw Error(path + ": truncated model file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next_line() != kModelMagic)
    throw Error(path + ": unsupported model format (expected '" + std::string(kModelMagic) + "')");

  std::string checksum_field;
  {
    std::istringstream fields(next_line());
    std::string key;
    fields >> key >> checksum_field;
    if (key != "checksum" || checksum_field.size() != 16)
      throw Error(path + ": missing checksum header");
  }

  // The rest of the file is the checksummed body; capture it verbatim.
  std::ostringstream rest;
  rest << in.rdbuf();
  const std::string body = rest.str();
  if (checksum_hex(fnv1a64(body)) != checksum_field)
    throw Error(path + ": checksum mismatch, file is corrupt");

  std::istringstream bs(body);
  MlpModel model;
  std::vector<int> layer_dims;
  {
    std::string key;
    std::istringstream ls;
    auto body_line = [&]() -> std::istringstream& {
      if (!std::getline(bs, line)) throw Error(path + ": truncated model body");
      ls.clear();
      ls.str(line);
      return ls;
    };

    body_line() >> key >> model.category;
    if (key != "category") throw Error(path + ": expected category header");
    int doc_dim = 0;
    body_line() >> key >> doc_dim;
    if (key != "doc_dim") throw Error(path + ": expected doc_dim header");
    auto& dims_line = body_line();
    dims_line >> key;
    if (key != "layer_dims") throw Error(path + ": expected layer_dims header");
    int d;
    while (dims_line >> d) layer_dims.push_back(d);
    if (layer_dims.size() < 2 || layer_dims.front() != doc_dim)
      throw Error(path + ": inconsistent layer dimensions");
    std::string value;
    body_line() >> key >> value;
    if (key != "dropout") throw Error(path + ": expected dropout header");
    const auto dr = parse_double(value);
    if (!dr) throw Error(path + ": bad dropout value");
    model.dropout_rate = *dr;
    // embedding name may be empty
    if (!std::getline(bs, line)) throw Error(path + ": truncated model body");
    if (line.rfind("embedding", 0) != 0) throw Error(path + ": expected embedding header");
    model.embedding_name = line.size() > 10 ? line.substr(10) : std::string();
    body_line() >> key >> value;
    if (key != "threshold") throw Error(path + ": expected threshold header");
    if (value != "none") {
      const auto t = parse_double(value);
      if (!t) throw Error(path + ": bad threshold value");
      model.threshold = *t;
    }
  }

  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    DenseLayer layer;
    layer.in_dim = layer_dims[l];
    layer.out_dim = layer_dims[l + 1];
    layer.weights.resize(static_cast<std::size_t>(layer.in_dim) *
                         static_cast<std::size_t>(layer.out_dim));
    layer.biases.resize(static_cast<std::size_t>(layer.out_dim));

    std::string key;
    int rows = 0, cols = 0;
    if (!(bs >> key >> rows >> cols) || key != "W" + std::to_string(l) ||
        rows != layer.out_dim || cols != layer.in_dim)
      throw Error(path + ": bad weight block header for layer " + std::to_string(l));
    for (double& v : layer.weights)
      if (!(bs >> v)) throw Error(path + ": truncated weight block in layer " + std::to_string(l));
    if (!(bs >> key >> rows) || key != "b" + std::to_string(l) || rows != layer.out_dim)
      throw Error(path + ": bad bias block header for layer " + std::to_string(l));
    for (double& v : layer.biases)
      if (!(bs >> v)) throw Error(path + ": truncated bias block in layer " + std::to_string(l));

    model.layers.push_back(std::move(layer));
  }

  model.validate();
  return model;
}

}  // namespace comet
