#include "redist/net.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace redist {

std::size_t Mlp::param_count() const {
  std::size_t count = 0;
  for (int l = 0; l < num_layers(); ++l) {
    count += weights[l].size() + biases[l].size();
  }
  return count;
}

Mlp init_xavier(const std::vector<int>& layer_sizes,
                Activation output_activation, RngStream& rng) {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("need at least input and output layer sizes");
  }
  for (int s : layer_sizes) {
    if (s <= 0) throw std::invalid_argument("layer sizes must be positive");
  }
  Mlp net;
  net.layer_sizes = layer_sizes;
  net.output_activation = output_activation;
  const int layers = static_cast<int>(layer_sizes.size()) - 1;
  net.weights.resize(layers);
  net.biases.resize(layers);
  for (int l = 0; l < layers; ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double w_std = std::sqrt(2.0 / (fan_in + fan_out));
    net.weights[l].resize(static_cast<std::size_t>(fan_out) * fan_in);
    net.biases[l].resize(fan_out);
    for (double& w : net.weights[l]) w = rng.normal(0.0, w_std);
    for (double& b : net.biases[l]) b = rng.normal(0.0, 0.01);
  }
  return net;
}

void forward_batch(const Mlp& net, const double* x, int batch, BatchTrace* trace,
                   double* y) {
  const int layers = net.num_layers();
  BatchTrace local;
  BatchTrace& tr = trace != nullptr ? *trace : local;
  tr.batch = batch;
  tr.activations.resize(layers + 1);
  tr.activations[0].assign(x, x + static_cast<std::size_t>(batch) * net.input_dim());

  for (int l = 0; l < layers; ++l) {
    const int in = net.layer_sizes[l];
    const int out = net.layer_sizes[l + 1];
    const double* a = tr.activations[l].data();
    auto& next = tr.activations[l + 1];
    next.assign(static_cast<std::size_t>(batch) * out, 0.0);
    const double* w = net.weights[l].data();
    const double* b = net.biases[l].data();
    const bool last = l == layers - 1;
    for (int r = 0; r < batch; ++r) {
      const double* ar = a + static_cast<std::size_t>(r) * in;
      double* nr = next.data() + static_cast<std::size_t>(r) * out;
      for (int o = 0; o < out; ++o) {
        const double* wo = w + static_cast<std::size_t>(o) * in;
        double acc = b[o];
        for (int k = 0; k < in; ++k) acc += wo[k] * ar[k];
        if (!last) {
          nr[o] = acc > 0.0 ? acc : 0.0;
        } else if (net.output_activation == Activation::Sigmoid) {
          nr[o] = 1.0 / (1.0 + std::exp(-acc));
        } else {
          nr[o] = acc;
        }
      }
    }
  }
  if (y != nullptr) {
    std::memcpy(y, tr.activations[layers].data(),
                sizeof(double) * static_cast<std::size_t>(batch) * net.output_dim());
  }
}

std::vector<double> forward(const Mlp& net, std::span<const double> input) {
  if (static_cast<int>(input.size()) != net.input_dim()) {
    throw std::invalid_argument("forward: input dimension mismatch");
  }
  std::vector<double> y(net.output_dim());
  forward_batch(net, input.data(), 1, nullptr, y.data());
  return y;
}

void Gradients::zero() {
  for (auto& w : weights) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
}

Gradients make_zero_grads(const Mlp& net) {
  Gradients g;
  g.weights.resize(net.num_layers());
  g.biases.resize(net.num_layers());
  for (int l = 0; l < net.num_layers(); ++l) {
    g.weights[l].assign(net.weights[l].size(), 0.0);
    g.biases[l].assign(net.biases[l].size(), 0.0);
  }
  return g;
}

void backward_batch(const Mlp& net, const BatchTrace& trace, const double* dy,
                    Gradients* param_grads, double* dx) {
  const int layers = net.num_layers();
  const int batch = trace.batch;
  if (static_cast<int>(trace.activations.size()) != layers + 1) {
    throw std::invalid_argument("backward: trace does not match network");
  }

  // delta = gradient w.r.t. the post-activation output of the current layer.
  std::vector<double> delta(dy, dy + static_cast<std::size_t>(batch) * net.output_dim());
  std::vector<double> prev_delta;

  for (int l = layers - 1; l >= 0; --l) {
    const int in = net.layer_sizes[l];
    const int out = net.layer_sizes[l + 1];
    const double* a_in = trace.activations[l].data();
    const double* a_out = trace.activations[l + 1].data();
    const bool last = l == layers - 1;

    // Convert to gradient w.r.t. pre-activation in place.
    for (int r = 0; r < batch; ++r) {
      double* dr = delta.data() + static_cast<std::size_t>(r) * out;
      const double* ar = a_out + static_cast<std::size_t>(r) * out;
      for (int o = 0; o < out; ++o) {
        if (!last) {
          if (ar[o] <= 0.0) dr[o] = 0.0;  // ReLU subgradient at 0 is 0
        } else if (net.output_activation == Activation::Sigmoid) {
          dr[o] *= ar[o] * (1.0 - ar[o]);
        }
      }
    }

    if (param_grads != nullptr) {
      double* gw = param_grads->weights[l].data();
      double* gb = param_grads->biases[l].data();
      for (int r = 0; r < batch; ++r) {
        const double* dr = delta.data() + static_cast<std::size_t>(r) * out;
        const double* ar = a_in + static_cast<std::size_t>(r) * in;
        for (int o = 0; o < out; ++o) {
          const double d = dr[o];
          if (d == 0.0) continue;
          gb[o] += d;
          double* gwo = gw + static_cast<std::size_t>(o) * in;
          for (int k = 0; k < in; ++k) gwo[k] += d * ar[k];
        }
      }
    }

    const bool need_input = l > 0 || dx != nullptr;
    if (need_input) {
      prev_delta.assign(static_cast<std::size_t>(batch) * in, 0.0);
      const double* w = net.weights[l].data();
      for (int r = 0; r < batch; ++r) {
        const double* dr = delta.data() + static_cast<std::size_t>(r) * out;
        double* pr = prev_delta.data() + static_cast<std::size_t>(r) * in;
        for (int o = 0; o < out; ++o) {
          const double d = dr[o];
          if (d == 0.0) continue;
          const double* wo = w + static_cast<std::size_t>(o) * in;
          for (int k = 0; k < in; ++k) pr[k] += d * wo[k];
        }
      }
      if (l == 0 && dx != nullptr) {
        std::memcpy(dx, prev_delta.data(),
                    sizeof(double) * static_cast<std::size_t>(batch) * in);
      }
      delta.swap(prev_delta);
    }
  }
}

double AdamState::effective_learning_rate() const {
  return base_learning_rate *
         std::pow(decay_factor, static_cast<double>(step_count / decay_every));
}

AdamState make_adam(const Mlp& net, double learning_rate, double decay_factor,
                    int decay_every) {
  AdamState state;
  state.first_moment = make_zero_grads(net);
  state.second_moment = make_zero_grads(net);
  state.base_learning_rate = learning_rate;
  state.decay_factor = decay_factor;
  state.decay_every = decay_every;
  return state;
}

namespace {

void adam_update(std::vector<double>& param, const std::vector<double>& grad,
                 std::vector<double>& m, std::vector<double>& v,
                 const AdamState& s, double lr, double bc1, double bc2) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    if (!std::isfinite(g)) {
      throw DivergenceError("non-finite gradient in adam_step");
    }
    m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g;
    v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + s.eps);
  }
}

}  // namespace

void adam_step(Mlp& net, const Gradients& grads, AdamState& state) {
  const double lr = state.effective_learning_rate();
  const double t = static_cast<double>(state.step_count + 1);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (int l = 0; l < net.num_layers(); ++l) {
    adam_update(net.weights[l], grads.weights[l], state.first_moment.weights[l],
                state.second_moment.weights[l], state, lr, bc1, bc2);
    adam_update(net.biases[l], grads.biases[l], state.first_moment.biases[l],
                state.second_moment.biases[l], state, lr, bc1, bc2);
  }
  ++state.step_count;
}

namespace {
constexpr int kCheckpointVersion = 1;
}

void save_checkpoint(const Mlp& net, const nlohmann::json& meta,
                     const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["version"] = kCheckpointVersion;
  doc["layer_sizes"] = net.layer_sizes;
  doc["output_activation"] =
      net.output_activation == Activation::Sigmoid ? "sigmoid" : "identity";
  doc["weights"] = net.weights;
  doc["biases"] = net.biases;
  doc["meta"] = meta;
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open checkpoint for writing: " +
                             path.string());
  }
  out << doc.dump(1) << "\n";
}

std::pair<Mlp, nlohmann::json> load_checkpoint(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint: " + path.string());
  }
  nlohmann::json doc;
  in >> doc;
  if (!doc.contains("version") || doc["version"].get<int>() != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version in " +
                             path.string());
  }
  Mlp net;
  net.layer_sizes = doc.at("layer_sizes").get<std::vector<int>>();
  const std::string act = doc.at("output_activation").get<std::string>();
  if (act == "sigmoid") {
    net.output_activation = Activation::Sigmoid;
  } else if (act == "identity") {
    net.output_activation = Activation::Identity;
  } else {
    throw std::runtime_error("unknown output activation: " + act);
  }
  net.weights = doc.at("weights").get<std::vector<std::vector<double>>>();
  net.biases = doc.at("biases").get<std::vector<std::vector<double>>>();
  const int layers = static_cast<int>(net.layer_sizes.size()) - 1;
  if (static_cast<int>(net.weights.size()) != layers ||
      static_cast<int>(net.biases.size()) != layers) {
    throw std::runtime_error("checkpoint layer count mismatch");
  }
  for (int l = 0; l < layers; ++l) {
    const std::size_t expect_w = static_cast<std::size_t>(net.layer_sizes[l]) *
                                 net.layer_sizes[l + 1];
    if (net.weights[l].size() != expect_w ||
        net.biases[l].size() != static_cast<std::size_t>(net.layer_sizes[l + 1])) {
      throw std::runtime_error("checkpoint shape corruption at layer " +
                               std::to_string(l));
    }
  }
  nlohmann::json meta = doc.value("meta", nlohmann::json::object());
  return {std::move(net), std::move(meta)};
}

}  // namespace redist
