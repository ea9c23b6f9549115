#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "redist/rng.hpp"

namespace redist {

// Raised when a loss or gradient goes non-finite during training.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Activation { Identity, Sigmoid };

// Fully connected ReLU stack. weights[l] is (out x in) row-major; the last
// layer goes through output_activation instead of ReLU.
struct Mlp {
  std::vector<int> layer_sizes;
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  Activation output_activation = Activation::Identity;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(weights.size()); }
  std::size_t param_count() const;
};

// Weights ~ Normal(0, 2/(fanIn+fanOut)), biases ~ Normal(0, 0.01^2).
Mlp init_xavier(const std::vector<int>& layer_sizes, Activation output_activation,
                RngStream& rng);

// Per-layer activations kept from a forward pass for the backward pass.
struct BatchTrace {
  int batch = 0;
  // activations[0] is the input; activations[l] the post-activation output of
  // layer l. Each is batch x layer_sizes[l], row-major.
  std::vector<std::vector<double>> activations;
};

// X is batch x input_dim row-major; Y receives batch x output_dim.
void forward_batch(const Mlp& net, const double* x, int batch, BatchTrace* trace,
                   double* y);

std::vector<double> forward(const Mlp& net, std::span<const double> input);

struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;

  void zero();
};

Gradients make_zero_grads(const Mlp& net);

// Reverse pass. dY is batch x output_dim. Accumulates into param_grads when
// non-null; writes batch x input_dim input gradients into dX when non-null.
void backward_batch(const Mlp& net, const BatchTrace& trace, const double* dy,
                    Gradients* param_grads, double* dx = nullptr);

struct AdamState {
  Gradients first_moment;
  Gradients second_moment;
  long step_count = 0;
  double base_learning_rate = 1e-3;
  double decay_factor = 0.98;
  int decay_every = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  // base_learning_rate * decay_factor^floor(step_count / decay_every)
  double effective_learning_rate() const;
};

AdamState make_adam(const Mlp& net, double learning_rate = 1e-3,
                    double decay_factor = 0.98, int decay_every = 100);

// Bias-corrected Adam update; throws DivergenceError on non-finite gradients.
void adam_step(Mlp& net, const Gradients& grads, AdamState& state);

// Versioned JSON checkpoint; round-trips parameters exactly.
void save_checkpoint(const Mlp& net, const nlohmann::json& meta,
                     const std::filesystem::path& path);
std::pair<Mlp, nlohmann::json> load_checkpoint(const std::filesystem::path& path);

}  // namespace redist
