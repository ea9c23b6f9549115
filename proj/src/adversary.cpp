#include "redist/adversary.hpp"

#include <algorithm>
#include <cmath>

#include "redist/neural_h.hpp"

namespace redist {

Generator make_generator(int n, RngStream& rng) {
  Generator gen;
  gen.n = n;
  gen.net = init_xavier({n, 64, 64, 64, 64, n}, Activation::Sigmoid, rng);
  return gen;
}

std::vector<TypeProfile> generate_batch(const Generator& gen, int batch_size,
                                        RngStream& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<double> noise(static_cast<std::size_t>(batch_size) * gen.n);
  for (double& z : noise) z = rng.uniform01();
  std::vector<double> out(noise.size());
  forward_batch(gen.net, noise.data(), batch_size, nullptr, out.data());
  std::vector<TypeProfile> profiles(batch_size);
  for (int j = 0; j < batch_size; ++j) {
    profiles[j].values.assign(out.begin() + static_cast<std::size_t>(j) * gen.n,
                              out.begin() + static_cast<std::size_t>(j + 1) * gen.n);
  }
  return profiles;
}

double adversary_step(Generator& gen, const Mlp& h_net, FeatureCombo combo,
                      int top_k, int batch_size, AdamState& opt,
                      RngStream& rng) {
  const int n = gen.n;
  std::vector<double> noise(static_cast<std::size_t>(batch_size) * n);
  for (double& z : noise) z = rng.uniform01();

  BatchTrace gen_trace;
  std::vector<double> theta(noise.size());
  forward_batch(gen.net, noise.data(), batch_size, &gen_trace, theta.data());

  std::vector<TypeProfile> profiles(batch_size);
  std::vector<double> sums(batch_size, 0.0);
  for (int j = 0; j < batch_size; ++j) {
    profiles[j].values.assign(theta.begin() + static_cast<std::size_t>(j) * n,
                              theta.begin() + static_cast<std::size_t>(j + 1) * n);
    for (double v : profiles[j].values) sums[j] += v;
  }

  const SumHBatch batch = sum_h_batch(h_net, combo, top_k, profiles);
  std::vector<double> ratio(batch_size);
  for (int j = 0; j < batch_size; ++j) {
    ratio[j] = batch.sum_h[j] / std::max(sums[j], 1.0);
  }
  const auto lo = std::min_element(ratio.begin(), ratio.end());
  const auto hi = std::max_element(ratio.begin(), ratio.end());
  const double loss = *lo - *hi;
  if (!std::isfinite(loss)) {
    throw DivergenceError("adversary loss went non-finite");
  }
  const int j_min = static_cast<int>(lo - ratio.begin());
  const int j_max = static_cast<int>(hi - ratio.begin());

  // dLoss/dtheta for the two extreme samples only. A constant batch has
  // zero spread and zero gradient.
  std::vector<double> d_theta(theta.size(), 0.0);
  const auto extremes =
      j_min == j_max
          ? std::vector<std::pair<int, double>>{}
          : std::vector<std::pair<int, double>>{{j_min, 1.0}, {j_max, -1.0}};
  for (const auto& [j, sign] : extremes) {
    const double s = std::max(sums[j], 1.0);
    // At the kink sum == 1 the sum branch is chosen.
    const double ds = sums[j] >= 1.0 ? 1.0 : 0.0;
    const std::vector<double> g_sum =
        sum_h_input_gradient(h_net, combo, top_k, profiles[j]);
    double* row = d_theta.data() + static_cast<std::size_t>(j) * n;
    for (int k = 0; k < n; ++k) {
      row[k] = sign * (g_sum[k] / s - batch.sum_h[j] / (s * s) * ds);
    }
  }

  Gradients grads = make_zero_grads(gen.net);
  backward_batch(gen.net, gen_trace, d_theta.data(), &grads, nullptr);
  adam_step(gen.net, grads, opt);
  return loss;
}

}  // namespace redist
