#include "redist/neural_h.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace redist {

NeuralRedistribution::NeuralRedistribution(Mlp net, FeatureCombo combo, int n,
                                           int top_k)
    : net_(std::move(net)), combo_(combo), n_(n), top_k_(top_k) {
  if (net_.input_dim() != feature_dim(combo, n, top_k)) {
    throw std::invalid_argument(
        "network input dimension does not match the feature combo");
  }
  if (net_.output_dim() != 1) {
    throw std::invalid_argument("redistribution network must output a scalar");
  }
}

double NeuralRedistribution::evaluate_sorted(
    std::span<const double> sorted_desc) const {
  std::vector<double> feats(feature_dim(combo_, n_, top_k_));
  extract_sorted(combo_, sorted_desc, feats.data(), nullptr, top_k_);
  return forward(net_, feats)[0];
}

namespace {

// Stable descending order of the profile values.
std::vector<int> sorted_order_desc(const std::vector<double>& values) {
  std::vector<int> ord(values.size());
  std::iota(ord.begin(), ord.end(), 0);
  std::stable_sort(ord.begin(), ord.end(),
                   [&](int a, int b) { return values[a] > values[b]; });
  return ord;
}

}  // namespace

SumHBatch sum_h_batch(const Mlp& net, FeatureCombo combo, int top_k,
                      std::span<const TypeProfile> profiles) {
  SumHBatch batch;
  if (profiles.empty()) return batch;
  const int n = profiles[0].n();
  batch.n = n;
  batch.feat_dim = feature_dim(combo, n, top_k);
  const int rows = static_cast<int>(profiles.size()) * n;
  batch.rows.resize(static_cast<std::size_t>(rows) * batch.feat_dim);

  std::vector<double> sorted_others(n - 1);
  int row = 0;
  for (const TypeProfile& profile : profiles) {
    if (profile.n() != n) {
      throw std::invalid_argument("mixed profile sizes in sum_h_batch");
    }
    const std::vector<int> ord = sorted_order_desc(profile.values);
    for (int rank = 0; rank < n; ++rank) {
      // Others of the agent at sorted position `rank`, already sorted.
      int t = 0;
      for (int k = 0; k < n; ++k) {
        if (k != rank) sorted_others[t++] = profile.values[ord[k]];
      }
      extract_sorted(combo, sorted_others,
                     batch.rows.data() + static_cast<std::size_t>(row) * batch.feat_dim,
                     nullptr, top_k);
      ++row;
    }
  }

  batch.h_values.resize(rows);
  forward_batch(net, batch.rows.data(), rows, &batch.trace,
                batch.h_values.data());

  batch.sum_h.assign(profiles.size(), 0.0);
  for (std::size_t p = 0; p < profiles.size(); ++p) {
    for (int i = 0; i < n; ++i) {
      batch.sum_h[p] += batch.h_values[p * n + i];
    }
  }
  return batch;
}

void sum_h_backward_params(const Mlp& net, const SumHBatch& batch,
                           std::span<const double> d_sum, Gradients* grads) {
  const int rows = static_cast<int>(batch.h_values.size());
  std::vector<double> dy(rows);
  for (int r = 0; r < rows; ++r) dy[r] = d_sum[r / batch.n];
  backward_batch(net, batch.trace, dy.data(), grads, nullptr);
}

std::vector<double> sum_h_input_gradient(const Mlp& net, FeatureCombo combo,
                                         int top_k,
                                         const TypeProfile& profile) {
  const int n = profile.n();
  const int fd = feature_dim(combo, n, top_k);
  const std::vector<int> ord = sorted_order_desc(profile.values);

  std::vector<double> rows(static_cast<std::size_t>(n) * fd);
  std::vector<double> jacobians(static_cast<std::size_t>(n) * fd * (n - 1));
  std::vector<double> sorted_others(n - 1);
  for (int rank = 0; rank < n; ++rank) {
    int t = 0;
    for (int k = 0; k < n; ++k) {
      if (k != rank) sorted_others[t++] = profile.values[ord[k]];
    }
    extract_sorted(combo, sorted_others,
                   rows.data() + static_cast<std::size_t>(rank) * fd,
                   jacobians.data() + static_cast<std::size_t>(rank) * fd * (n - 1),
                   top_k);
  }

  BatchTrace trace;
  std::vector<double> y(n);
  forward_batch(net, rows.data(), n, &trace, y.data());
  std::vector<double> dy(n, 1.0);
  std::vector<double> dx(static_cast<std::size_t>(n) * fd);
  backward_batch(net, trace, dy.data(), nullptr, dx.data());

  std::vector<double> grad(n, 0.0);
  for (int rank = 0; rank < n; ++rank) {
    const double* jac =
        jacobians.data() + static_cast<std::size_t>(rank) * fd * (n - 1);
    const double* dxr = dx.data() + static_cast<std::size_t>(rank) * fd;
    for (int t = 0; t < n - 1; ++t) {
      double ds = 0.0;
      for (int f = 0; f < fd; ++f) ds += jac[f * (n - 1) + t] * dxr[f];
      const int sorted_pos = t < rank ? t : t + 1;
      grad[ord[sorted_pos]] += ds;
    }
  }
  return grad;
}

}  // namespace redist
