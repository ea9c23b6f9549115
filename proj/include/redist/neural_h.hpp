#pragma once

#include <span>
#include <vector>

#include "redist/features.hpp"
#include "redist/mechanism.hpp"
#include "redist/net.hpp"

namespace redist {

// h backed by an MLP over feature-reduced, descending-sorted inputs.
class NeuralRedistribution : public RedistributionFn {
 public:
  NeuralRedistribution(Mlp net, FeatureCombo combo, int n, int top_k = 1);

  int arity() const override { return n_ - 1; }
  double evaluate_sorted(std::span<const double> sorted_desc) const override;

  const Mlp& net() const { return net_; }
  Mlp& net() { return net_; }
  FeatureCombo combo() const { return combo_; }
  int n() const { return n_; }
  int top_k() const { return top_k_; }

 private:
  Mlp net_;
  FeatureCombo combo_;
  int n_;
  int top_k_;
};

// Batched sum_i h(theta_{-i}) over a set of profiles, with enough context to
// push per-profile gradients back into the network (and, for the adversary,
// through the feature map into the profiles themselves).
struct SumHBatch {
  int n = 0;
  int feat_dim = 0;
  std::vector<double> rows;      // (profiles*n) x feat_dim feature rows
  std::vector<double> h_values;  // one per row
  std::vector<double> sum_h;     // one per profile
  BatchTrace trace;
  // Per row: sorted position t corresponds to profile index sorted_map[t].
  std::vector<std::vector<int>> row_agent_index;
  std::vector<std::vector<double>> row_sorted_others;
};

// Evaluates sum_i h(theta_{-i}) for every profile in one network pass.
SumHBatch sum_h_batch(const Mlp& net, FeatureCombo combo, int top_k,
                      std::span<const TypeProfile> profiles);

// Backprop d(loss)/d(sumH_p) into parameter gradients. d_sum has one entry
// per profile; each of its n rows receives that entry as output gradient.
void sum_h_backward_params(const Mlp& net, const SumHBatch& batch,
                           std::span<const double> d_sum, Gradients* grads);

// d(sumH)/d(theta) for a single profile in the batch: chains network input
// gradients through the feature Jacobian and the sort permutation.
std::vector<double> sum_h_input_gradient(const Mlp& net, FeatureCombo combo,
                                         int top_k, const TypeProfile& profile);

}  // namespace redist
