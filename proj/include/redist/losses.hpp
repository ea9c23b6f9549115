#pragma once

#include <algorithm>
#include <span>
#include <stdexcept>

namespace redist {

// Penalty weights for the unsupervised losses. epsilon softens the objective
// hinge (0.01 worst-case, 1e-4 expectation); up_bound_target is the ratio
// the worst-case objective currently reaches for.
struct LossWeights {
  double epsilon = 0.01;
  double up_bound_target = 1.0;
  // Training-time safety margin on the budget-balance bound: the constraint
  // hinge sits at (n-1+low_bound_margin)*S so optimizer wander stays feasible.
  double low_bound_margin = 0.0;
};

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

// (h - h_manual)^2
inline double supervised_loss(double h, double h_manual) {
  const double d = h - h_manual;
  return d * d;
}

// eps * relu(sumH - (n - alpha)*S)^2 + relu((n-1)*S - sumH)^2
inline double worstcase_loss(double sum_h, double s, int n,
                             const LossWeights& w) {
  const double objective = relu(sum_h - (n - w.up_bound_target) * s);
  const double constraint = relu((n - 1 + w.low_bound_margin) * s - sum_h);
  return w.epsilon * objective * objective + constraint * constraint;
}

// d worstcase_loss / d sumH (hinge corners give subgradient 0).
inline double worstcase_loss_dsum(double sum_h, double s, int n,
                                  const LossWeights& w) {
  const double objective = relu(sum_h - (n - w.up_bound_target) * s);
  const double constraint = relu((n - 1 + w.low_bound_margin) * s - sum_h);
  return 2.0 * w.epsilon * objective - 2.0 * constraint;
}

// eps * relu(sumH - (n-1)*S)^2 + relu((n-1)*S - sumH)^2
inline double expectation_loss(double sum_h, double s, int n,
                               const LossWeights& w) {
  const double target = (n - 1) * s;
  const double objective = relu(sum_h - target);
  const double constraint = relu(target - sum_h);
  return w.epsilon * objective * objective + constraint * constraint;
}

inline double expectation_loss_dsum(double sum_h, double s, int n,
                                    const LossWeights& w) {
  const double target = (n - 1) * s;
  return 2.0 * w.epsilon * relu(sum_h - target) - 2.0 * relu(target - sum_h);
}

// loss_unsupervised * PDF_D(theta'_i)
inline double feed_weighted_loss(double base_loss, double weight) {
  if (weight < 0.0) throw std::invalid_argument("feed weight must be >= 0");
  return base_loss * weight;
}

// min - max of the batch ratio statistics; minimizing maximizes the spread.
inline double adversary_loss(std::span<const double> ratio_stats) {
  if (ratio_stats.empty()) {
    throw std::invalid_argument("adversary_loss needs a nonempty batch");
  }
  const auto [lo, hi] =
      std::minmax_element(ratio_stats.begin(), ratio_stats.end());
  return *lo - *hi;
}

}  // namespace redist
