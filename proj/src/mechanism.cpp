#include "redist/mechanism.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

namespace redist {

void validate(const TypeProfile& profile) {
  if (profile.n() < 2) {
    throw std::invalid_argument("TypeProfile needs at least 2 agents");
  }
  for (double v : profile.values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("TypeProfile entry outside [0,1]");
    }
  }
}

double RedistributionFn::operator()(std::span<const double> others) const {
  if (arity() != 0 && arity() != static_cast<int>(others.size())) {
    throw std::invalid_argument("redistribution function arity mismatch");
  }
  std::vector<double> sorted(others.begin(), others.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  return evaluate_sorted(sorted);
}

double first_best(const TypeProfile& profile) {
  double sum = 0.0;
  for (double v : profile.values) sum += v;
  return std::max(sum, 1.0);
}

MechanismOutcome outcome(const TypeProfile& profile, const RedistributionFn& h) {
  validate(profile);
  const int n = profile.n();
  if (h.arity() != 0 && h.arity() != n - 1) {
    throw std::invalid_argument("redistribution function arity mismatch");
  }

  double sum = 0.0;
  for (double v : profile.values) sum += v;
  const bool build = sum >= 1.0;  // tie at exactly 1 builds

  MechanismOutcome out;
  out.build = build;
  out.first_best = std::max(sum, 1.0);
  out.receipts.resize(n);
  out.redistributions.resize(n);

  std::vector<double> others(n - 1);
  double sum_h = 0.0;
  for (int i = 0; i < n; ++i) {
    int k = 0;
    for (int j = 0; j < n; ++j) {
      if (j != i) others[k++] = profile.values[j];
    }
    const double hi = h(others);
    out.redistributions[i] = hi;
    sum_h += hi;
    if (build) {
      out.receipts[i] = (sum - profile.values[i]) - hi;
    } else {
      out.receipts[i] = static_cast<double>(n - 1) / n - hi;
    }
  }
  out.welfare = n * out.first_best - sum_h;
  out.ratio_stat = sum_h / out.first_best;
  return out;
}

double efficiency_ratio(const TypeProfile& profile, const RedistributionFn& h) {
  const MechanismOutcome out = outcome(profile, h);
  return profile.n() - out.ratio_stat;
}

double feasibility_gap(const TypeProfile& profile, const RedistributionFn& h) {
  const MechanismOutcome out = outcome(profile, h);
  return out.ratio_stat - (profile.n() - 1);
}

}  // namespace redist
