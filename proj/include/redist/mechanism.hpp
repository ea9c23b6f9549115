#pragma once

#include <span>
#include <vector>

namespace redist {

// Reported valuations of all n agents, each in [0,1]; project cost is 1.
struct TypeProfile {
  std::vector<double> values;

  int n() const { return static_cast<int>(values.size()); }
};

// Throws std::invalid_argument if the profile breaks the domain invariants.
void validate(const TypeProfile& profile);

// Redistribution function h. Evaluators see the other agents' types sorted
// descending, which makes anonymity structural: h depends only on the
// multiset of inputs.
class RedistributionFn {
 public:
  virtual ~RedistributionFn() = default;

  // Expected input length, or 0 for arity-agnostic evaluators.
  virtual int arity() const { return 0; }

  virtual double evaluate_sorted(std::span<const double> sorted_desc) const = 0;

  // Sorts `others` descending, then evaluates.
  double operator()(std::span<const double> others) const;
};

struct MechanismOutcome {
  bool build = false;
  std::vector<double> receipts;        // positive = agent receives
  std::vector<double> redistributions; // h(theta_{-i}) per agent
  double welfare = 0.0;
  double first_best = 0.0;             // S(theta)
  double ratio_stat = 0.0;             // sum_i h(theta_{-i}) / S(theta)
};

// S(theta) = max{sum_i theta_i, 1}, the first-best total utility.
double first_best(const TypeProfile& profile);

// Full VCG redistribution outcome: build iff sum >= 1, receipts per the
// build / no-build payment rules, welfare = n*S - sum_i h(theta_{-i}).
MechanismOutcome outcome(const TypeProfile& profile, const RedistributionFn& h);

// r = n - sum_i h(theta_{-i}) / S(theta); equals welfare / first_best.
double efficiency_ratio(const TypeProfile& profile, const RedistributionFn& h);

// ratio_stat - (n-1); nonnegative iff weakly budget-balanced on this profile.
double feasibility_gap(const TypeProfile& profile, const RedistributionFn& h);

}  // namespace redist
