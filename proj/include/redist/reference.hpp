#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>

#include "redist/mechanism.hpp"

namespace redist {

// Raised for bad configuration (missing plug-in, unknown key, ...).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// max(sum(others), (n-1)/n). Weakly budget-balanced on every profile, with
// worst-case ratio 1/n at (1,0,...,0). Default warm-start target.
double fallback_h(std::span<const double> others, int n);

// (n-1)/n regardless of input. Violates budget balance whenever the profile
// sums above 1; kept as a negative-test fixture only.
double constant_share_h(int n);

// Optional plug-in slot for an externally supplied manual mechanism (the
// asymptotically optimal one). Absent by default.
using ManualHFn = std::function<double(std::span<const double> others, int n)>;
void install_ao(ManualHFn fn);
void uninstall_ao();
bool ao_installed();

// Throws ConfigError directing users to the fallback when no plug-in is set.
double plugin_ao(std::span<const double> others, int n);

class ManualRedistribution : public RedistributionFn {
 public:
  enum class Kind { FallbackMax, PluginAO, ConstantShare };

  ManualRedistribution(Kind kind, int n) : kind_(kind), n_(n) {}

  int arity() const override { return n_ - 1; }
  double evaluate_sorted(std::span<const double> sorted_desc) const override;

  Kind kind() const { return kind_; }

 private:
  Kind kind_;
  int n_;
};

}  // namespace redist
