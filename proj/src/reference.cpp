#include "redist/reference.hpp"

#include <algorithm>

namespace redist {

namespace {
ManualHFn& ao_slot() {
  static ManualHFn fn;
  return fn;
}
}  // namespace

double fallback_h(std::span<const double> others, int n) {
  double sum = 0.0;
  for (double v : others) sum += v;
  return std::max(sum, static_cast<double>(n - 1) / n);
}

double constant_share_h(int n) { return static_cast<double>(n - 1) / n; }

void install_ao(ManualHFn fn) { ao_slot() = std::move(fn); }

void uninstall_ao() { ao_slot() = nullptr; }

bool ao_installed() { return static_cast<bool>(ao_slot()); }

double plugin_ao(std::span<const double> others, int n) {
  if (!ao_installed()) {
    throw ConfigError(
        "AO plug-in not installed; use warm_start=fallback or install the "
        "manual mechanism via install_ao()");
  }
  return ao_slot()(others, n);
}

double ManualRedistribution::evaluate_sorted(
    std::span<const double> sorted_desc) const {
  switch (kind_) {
    case Kind::FallbackMax:
      return fallback_h(sorted_desc, n_);
    case Kind::PluginAO:
      return plugin_ao(sorted_desc, n_);
    case Kind::ConstantShare:
      return constant_share_h(n_);
  }
  return 0.0;
}

}  // namespace redist
