#pragma once

#include <span>
#include <string>
#include <vector>

namespace redist {

// Input reductions for the h-network. C1-C5 map theta_{-i} to 2 features,
// C6-C8 to 3; RawSorted passes the sorted vector through unchanged.
enum class FeatureCombo {
  RawSorted,
  C1,  // highest, sum of the others
  C2,  // highest, highest - lowest
  C3,  // highest, stddev of all
  C4,  // highest, stddev of the others
  C5,  // highest, largest adjacent jump
  C6,  // highest, lowest, largest adjacent jump
  C7,  // highest, sum of the others, largest adjacent jump
  C8,  // highest, lowest, sum of the others
};

FeatureCombo parse_combo(const std::string& name);  // "raw", "c1".."c8"
std::string combo_name(FeatureCombo combo);

// Default per the observed results: C8 for n >= 5, RawSorted below.
FeatureCombo default_combo(int n);

// Feature count for (n-1)-length inputs. top_k appends the 2nd..k-th highest
// types as extra features (top_k = 1 is the plain combo).
int feature_dim(FeatureCombo combo, int n, int top_k = 1);

std::vector<double> sort_desc(std::vector<double> v);

// Max over adjacent pairs of the ascending-sorted vector of (next - current).
// Throws for fewer than 2 entries.
double largest_jump(std::span<const double> v);

// Extracts features from the descending-sorted other-agent types. `out` must
// hold feature_dim values. If `jacobian` is non-null it receives the
// (featDim x m) row-major derivative of the features w.r.t. the sorted input;
// subgradients at ties go to the first index in descending order.
void extract_sorted(FeatureCombo combo, std::span<const double> sorted_desc,
                    double* out, double* jacobian = nullptr, int top_k = 1);

// Convenience: sorts, then extracts.
std::vector<double> extract(FeatureCombo combo, std::span<const double> others,
                            int top_k = 1);

}  // namespace redist
