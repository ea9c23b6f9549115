#include "redist/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <stdexcept>

namespace redist {

FeatureCombo parse_combo(const std::string& name) {
  if (name == "raw") return FeatureCombo::RawSorted;
  if (name.size() == 2 && name[0] == 'c' && name[1] >= '1' && name[1] <= '8') {
    return static_cast<FeatureCombo>(1 + (name[1] - '1'));
  }
  throw std::invalid_argument("unknown feature combo: " + name);
}

std::string combo_name(FeatureCombo combo) {
  if (combo == FeatureCombo::RawSorted) return "raw";
  return "c" + std::to_string(static_cast<int>(combo));
}

FeatureCombo default_combo(int n) {
  return n >= 5 ? FeatureCombo::C8 : FeatureCombo::RawSorted;
}

int feature_dim(FeatureCombo combo, int n, int top_k) {
  const int extra = top_k - 1;
  switch (combo) {
    case FeatureCombo::RawSorted:
      return n - 1;
    case FeatureCombo::C1:
    case FeatureCombo::C2:
    case FeatureCombo::C3:
    case FeatureCombo::C4:
    case FeatureCombo::C5:
      return 2 + extra;
    default:
      return 3 + extra;
  }
}

std::vector<double> sort_desc(std::vector<double> v) {
  std::sort(v.begin(), v.end(), std::greater<double>());
  return v;
}

double largest_jump(std::span<const double> v) {
  if (v.size() < 2) {
    throw std::invalid_argument("largest_jump needs at least 2 entries");
  }
  std::vector<double> asc(v.begin(), v.end());
  std::sort(asc.begin(), asc.end());
  double best = 0.0;
  for (std::size_t j = 0; j + 1 < asc.size(); ++j) {
    best = std::max(best, asc[j + 1] - asc[j]);
  }
  return best;
}

namespace {

// Population standard deviation of s[lo..m), with optional gradient rows.
double stddev_range(std::span<const double> s, int lo, double* grad_row) {
  const int count = static_cast<int>(s.size()) - lo;
  double mean = 0.0;
  for (int k = lo; k < static_cast<int>(s.size()); ++k) mean += s[k];
  mean /= count;
  double var = 0.0;
  for (int k = lo; k < static_cast<int>(s.size()); ++k) {
    const double d = s[k] - mean;
    var += d * d;
  }
  var /= count;
  const double sd = std::sqrt(var);
  if (grad_row != nullptr && sd > 0.0) {
    for (int k = lo; k < static_cast<int>(s.size()); ++k) {
      grad_row[k] = (s[k] - mean) / (count * sd);
    }
  }
  return sd;
}

// Largest adjacent jump of a descending-sorted vector; k_out gets the first
// index attaining it (jump between s[k] and s[k+1]).
double jump_sorted_desc(std::span<const double> s, int* k_out) {
  double best = s[0] - s[1];
  int best_k = 0;
  for (std::size_t k = 1; k + 1 < s.size(); ++k) {
    const double d = s[k] - s[k + 1];
    if (d > best) {
      best = d;
      best_k = static_cast<int>(k);
    }
  }
  if (k_out != nullptr) *k_out = best_k;
  return best;
}

}  // namespace

void extract_sorted(FeatureCombo combo, std::span<const double> sorted_desc,
                    double* out, double* jacobian, int top_k) {
  const int m = static_cast<int>(sorted_desc.size());
  // Raw passthrough works from a single type; the summary combos need two.
  if (m < 2 && combo != FeatureCombo::RawSorted) {
    throw std::invalid_argument("feature extraction needs at least 2 types");
  }
  if (m < 1) {
    throw std::invalid_argument("feature extraction needs at least 1 type");
  }
  if (top_k < 1 || top_k > m) {
    throw std::invalid_argument("top_k outside [1, n-1]");
  }
  const int dim = [&] {
    switch (combo) {
      case FeatureCombo::RawSorted: return m;
      case FeatureCombo::C1:
      case FeatureCombo::C2:
      case FeatureCombo::C3:
      case FeatureCombo::C4:
      case FeatureCombo::C5: return 2 + top_k - 1;
      default: return 3 + top_k - 1;
    }
  }();
  if (jacobian != nullptr) {
    std::memset(jacobian, 0, sizeof(double) * dim * m);
  }
  auto jrow = [&](int r) { return jacobian + r * m; };

  if (combo == FeatureCombo::RawSorted) {
    for (int k = 0; k < m; ++k) out[k] = sorted_desc[k];
    if (jacobian != nullptr) {
      for (int k = 0; k < m; ++k) jrow(k)[k] = 1.0;
    }
    return;
  }

  const double highest = sorted_desc[0];
  const double lowest = sorted_desc[m - 1];
  double sum_rest = 0.0;
  for (int k = 1; k < m; ++k) sum_rest += sorted_desc[k];

  out[0] = highest;
  if (jacobian != nullptr) jrow(0)[0] = 1.0;

  int row = 1;
  switch (combo) {
    case FeatureCombo::C1: {
      out[row] = sum_rest;
      if (jacobian != nullptr) {
        for (int k = 1; k < m; ++k) jrow(row)[k] = 1.0;
      }
      ++row;
      break;
    }
    case FeatureCombo::C2: {
      out[row] = highest - lowest;
      if (jacobian != nullptr) {
        jrow(row)[0] = 1.0;
        jrow(row)[m - 1] = -1.0;
      }
      ++row;
      break;
    }
    case FeatureCombo::C3: {
      out[row] = stddev_range(sorted_desc, 0,
                              jacobian != nullptr ? jrow(row) : nullptr);
      ++row;
      break;
    }
    case FeatureCombo::C4: {
      out[row] = m == 2 ? 0.0
                        : stddev_range(sorted_desc, 1,
                                       jacobian != nullptr ? jrow(row) : nullptr);
      ++row;
      break;
    }
    case FeatureCombo::C5: {
      int k = 0;
      out[row] = jump_sorted_desc(sorted_desc, &k);
      if (jacobian != nullptr) {
        jrow(row)[k] = 1.0;
        jrow(row)[k + 1] = -1.0;
      }
      ++row;
      break;
    }
    case FeatureCombo::C6: {
      out[row] = lowest;
      if (jacobian != nullptr) jrow(row)[m - 1] = 1.0;
      ++row;
      int k = 0;
      out[row] = jump_sorted_desc(sorted_desc, &k);
      if (jacobian != nullptr) {
        jrow(row)[k] = 1.0;
        jrow(row)[k + 1] = -1.0;
      }
      ++row;
      break;
    }
    case FeatureCombo::C7: {
      out[row] = sum_rest;
      if (jacobian != nullptr) {
        for (int k = 1; k < m; ++k) jrow(row)[k] = 1.0;
      }
      ++row;
      int k = 0;
      out[row] = jump_sorted_desc(sorted_desc, &k);
      if (jacobian != nullptr) {
        jrow(row)[k] = 1.0;
        jrow(row)[k + 1] = -1.0;
      }
      ++row;
      break;
    }
    case FeatureCombo::C8: {
      out[row] = lowest;
      if (jacobian != nullptr) jrow(row)[m - 1] = 1.0;
      ++row;
      out[row] = sum_rest;
      if (jacobian != nullptr) {
        for (int k = 1; k < m; ++k) jrow(row)[k] = 1.0;
      }
      ++row;
      break;
    }
    default:
      break;
  }

  // Extra highest types for top_k > 1.
  for (int t = 1; t < top_k; ++t) {
    out[row] = sorted_desc[t];
    if (jacobian != nullptr) jrow(row)[t] = 1.0;
    ++row;
  }
}

std::vector<double> extract(FeatureCombo combo, std::span<const double> others,
                            int top_k) {
  std::vector<double> sorted(others.begin(), others.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  std::vector<double> out(
      feature_dim(combo, static_cast<int>(others.size()) + 1, top_k));
  extract_sorted(combo, sorted, out.data(), nullptr, top_k);
  return out;
}

}  // namespace redist
