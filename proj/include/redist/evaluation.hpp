#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "redist/mechanism.hpp"
#include "redist/net.hpp"
#include "redist/priors.hpp"

namespace redist {

struct EvalReport {
  int n = 0;
  std::size_t test_size = 0;
  double alpha_estimate = 0.0;        // n - max ratioStat
  double expectation_estimate = 0.0;  // mean ratioStat (compensated sum)
  double min_ratio_stat = 0.0;
  double max_ratio_stat = 0.0;
  std::size_t violation_count = 0;
  double tolerance = 1e-3;  // relative; violating when gap < -tol*(n-1)
  bool infeasible = false;  // alpha only trusted when violation_count == 0
  int bins = 500;
  double hist_lo = 0.0;
  double hist_hi = 0.0;
  std::vector<std::size_t> histogram;
};

// Test sizes from the reference experiments: n=4 -> 10000 ... n=10 -> 100000.
std::size_t default_test_size(int n);

// 50/50 adversarial/random when a trained generator is supplied, else all
// drawn from the prior.
std::vector<TypeProfile> build_test_set(int n, const Prior& prior,
                                        const Mlp* generator, std::size_t size,
                                        RngStream& rng);

EvalReport evaluate(const RedistributionFn& h,
                    std::span<const TypeProfile> test_set, int n,
                    double tolerance = 1e-3, int bins = 500);

nlohmann::json report_to_json(const EvalReport& report);
void write_report(const EvalReport& report, const std::filesystem::path& dir,
                  const std::string& stem);

// Published worst-case ratios (n=4..10) and expectation values (n=3..10)
// alongside our estimate. Rows outside the tabulated range are omitted with
// a note.
std::string comparison_table(const EvalReport& report);
std::string comparison_csv(const EvalReport& report);

}  // namespace redist
