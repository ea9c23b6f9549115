#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "redist/adversary.hpp"
#include "redist/evaluation.hpp"
#include "redist/reference.hpp"

using namespace redist;

TEST_CASE("default test sizes follow the published table") {
  CHECK(default_test_size(4) == 10000);
  CHECK(default_test_size(5) == 20000);
  CHECK(default_test_size(8) == 50000);
  CHECK(default_test_size(10) == 100000);
}

TEST_CASE("build_test_set without a generator is all random") {
  const Prior uniform = parse_prior("uniform");
  RngStream rng(1);
  const auto set = build_test_set(3, uniform, nullptr, 100, rng);
  REQUIRE(set.size() == 100);
  for (const auto& p : set) CHECK_NOTHROW(validate(p));
}

TEST_CASE("build_test_set mixes adversarial and random halves") {
  const Prior uniform = parse_prior("uniform");
  RngStream gen_rng(2);
  Generator gen = make_generator(3, gen_rng);
  RngStream rng(3);
  const auto set = build_test_set(3, uniform, &gen.net, 10, rng);
  REQUIRE(set.size() == 10);
  // The first half came through the sigmoid generator, so strictly inside
  // (0,1); just sanity-check validity.
  for (const auto& p : set) CHECK_NOTHROW(validate(p));
  RngStream rng2(3);
  const auto set2 = build_test_set(3, uniform, &gen.net, 10, rng2);
  for (std::size_t k = 0; k < set.size(); ++k) {
    CHECK(set[k].values == set2[k].values);
  }
}

TEST_CASE("evaluate flags constant-share violations") {
  const Prior uniform = parse_prior("uniform");
  RngStream rng(4);
  const auto set = build_test_set(3, uniform, nullptr, 2000, rng);
  ManualRedistribution share(ManualRedistribution::Kind::ConstantShare, 3);
  const EvalReport report = evaluate(share, set, 3);
  CHECK(report.violation_count > 0);
  CHECK(report.infeasible);
}

TEST_CASE("evaluate finds the fallback worst case at the witness") {
  const Prior uniform = parse_prior("uniform");
  RngStream rng(5);
  auto set = build_test_set(4, uniform, nullptr, 500, rng);
  TypeProfile witness;
  witness.values = {1.0, 0.0, 0.0, 0.0};
  set.push_back(witness);
  ManualRedistribution fallback(ManualRedistribution::Kind::FallbackMax, 4);
  const EvalReport report = evaluate(fallback, set, 4);
  CHECK(report.alpha_estimate == doctest::Approx(0.25));
  CHECK(report.violation_count == 0);
  CHECK(report.alpha_estimate == doctest::Approx(4 - report.max_ratio_stat));
}

TEST_CASE("histogram bins sum to the test size") {
  const Prior uniform = parse_prior("uniform");
  RngStream rng(6);
  const auto set = build_test_set(3, uniform, nullptr, 5000, rng);
  ManualRedistribution fallback(ManualRedistribution::Kind::FallbackMax, 3);
  const EvalReport report = evaluate(fallback, set, 3);
  CHECK(std::accumulate(report.histogram.begin(), report.histogram.end(),
                        std::size_t{0}) == set.size());
}

TEST_CASE("evaluate is permutation invariant up to compensated summation") {
  const Prior uniform = parse_prior("uniform");
  RngStream rng(7);
  auto set = build_test_set(3, uniform, nullptr, 3000, rng);
  ManualRedistribution fallback(ManualRedistribution::Kind::FallbackMax, 3);
  const EvalReport before = evaluate(fallback, set, 3);
  std::reverse(set.begin(), set.end());
  const EvalReport after = evaluate(fallback, set, 3);
  CHECK(before.min_ratio_stat == after.min_ratio_stat);
  CHECK(before.max_ratio_stat == after.max_ratio_stat);
  CHECK(std::abs(before.expectation_estimate - after.expectation_estimate) <
        1e-10 * std::abs(before.expectation_estimate));
}

TEST_CASE("max ratio stat is nondecreasing as the test set grows") {
  const Prior uniform = parse_prior("uniform");
  RngStream rng(8);
  const auto full = build_test_set(3, uniform, nullptr, 2000, rng);
  ManualRedistribution fallback(ManualRedistribution::Kind::FallbackMax, 3);
  double previous = -1e300;
  for (std::size_t size : {500u, 1000u, 2000u}) {
    const std::vector<TypeProfile> subset(full.begin(), full.begin() + size);
    const EvalReport report = evaluate(fallback, subset, 3);
    CHECK(report.max_ratio_stat >= previous);
    previous = report.max_ratio_stat;
  }
}

TEST_CASE("comparison tables embed the published constants") {
  EvalReport report;
  report.n = 8;
  report.alpha_estimate = 0.6;
  report.expectation_estimate = 7.01;
  const std::string table = comparison_table(report);
  CHECK(table.find("0.563") != std::string::npos);  // AO at n=8
  CHECK(table.find("0.654") != std::string::npos);  // published GAN+MLP at n=8
  const std::string csv = comparison_csv(report);
  CHECK(csv.find("7.008") != std::string::npos);  // published uniform at n=8

  EvalReport out_of_range;
  out_of_range.n = 12;
  CHECK(comparison_table(out_of_range).find("row omitted") !=
        std::string::npos);

  EvalReport n3;
  n3.n = 3;
  n3.expectation_estimate = 2.05;
  const std::string t3 = comparison_table(n3);
  CHECK(t3.find("2.079") != std::string::npos);
  CHECK(t3.find("row omitted") != std::string::npos);  // no worst-case row
}
