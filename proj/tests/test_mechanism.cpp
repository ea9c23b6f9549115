#include <doctest.h>

#include <algorithm>

#include "redist/mechanism.hpp"
#include "redist/neural_h.hpp"
#include "redist/reference.hpp"
#include "redist/rng.hpp"

using namespace redist;

namespace {

TypeProfile profile(std::initializer_list<double> values) {
  return TypeProfile{std::vector<double>(values)};
}

// Direct per-agent utility sum, the independent route for the welfare
// identity: utility_i = theta_i*[build] + (1/n)*[not build] + receipt_i.
double direct_welfare(const TypeProfile& p, const MechanismOutcome& out) {
  double total = 0.0;
  for (int i = 0; i < p.n(); ++i) {
    const double consumption =
        out.build ? p.values[i] : 1.0 / static_cast<double>(p.n());
    total += consumption + out.receipts[i];
  }
  return total;
}

}  // namespace

TEST_CASE("first_best clamps at 1") {
  CHECK(first_best(profile({0.2, 0.3, 0.1})) == doctest::Approx(1.0));
  CHECK(first_best(profile({0.5, 0.7, 0.4})) == doctest::Approx(1.6));
  CHECK(first_best(profile({0.0, 0.0, 0.0})) == doctest::Approx(1.0));
}

TEST_CASE("validate rejects bad profiles") {
  CHECK_THROWS_AS(validate(profile({0.5})), std::invalid_argument);
  CHECK_THROWS_AS(validate(profile({0.5, 1.2})), std::invalid_argument);
  CHECK_THROWS_AS(validate(profile({-0.1, 0.5})), std::invalid_argument);
  CHECK_NOTHROW(validate(profile({0.0, 1.0})));
}

TEST_CASE("outcome with fallback h, build case") {
  ManualRedistribution h(ManualRedistribution::Kind::FallbackMax, 3);
  const auto out = outcome(profile({1.0, 0.0, 0.0}), h);
  CHECK(out.build);
  CHECK(out.first_best == doctest::Approx(1.0));
  // h(0,0) = 2/3, h(1,0) = 1 twice
  CHECK(out.receipts[0] == doctest::Approx(-2.0 / 3.0));
  CHECK(out.receipts[1] == doctest::Approx(0.0));
  CHECK(out.receipts[2] == doctest::Approx(0.0));
  CHECK(out.welfare == doctest::Approx(1.0 / 3.0));
  CHECK(out.ratio_stat == doctest::Approx(8.0 / 3.0));
}

TEST_CASE("outcome with fallback h, no-build case") {
  ManualRedistribution h(ManualRedistribution::Kind::FallbackMax, 3);
  const auto out = outcome(profile({0.2, 0.3, 0.1}), h);
  CHECK_FALSE(out.build);
  for (double r : out.receipts) CHECK(r == doctest::Approx(0.0));
  CHECK(out.welfare == doctest::Approx(1.0));
}

TEST_CASE("build tie at sum exactly 1 builds") {
  ManualRedistribution h(ManualRedistribution::Kind::ConstantShare, 2);
  const auto out = outcome(profile({0.5, 0.5}), h);
  CHECK(out.build);
}

TEST_CASE("constant-share ratio stat on a no-build profile") {
  ManualRedistribution h(ManualRedistribution::Kind::ConstantShare, 3);
  const auto out = outcome(profile({0.1, 0.2, 0.3}), h);
  CHECK(out.ratio_stat * out.first_best == doctest::Approx(2.0));
}

TEST_CASE("efficiency ratio and feasibility gap") {
  ManualRedistribution fallback(ManualRedistribution::Kind::FallbackMax, 3);
  CHECK(efficiency_ratio(profile({1.0, 0.0, 0.0}), fallback) ==
        doctest::Approx(1.0 / 3.0));
  CHECK(feasibility_gap(profile({1.0, 0.0, 0.0}), fallback) ==
        doctest::Approx(2.0 / 3.0));

  ManualRedistribution share(ManualRedistribution::Kind::ConstantShare, 3);
  CHECK(feasibility_gap(profile({0.2, 0.3, 0.1}), share) ==
        doctest::Approx(0.0));

  struct ZeroH : RedistributionFn {
    double evaluate_sorted(std::span<const double>) const override {
      return 0.0;
    }
  } zero;
  CHECK(feasibility_gap(profile({0.4, 0.4, 0.4}), zero) ==
        doctest::Approx(-2.0));
}

TEST_CASE("arity mismatch is rejected") {
  ManualRedistribution h(ManualRedistribution::Kind::FallbackMax, 4);
  CHECK_THROWS_AS(outcome(profile({0.5, 0.5}), h), std::invalid_argument);
}

TEST_CASE("welfare identity over random profiles and h functions") {
  RngStream rng(20240817);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_int(9));
    TypeProfile p;
    p.values.resize(n);
    for (double& v : p.values) v = rng.uniform01();
    ManualRedistribution h(trial % 2 == 0
                               ? ManualRedistribution::Kind::FallbackMax
                               : ManualRedistribution::Kind::ConstantShare,
                           n);
    const auto out = outcome(p, h);
    CHECK(std::abs(out.welfare - direct_welfare(p, out)) < 1e-9);
    CHECK(n - out.ratio_stat ==
          doctest::Approx(out.welfare / out.first_best).epsilon(1e-9));
  }
}

TEST_CASE("anonymity: permuting a profile permutes receipts identically") {
  ManualRedistribution h(ManualRedistribution::Kind::FallbackMax, 4);
  const TypeProfile p = profile({0.9, 0.1, 0.6, 0.3});
  const auto base = outcome(p, h);
  TypeProfile q = profile({0.3, 0.9, 0.1, 0.6});  // rotation of p
  const auto rotated = outcome(q, h);
  // Sums over differently ordered profiles may differ in the last ulp.
  CHECK(std::abs(rotated.receipts[1] - base.receipts[0]) < 1e-12);
  CHECK(std::abs(rotated.receipts[2] - base.receipts[1]) < 1e-12);
  CHECK(std::abs(rotated.receipts[3] - base.receipts[2]) < 1e-12);
  CHECK(std::abs(rotated.receipts[0] - base.receipts[3]) < 1e-12);
  CHECK(rotated.welfare == doctest::Approx(base.welfare).epsilon(1e-12));
}

TEST_CASE("h ignores the agent's own type") {
  ManualRedistribution h(ManualRedistribution::Kind::FallbackMax, 3);
  const auto a = outcome(profile({0.1, 0.4, 0.7}), h);
  const auto b = outcome(profile({0.9, 0.4, 0.7}), h);
  CHECK(a.redistributions[0] == b.redistributions[0]);
}
