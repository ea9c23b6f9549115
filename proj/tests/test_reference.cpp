#include <doctest.h>

#include <cmath>
#include <vector>

#include "redist/mechanism.hpp"
#include "redist/reference.hpp"

using namespace redist;

TEST_CASE("fallback_h values") {
  const std::vector<double> zeros{0.0, 0.0};
  CHECK(fallback_h(zeros, 3) == doctest::Approx(2.0 / 3.0));
  const std::vector<double> one{1.0, 0.0};
  CHECK(fallback_h(one, 3) == doctest::Approx(1.0));
  const std::vector<double> small{0.1, 0.1, 0.1};
  CHECK(fallback_h(small, 4) == doctest::Approx(0.75));
}

TEST_CASE("constant_share_h values") {
  CHECK(constant_share_h(3) == doctest::Approx(2.0 / 3.0));
  CHECK(constant_share_h(10) == doctest::Approx(0.9));
}

TEST_CASE("plugin_ao absent raises a config error") {
  uninstall_ao();
  CHECK_FALSE(ao_installed());
  const std::vector<double> others{0.5, 0.5};
  CHECK_THROWS_AS(plugin_ao(others, 3), ConfigError);
}

TEST_CASE("plugin_ao dispatches to the installed evaluator") {
  install_ao([](std::span<const double>, int n) {
    return static_cast<double>(n - 1) / n;
  });
  const std::vector<double> others{0.5, 0.5};
  CHECK(plugin_ao(others, 3) == doctest::Approx(2.0 / 3.0));
  uninstall_ao();
}

namespace {

// Odometer over the grid {0, step, ..., 1}^n.
template <typename Fn>
void for_each_grid_profile(int n, double step, Fn&& fn) {
  const int points = static_cast<int>(std::lround(1.0 / step)) + 1;
  std::vector<int> idx(n, 0);
  TypeProfile profile;
  profile.values.resize(n);
  for (;;) {
    for (int i = 0; i < n; ++i) profile.values[i] = idx[i] * step;
    fn(profile);
    int d = 0;
    while (d < n && ++idx[d] == points) {
      idx[d] = 0;
      ++d;
    }
    if (d == n) break;
  }
}

}  // namespace

TEST_CASE("fallback feasibility on a coarse grid, n = 3 and 4") {
  for (int n : {3, 4}) {
    ManualRedistribution h(ManualRedistribution::Kind::FallbackMax, n);
    double worst = 1.0;
    for_each_grid_profile(n, 0.1, [&](const TypeProfile& p) {
      const double gap = feasibility_gap(p, h);
      CHECK(gap >= -1e-12);
      worst = std::min(worst, efficiency_ratio(p, h));
    });
    CHECK(worst == doctest::Approx(1.0 / n));
  }
}

TEST_CASE("fallback worst-case witness (1,0,...,0)") {
  for (int n : {3, 4, 5}) {
    ManualRedistribution h(ManualRedistribution::Kind::FallbackMax, n);
    TypeProfile witness;
    witness.values.assign(n, 0.0);
    witness.values[0] = 1.0;
    CHECK(efficiency_ratio(witness, h) == doctest::Approx(1.0 / n));
  }
}

TEST_CASE("constant share violates balance on build profiles") {
  ManualRedistribution h(ManualRedistribution::Kind::ConstantShare, 3);
  const TypeProfile build{{0.8, 0.8, 0.8}};
  CHECK(feasibility_gap(build, h) < 0.0);
  const TypeProfile no_build{{0.1, 0.1, 0.1}};
  CHECK(feasibility_gap(no_build, h) == doctest::Approx(0.0));
}
