#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "redist/net.hpp"

using namespace redist;

namespace {

// Scalar objective used by the finite-difference oracle: sum of outputs
// weighted by fixed coefficients.
double objective(const Mlp& net, const std::vector<double>& input,
                 const std::vector<double>& coeffs) {
  const std::vector<double> y = forward(net, input);
  double value = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) value += coeffs[k] * y[k];
  return value;
}

struct CheckResult {
  double max_rel_err_params = 0.0;
  double max_rel_err_input = 0.0;
};

CheckResult finite_difference_check(Mlp& net, const std::vector<double>& input,
                                    const std::vector<double>& coeffs) {
  BatchTrace trace;
  std::vector<double> y(net.output_dim());
  forward_batch(net, input.data(), 1, &trace, y.data());
  Gradients grads = make_zero_grads(net);
  std::vector<double> dx(net.input_dim());
  backward_batch(net, trace, coeffs.data(), &grads, dx.data());

  const double step = 1e-5;
  CheckResult result;
  auto relative = [](double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1.0});
    return std::abs(analytic - numeric) / scale;
  };

  for (int l = 0; l < net.num_layers(); ++l) {
    for (std::size_t k = 0; k < net.weights[l].size(); ++k) {
      const double saved = net.weights[l][k];
      net.weights[l][k] = saved + step;
      const double plus = objective(net, input, coeffs);
      net.weights[l][k] = saved - step;
      const double minus = objective(net, input, coeffs);
      net.weights[l][k] = saved;
      result.max_rel_err_params =
          std::max(result.max_rel_err_params,
                   relative(grads.weights[l][k], (plus - minus) / (2 * step)));
    }
    for (std::size_t k = 0; k < net.biases[l].size(); ++k) {
      const double saved = net.biases[l][k];
      net.biases[l][k] = saved + step;
      const double plus = objective(net, input, coeffs);
      net.biases[l][k] = saved - step;
      const double minus = objective(net, input, coeffs);
      net.biases[l][k] = saved;
      result.max_rel_err_params =
          std::max(result.max_rel_err_params,
                   relative(grads.biases[l][k], (plus - minus) / (2 * step)));
    }
  }

  std::vector<double> perturbed = input;
  for (int k = 0; k < net.input_dim(); ++k) {
    const double saved = perturbed[k];
    perturbed[k] = saved + step;
    const double plus = objective(net, perturbed, coeffs);
    perturbed[k] = saved - step;
    const double minus = objective(net, perturbed, coeffs);
    perturbed[k] = saved;
    result.max_rel_err_input = std::max(
        result.max_rel_err_input, relative(dx[k], (plus - minus) / (2 * step)));
  }
  return result;
}

}  // namespace

TEST_CASE("xavier init: shapes, parameter count, statistics") {
  RngStream rng(1);
  std::vector<int> sizes{3};
  for (int l = 0; l < 6; ++l) sizes.push_back(100);
  sizes.push_back(1);
  const Mlp net = init_xavier(sizes, Activation::Identity, rng);
  CHECK(net.param_count() == 51001);  // 3*100+100 + 5*(100*100+100) + 100+1

  // Empirical variance of a 100x100 layer close to 2/200.
  double mean = 0.0;
  for (double w : net.weights[1]) mean += w;
  mean /= net.weights[1].size();
  double var = 0.0;
  for (double w : net.weights[1]) var += (w - mean) * (w - mean);
  var /= net.weights[1].size();
  CHECK(var == doctest::Approx(0.01).epsilon(0.2));

  double bias_sq = 0.0;
  int bias_count = 0;
  for (const auto& b : net.biases) {
    for (double v : b) {
      bias_sq += v * v;
      ++bias_count;
    }
  }
  CHECK(std::sqrt(bias_sq / bias_count) == doctest::Approx(0.01).epsilon(0.25));

  CHECK_THROWS_AS(init_xavier({3}, Activation::Identity, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(init_xavier({3, 0, 1}, Activation::Identity, rng),
                  std::invalid_argument);
}

TEST_CASE("forward basics") {
  RngStream rng(2);
  Mlp net = init_xavier({2, 4, 1}, Activation::Identity, rng);
  for (auto& w : net.weights) std::fill(w.begin(), w.end(), 0.0);
  for (auto& b : net.biases) std::fill(b.begin(), b.end(), 0.0);
  const std::vector<double> x{0.3, 0.7};
  CHECK(forward(net, x)[0] == doctest::Approx(0.0));

  Mlp affine = init_xavier({1, 1}, Activation::Identity, rng);
  affine.weights[0][0] = 2.5;
  affine.biases[0][0] = -0.5;
  const std::vector<double> x1{0.4};
  CHECK(forward(affine, x1)[0] == doctest::Approx(2.5 * 0.4 - 0.5));

  Mlp sig = affine;
  sig.output_activation = Activation::Sigmoid;
  sig.weights[0][0] = 0.0;
  sig.biases[0][0] = 0.0;
  CHECK(forward(sig, x1)[0] == doctest::Approx(0.5));

  CHECK_THROWS_AS(forward(affine, std::vector<double>{0.1, 0.2}),
                  std::invalid_argument);
}

TEST_CASE("backward matches finite differences on random small nets") {
  RngStream rng(3);
  double worst_params = 0.0, worst_input = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int depth = 1 + static_cast<int>(rng.uniform_int(3));
    std::vector<int> sizes{2 + static_cast<int>(rng.uniform_int(4))};
    for (int l = 0; l < depth; ++l) {
      sizes.push_back(2 + static_cast<int>(rng.uniform_int(9)));
    }
    sizes.push_back(1 + static_cast<int>(rng.uniform_int(3)));
    Mlp net = init_xavier(
        sizes, trial % 2 == 0 ? Activation::Identity : Activation::Sigmoid,
        rng);
    for (int input_trial = 0; input_trial < 10; ++input_trial) {
      std::vector<double> input(net.input_dim());
      for (double& v : input) v = rng.uniform(-1.0, 1.0);
      std::vector<double> coeffs(net.output_dim());
      for (double& c : coeffs) c = rng.uniform(-1.0, 1.0);
      const CheckResult r = finite_difference_check(net, input, coeffs);
      worst_params = std::max(worst_params, r.max_rel_err_params);
      worst_input = std::max(worst_input, r.max_rel_err_input);
    }
  }
  CHECK(worst_params < 1e-4);
  CHECK(worst_input < 1e-4);
}

TEST_CASE("backward edge cases") {
  RngStream rng(4);
  Mlp net = init_xavier({3, 5, 1}, Activation::Identity, rng);
  const std::vector<double> x{0.1, 0.2, 0.3};
  BatchTrace trace;
  std::vector<double> y(1);
  forward_batch(net, x.data(), 1, &trace, y.data());

  // Zero output gradient gives all-zero parameter gradients.
  Gradients grads = make_zero_grads(net);
  const std::vector<double> zero_dy{0.0};
  backward_batch(net, trace, zero_dy.data(), &grads, nullptr);
  for (const auto& layer : grads.weights) {
    for (double g : layer) CHECK(g == 0.0);
  }

  // 1 -> 1 affine: d(output)/d(weight) = input.
  Mlp affine = init_xavier({1, 1}, Activation::Identity, rng);
  const std::vector<double> x1{0.37};
  BatchTrace t1;
  std::vector<double> y1(1);
  forward_batch(affine, x1.data(), 1, &t1, y1.data());
  Gradients g1 = make_zero_grads(affine);
  const std::vector<double> one{1.0};
  backward_batch(affine, t1, one.data(), &g1, nullptr);
  CHECK(g1.weights[0][0] == doctest::Approx(0.37));
  CHECK(g1.biases[0][0] == doctest::Approx(1.0));
}

TEST_CASE("adam schedule and updates") {
  RngStream rng(5);
  Mlp net = init_xavier({1, 1}, Activation::Identity, rng);
  AdamState state = make_adam(net);
  CHECK(state.effective_learning_rate() == doctest::Approx(0.001));
  state.step_count = 250;
  CHECK(state.effective_learning_rate() ==
        doctest::Approx(0.001 * 0.98 * 0.98));
  state.step_count = 0;

  // Zero gradient leaves parameters unchanged.
  const Mlp before = net;
  Gradients zero = make_zero_grads(net);
  adam_step(net, zero, state);
  CHECK(net.weights[0][0] == before.weights[0][0]);
  CHECK(state.step_count == 1);

  // One step with constant gradient moves by about -lr * sign(g).
  Mlp fresh = before;
  AdamState s2 = make_adam(fresh);
  Gradients g = make_zero_grads(fresh);
  g.weights[0][0] = 0.73;
  adam_step(fresh, g, s2);
  CHECK(fresh.weights[0][0] ==
        doctest::Approx(before.weights[0][0] - 0.001).epsilon(1e-4));

  // Non-finite gradients halt training.
  Gradients bad = make_zero_grads(net);
  bad.weights[0][0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(adam_step(net, bad, state), DivergenceError);
}

TEST_CASE("learning rate schedule is a nonincreasing step function") {
  AdamState state;
  state.base_learning_rate = 0.001;
  double previous = 1.0;
  for (long t = 0; t < 1000; t += 50) {
    state.step_count = t;
    const double lr = state.effective_learning_rate();
    CHECK(lr <= previous);
    CHECK(lr == doctest::Approx(0.001 * std::pow(0.98, t / 100)));
    previous = lr;
  }
}

TEST_CASE("deterministic init and training trajectory for equal seeds") {
  RngStream a(99), b(99);
  Mlp na = init_xavier({3, 8, 1}, Activation::Identity, a);
  Mlp nb = init_xavier({3, 8, 1}, Activation::Identity, b);
  CHECK(na.weights == nb.weights);
  AdamState sa = make_adam(na), sb = make_adam(nb);
  for (int step = 0; step < 5; ++step) {
    Gradients ga = make_zero_grads(na), gb = make_zero_grads(nb);
    ga.weights[0][0] = gb.weights[0][0] = 0.1 * (step + 1);
    adam_step(na, ga, sa);
    adam_step(nb, gb, sb);
  }
  CHECK(na.weights == nb.weights);
  CHECK(na.biases == nb.biases);
}

TEST_CASE("checkpoint round trip is bit exact") {
  RngStream rng(6);
  const Mlp net = init_xavier({3, 7, 2}, Activation::Sigmoid, rng);
  const auto path = std::filesystem::temp_directory_path() / "redist_ckpt.json";
  save_checkpoint(net, {{"n", 4}, {"role", "model"}}, path);
  const auto [loaded, meta] = load_checkpoint(path);
  CHECK(loaded.layer_sizes == net.layer_sizes);
  CHECK(loaded.weights == net.weights);
  CHECK(loaded.biases == net.biases);
  CHECK(loaded.output_activation == Activation::Sigmoid);
  CHECK(meta.at("n").get<int>() == 4);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint validation errors") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto bad_version = dir / "redist_bad_version.json";
  {
    std::FILE* f = std::fopen(bad_version.c_str(), "w");
    std::fputs("{\"version\": 99}", f);
    std::fclose(f);
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(bad_version),
                       doctest::Contains("version"), std::runtime_error);
  std::filesystem::remove(bad_version);

  const auto corrupt = dir / "redist_corrupt.json";
  {
    std::FILE* f = std::fopen(corrupt.c_str(), "w");
    std::fputs(
        "{\"version\":1,\"layer_sizes\":[2,3,1],\"output_activation\":"
        "\"identity\",\"weights\":[[1,2,3],[1,2,3]],\"biases\":[[0,0,0],[0]]}",
        f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(corrupt), std::runtime_error);
  std::filesystem::remove(corrupt);

  CHECK_THROWS_AS(load_checkpoint(dir / "redist_missing.json"),
                  std::runtime_error);
}
