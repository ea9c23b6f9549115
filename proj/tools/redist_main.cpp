#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "redist/adversary.hpp"
#include "redist/evaluation.hpp"
#include "redist/neural_h.hpp"
#include "redist/reference.hpp"
#include "redist/training.hpp"

namespace fs = std::filesystem;
using namespace redist;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitDivergence = 2;
constexpr int kExitInfeasible = 3;

TrainConfig load_with_overrides(const std::string& config_path,
                                const std::vector<std::string>& overrides) {
  TrainConfig config = load_config(config_path);
  for (const std::string& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("override must be key=value, got: " + item);
    }
    apply_override(config, item.substr(0, eq), item.substr(eq + 1));
  }
  return config;
}

int cmd_train(const std::string& config_path, std::string out_dir,
              const std::vector<std::string>& overrides) {
  const TrainConfig config = load_with_overrides(config_path, overrides);
  if (out_dir.empty()) {
    out_dir = "runs/" +
              std::string(config.objective == Objective::WorstCase
                              ? "worstcase"
                              : "expectation") +
              "_n" + std::to_string(config.n) + "_seed" +
              std::to_string(config.seed);
  }
  const TrainReport report =
      config.objective == Objective::WorstCase
          ? train_worstcase(config, out_dir)
          : train_expectation(config, out_dir);
  std::cout << "run_dir=" << out_dir << " steps=" << report.steps_run
            << " alpha=" << report.achieved_alpha
            << " E=" << report.achieved_expectation
            << " violations=" << report.violation_count
            << " wall_s=" << report.wall_seconds << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string generator;
  std::string out_dir;
  std::string prior_text;
  std::size_t size = 0;
  double tolerance = 1e-3;
  std::uint64_t seed = 1;
};

// Shared by eval and compare.
EvalReport run_eval(const EvalArgs& args, NeuralRedistribution** h_out,
                    nlohmann::json* meta_out) {
  auto [net, meta] = load_checkpoint(args.checkpoint);
  const int n = meta.at("n").get<int>();
  const FeatureCombo combo = parse_combo(meta.at("features").get<std::string>());
  const int top_k = meta.value("top_k", 1);
  if (net.input_dim() != feature_dim(combo, n, top_k)) {
    throw ConfigError("checkpoint input dimension does not match its metadata");
  }
  static NeuralRedistribution* h = nullptr;
  delete h;
  h = new NeuralRedistribution(std::move(net), combo, n, top_k);
  if (h_out != nullptr) *h_out = h;
  if (meta_out != nullptr) *meta_out = meta;

  const Prior prior = parse_prior(
      args.prior_text.empty() ? meta.value("prior", std::string("uniform"))
                              : args.prior_text);
  const std::size_t size = args.size > 0 ? args.size : default_test_size(n);

  Mlp generator;
  const Mlp* generator_ptr = nullptr;
  if (!args.generator.empty()) {
    auto [gnet, gmeta] = load_checkpoint(args.generator);
    if (gnet.input_dim() != n || gnet.output_dim() != n) {
      throw ConfigError("generator checkpoint does not match n=" +
                        std::to_string(n));
    }
    generator = std::move(gnet);
    generator_ptr = &generator;
  }

  RngStream rng(args.seed, 1000);
  const std::vector<TypeProfile> test_set =
      build_test_set(n, prior, generator_ptr, size, rng);
  return evaluate(*h, test_set, n, args.tolerance);
}

int cmd_eval(const EvalArgs& args) {
  const EvalReport report = run_eval(args, nullptr, nullptr);
  const fs::path out_dir = args.out_dir.empty()
                               ? fs::path(args.checkpoint).parent_path() / "eval"
                               : fs::path(args.out_dir);
  write_report(report, out_dir, "report");
  std::cout << "alpha=" << report.alpha_estimate
            << " violations=" << report.violation_count
            << " E=" << report.expectation_estimate
            << " min_ratio=" << report.min_ratio_stat
            << " max_ratio=" << report.max_ratio_stat
            << (report.infeasible ? " INFEASIBLE" : "") << "\n";
  return report.infeasible ? kExitInfeasible : kExitOk;
}

int cmd_compare(const EvalArgs& args) {
  const EvalReport report = run_eval(args, nullptr, nullptr);
  std::cout << comparison_table(report);
  const fs::path out_dir = args.out_dir.empty()
                               ? fs::path(args.checkpoint).parent_path() / "eval"
                               : fs::path(args.out_dir);
  fs::create_directories(out_dir);
  std::ofstream csv(out_dir / "comparison.csv");
  csv << comparison_csv(report);
  write_report(report, out_dir, "report");
  return report.infeasible ? kExitInfeasible : kExitOk;
}

int cmd_gen_data(int n, const std::string& prior_text, std::size_t count,
                 std::uint64_t seed, const std::string& out_path) {
  const Prior prior = parse_prior(prior_text);
  RngStream rng(seed, 2000);
  std::ofstream out(out_path);
  if (!out) throw ConfigError("cannot open output file: " + out_path);
  out << std::setprecision(17);
  for (std::size_t k = 0; k < count; ++k) {
    const TypeProfile p = sample_profile(prior, n, rng);
    for (int i = 0; i < n; ++i) {
      out << p.values[i] << (i + 1 < n ? ',' : '\n');
    }
  }
  std::cout << "wrote " << count << " profiles to " << out_path << "\n";
  return kExitOk;
}

// Finite differences are meaningless when a hidden unit sits within the probe
// step of its ReLU kink; callers skip such inputs.
double min_abs_preactivation(const Mlp& net, const BatchTrace& trace) {
  double closest = 1e300;
  for (int l = 0; l + 1 < net.num_layers(); ++l) {
    const int in = net.layer_sizes[l];
    const int out = net.layer_sizes[l + 1];
    for (int o = 0; o < out; ++o) {
      double z = net.biases[l][o];
      for (int i = 0; i < in; ++i) {
        z += net.weights[l][o * in + i] * trace.activations[l][i];
      }
      closest = std::min(closest, std::abs(z));
    }
  }
  return closest;
}

int cmd_grad_check(std::uint64_t seed) {
  RngStream rng(seed, 3000);
  double worst = 0.0;
  auto relative = [](double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1.0});
    return std::abs(analytic - numeric) / scale;
  };
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> sizes{2 + static_cast<int>(rng.uniform_int(4))};
    const int depth = 1 + static_cast<int>(rng.uniform_int(3));
    for (int l = 0; l < depth; ++l) {
      sizes.push_back(2 + static_cast<int>(rng.uniform_int(9)));
    }
    sizes.push_back(1);
    Mlp net = init_xavier(
        sizes, trial % 2 == 0 ? Activation::Identity : Activation::Sigmoid,
        rng);
    int accepted = 0;
    for (int attempt = 0; accepted < 10 && attempt < 1000; ++attempt) {
      std::vector<double> input(net.input_dim());
      for (double& v : input) v = rng.uniform(-1.0, 1.0);

      BatchTrace trace;
      std::vector<double> y(1);
      forward_batch(net, input.data(), 1, &trace, y.data());
      if (min_abs_preactivation(net, trace) < 1e-3) continue;
      ++accepted;
      Gradients grads = make_zero_grads(net);
      std::vector<double> dx(net.input_dim());
      const std::vector<double> dy{1.0};
      backward_batch(net, trace, dy.data(), &grads, dx.data());

      const double step = 1e-5;
      for (int l = 0; l < net.num_layers(); ++l) {
        for (std::size_t k = 0; k < net.weights[l].size(); ++k) {
          const double saved = net.weights[l][k];
          net.weights[l][k] = saved + step;
          const double plus = forward(net, input)[0];
          net.weights[l][k] = saved - step;
          const double minus = forward(net, input)[0];
          net.weights[l][k] = saved;
          worst = std::max(
              worst, relative(grads.weights[l][k], (plus - minus) / (2 * step)));
        }
      }
      for (int k = 0; k < net.input_dim(); ++k) {
        std::vector<double> perturbed = input;
        perturbed[k] = input[k] + step;
        const double plus = forward(net, perturbed)[0];
        perturbed[k] = input[k] - step;
        const double minus = forward(net, perturbed)[0];
        worst = std::max(worst, relative(dx[k], (plus - minus) / (2 * step)));
      }
    }
  }
  std::cout << "max relative error = " << worst << "\n";
  if (worst >= 1e-4) {
    std::cerr << "gradient check FAILED (threshold 1e-4)\n";
    return kExitDivergence;
  }
  return kExitOk;
}

int cmd_contrast(const std::string& config_path, std::string out_dir,
                 const std::vector<std::string>& overrides) {
  const TrainConfig config = load_with_overrides(config_path, overrides);
  if (out_dir.empty()) {
    out_dir = "runs/contrast_n" + std::to_string(config.n) + "_seed" +
              std::to_string(config.seed);
  }
  const ContrastReport report = run_contrast(config, out_dir);
  std::cout << "set_a: ratio in [" << report.set_a_min << ", "
            << report.set_a_max << "], violations=" << report.set_a_violations
            << "\n";
  std::cout << "set_b: ratio in [" << report.set_b_min << ", "
            << report.set_b_max << "], violations=" << report.set_b_violations
            << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VCG redistribution mechanisms for the public project problem"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::vector<std::string> overrides;

  auto* train = app.add_subcommand("train", "train a redistribution mechanism");
  train->add_option("-c,--config", config_path, "config file (key=value)")
      ->required();
  train->add_option("-o,--out", out_dir, "run directory");
  train->add_option("--set", overrides, "config override key=value");

  EvalArgs eval_args;
  auto add_eval_options = [&](CLI::App* cmd) {
    cmd->add_option("checkpoint", eval_args.checkpoint, "model checkpoint")
        ->required();
    cmd->add_option("-g,--generator", eval_args.generator,
                    "adversary checkpoint for the mixed test set");
    cmd->add_option("--size", eval_args.size,
                    "test set size (default from the published table)");
    cmd->add_option("--tolerance", eval_args.tolerance,
                    "relative violation tolerance");
    cmd->add_option("--prior", eval_args.prior_text,
                    "prior override (uniform | normal:m:s)");
    cmd->add_option("--seed", eval_args.seed, "test data seed");
    cmd->add_option("-o,--out", eval_args.out_dir, "report directory");
  };
  auto* eval = app.add_subcommand("eval", "audit a trained mechanism");
  add_eval_options(eval);
  auto* compare =
      app.add_subcommand("compare", "audit and compare with published results");
  add_eval_options(compare);

  int gen_n = 4;
  std::string gen_prior = "uniform";
  std::size_t gen_count = 1000;
  std::uint64_t gen_seed = 1;
  std::string gen_out = "profiles.csv";
  auto* gen_data = app.add_subcommand("gen-data", "sample type profiles to CSV");
  gen_data->add_option("--n", gen_n, "agent count")->required();
  gen_data->add_option("--prior", gen_prior, "prior");
  gen_data->add_option("--count", gen_count, "number of profiles");
  gen_data->add_option("--seed", gen_seed, "seed");
  gen_data->add_option("-o,--out", gen_out, "output CSV path");

  std::uint64_t check_seed = 1;
  auto* grad_check =
      app.add_subcommand("grad-check", "verify gradients by finite differences");
  grad_check->add_option("--seed", check_seed, "seed");

  auto* contrast = app.add_subcommand(
      "contrast", "random-only training vs adversarial audit");
  contrast->add_option("-c,--config", config_path, "config file")->required();
  contrast->add_option("-o,--out", out_dir, "run directory");
  contrast->add_option("--set", overrides, "config override key=value");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(config_path, out_dir, overrides);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (compare->parsed()) return cmd_compare(eval_args);
    if (gen_data->parsed()) {
      return cmd_gen_data(gen_n, gen_prior, gen_count, gen_seed, gen_out);
    }
    if (grad_check->parsed()) return cmd_grad_check(check_seed);
    if (contrast->parsed()) return cmd_contrast(config_path, out_dir, overrides);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
