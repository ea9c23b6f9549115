#include "redist/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "redist/evaluation.hpp"
#include "redist/neural_h.hpp"
#include "redist/reference.hpp"

namespace redist {

namespace {

// Fixed sub-stream ids; every run derives all randomness from config.seed.
enum StreamId : std::uint64_t {
  kHInit = 10,
  kGenInit = 11,
  kWarmData = 12,
  kWarmVal = 13,
  kTrainData = 20,
  kFeed = 21,
  kGenNoise = 22,
  kValData = 23,
  kValNoise = 24,
  kReportEval = 30,
  kContrastA = 40,
  kContrastB = 41,
};

std::string objective_name(Objective o) {
  return o == Objective::WorstCase ? "worstcase" : "expectation";
}

std::string warm_start_name(WarmStartKind k) {
  switch (k) {
    case WarmStartKind::Fallback: return "fallback";
    case WarmStartKind::Ao: return "ao";
    default: return "none";
  }
}

}  // namespace

void apply_override(TrainConfig& config, const std::string& key,
                    const std::string& value) {
  try {
    if (key == "seed") {
      config.seed = std::stoull(value);
    } else if (key == "n") {
      config.n = std::stoi(value);
    } else if (key == "objective") {
      if (value == "worstcase") {
        config.objective = Objective::WorstCase;
      } else if (value == "expectation") {
        config.objective = Objective::Expectation;
      } else {
        throw ConfigError("bad value for objective: " + value);
      }
    } else if (key == "prior") {
      const Prior::PdfBase base = config.prior.pdf_base;
      config.prior = parse_prior(value);
      config.prior.pdf_base = base;
    } else if (key == "pdf_base") {
      if (value == "e") {
        config.prior.pdf_base = Prior::PdfBase::E;
      } else if (value == "10") {
        config.prior.pdf_base = Prior::PdfBase::Ten;
      } else {
        throw ConfigError("bad value for pdf_base: " + value);
      }
    } else if (key == "features") {
      if (value == "auto") {
        config.features_auto = true;
      } else {
        config.features_auto = false;
        config.features = parse_combo(value);
      }
    } else if (key == "top_k") {
      config.top_k = std::stoi(value);
    } else if (key == "batch_size") {
      config.batch_size = std::stoi(value);
    } else if (key == "epsilon") {
      config.epsilon = value == "auto" ? -1.0 : std::stod(value);
    } else if (key == "alpha_target_init") {
      config.alpha_target_init = value == "auto" ? -1.0 : std::stod(value);
    } else if (key == "alpha_target_step") {
      config.alpha_target_step = std::stod(value);
    } else if (key == "curriculum_every") {
      config.curriculum_every = std::stoi(value);
    } else if (key == "adv_ratio") {
      config.adv_ratio = std::stoi(value);
    } else if (key == "warm_start") {
      if (value == "fallback") {
        config.warm_start = WarmStartKind::Fallback;
      } else if (value == "ao") {
        config.warm_start = WarmStartKind::Ao;
      } else if (value == "none") {
        config.warm_start = WarmStartKind::None;
      } else {
        throw ConfigError("bad value for warm_start: " + value);
      }
    } else if (key == "warm_max_steps") {
      config.warm_max_steps = std::stoi(value);
    } else if (key == "max_steps") {
      config.max_steps = std::stol(value);
    } else if (key == "checkpoint_every") {
      config.checkpoint_every = std::stoi(value);
    } else if (key == "feed") {
      if (value == "on") {
        config.feed = true;
      } else if (value == "off") {
        config.feed = false;
      } else {
        throw ConfigError("bad value for feed: " + value);
      }
    } else if (key == "val_every") {
      config.val_every = std::stoi(value);
    } else if (key == "val_size") {
      config.val_size = std::stoi(value);
    } else if (key == "workers") {
      config.workers = std::stoi(value);
    } else if (key == "learning_rate") {
      config.learning_rate = std::stod(value);
    } else if (key == "lr_decay") {
      config.lr_decay = std::stod(value);
    } else if (key == "lr_decay_every") {
      config.lr_decay_every = std::stoi(value);
    } else if (key == "contrast_adv_steps") {
      config.contrast_adv_steps = std::stoi(value);
    } else if (key == "hidden_layers") {
      config.hidden_layers = std::stoi(value);
    } else if (key == "hidden_width") {
      config.hidden_width = std::stoi(value);
    } else {
      throw ConfigError("unknown config key: " + key);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError("bad value for " + key + ": " + value + " (" + e.what() +
                      ")");
  } catch (const std::out_of_range&) {
    throw ConfigError("value out of range for " + key + ": " + value);
  }
}

TrainConfig parse_config(std::istream& in, const std::string& source_name) {
  TrainConfig config;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source_name + ":" + std::to_string(line_no) +
                        ": expected key=value, got: " + line);
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    apply_override(config, key, value);
    seen.insert(key);
  }
  for (const char* required : {"n", "objective", "prior"}) {
    if (!seen.count(required)) {
      throw ConfigError(source_name + ": missing required key: " +
                        std::string(required));
    }
  }
  if (config.n < 2) throw ConfigError("n must be >= 2");
  if (config.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (config.max_steps < 0) throw ConfigError("max_steps must be >= 0");
  return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  return parse_config(in, path.string());
}

std::string config_to_text(const TrainConfig& c) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "seed = " << c.seed << "\n";
  out << "n = " << c.n << "\n";
  out << "objective = " << objective_name(c.objective) << "\n";
  out << "prior = " << prior_name(c.prior) << "\n";
  out << "pdf_base = "
      << (c.prior.pdf_base == Prior::PdfBase::Ten ? "10" : "e") << "\n";
  out << "features = "
      << (c.features_auto ? std::string("auto") : combo_name(c.features))
      << "\n";
  out << "top_k = " << c.top_k << "\n";
  out << "batch_size = " << c.batch_size << "\n";
  out << "epsilon = ";
  if (c.epsilon > 0.0) {
    out << c.epsilon << "\n";
  } else {
    out << "auto\n";
  }
  out << "alpha_target_init = ";
  if (c.alpha_target_init > 0.0) {
    out << c.alpha_target_init << "\n";
  } else {
    out << "auto\n";
  }
  out << "alpha_target_step = " << c.alpha_target_step << "\n";
  out << "curriculum_every = " << c.curriculum_every << "\n";
  out << "adv_ratio = " << c.adv_ratio << "\n";
  out << "warm_start = " << warm_start_name(c.warm_start) << "\n";
  out << "warm_max_steps = " << c.warm_max_steps << "\n";
  out << "max_steps = " << c.max_steps << "\n";
  out << "checkpoint_every = " << c.checkpoint_every << "\n";
  out << "feed = " << (c.feed ? "on" : "off") << "\n";
  out << "val_every = " << c.val_every << "\n";
  out << "val_size = " << c.val_size << "\n";
  out << "workers = " << c.workers << "\n";
  out << "learning_rate = " << c.learning_rate << "\n";
  out << "lr_decay = " << c.lr_decay << "\n";
  out << "lr_decay_every = " << c.lr_decay_every << "\n";
  out << "contrast_adv_steps = " << c.contrast_adv_steps << "\n";
  out << "hidden_layers = " << c.hidden_layers << "\n";
  out << "hidden_width = " << c.hidden_width << "\n";
  return out.str();
}

namespace {

std::vector<int> h_layer_sizes(const TrainConfig& config) {
  std::vector<int> sizes;
  sizes.push_back(feature_dim(config.effective_combo(), config.n, config.top_k));
  for (int l = 0; l < config.hidden_layers; ++l) {
    sizes.push_back(config.hidden_width);
  }
  sizes.push_back(1);
  return sizes;
}

double manual_target(const TrainConfig& config,
                     std::span<const double> sorted_others) {
  if (config.warm_start == WarmStartKind::Ao) {
    return plugin_ao(sorted_others, config.n);
  }
  return fallback_h(sorted_others, config.n);
}

// Feature rows plus the manual targets for a set of profiles.
void supervised_rows(const TrainConfig& config, FeatureCombo combo, int fd,
                     std::span<const TypeProfile> profiles,
                     std::vector<double>& rows, std::vector<double>& targets) {
  const int n = config.n;
  rows.resize(profiles.size() * n * fd);
  targets.resize(profiles.size() * n);
  std::vector<double> sorted_others(n - 1);
  std::size_t row = 0;
  for (const TypeProfile& profile : profiles) {
    std::vector<double> sorted = sort_desc(profile.values);
    for (int rank = 0; rank < n; ++rank) {
      int t = 0;
      for (int k = 0; k < n; ++k) {
        if (k != rank) sorted_others[t++] = sorted[k];
      }
      extract_sorted(combo, sorted_others, rows.data() + row * fd, nullptr,
                     config.top_k);
      targets[row] = manual_target(config, sorted_others);
      ++row;
    }
  }
}

nlohmann::json checkpoint_meta(const TrainConfig& config,
                               const std::string& role) {
  return nlohmann::json{
      {"n", config.n},
      {"features", combo_name(config.effective_combo())},
      {"top_k", config.top_k},
      {"prior", prior_name(config.prior)},
      {"objective", objective_name(config.objective)},
      {"seed", config.seed},
      {"role", role},
      {"format", "redist-checkpoint"},
  };
}

void write_curve(const std::vector<CurveRow>& curve,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "step,train_loss,val_loss,alpha_target,violations\n";
  out << std::setprecision(17);
  for (const CurveRow& row : curve) {
    out << row.step << "," << row.train_loss << "," << row.val_loss << ","
        << row.alpha_target << "," << row.violations << "\n";
  }
}

struct RunLog {
  std::ofstream out;

  explicit RunLog(const std::filesystem::path& path) : out(path) {}

  void line(const std::string& text) {
    out << text << "\n";
    out.flush();
  }
};

void snapshot_config(const TrainConfig& config,
                     const std::filesystem::path& run_dir) {
  std::filesystem::create_directories(run_dir);
  std::ofstream out(run_dir / "config.txt");
  out << config_to_text(config);
}

}  // namespace

Mlp warm_start(const TrainConfig& config, WarmStartStats* stats) {
  RngStream init_rng(config.seed, kHInit);
  Mlp net = init_xavier(h_layer_sizes(config), Activation::Identity, init_rng);
  if (stats != nullptr) {
    stats->steps = 0;
    stats->final_mse = 0.0;
  }
  if (config.warm_start == WarmStartKind::None) return net;

  const FeatureCombo combo = config.effective_combo();
  const int fd = feature_dim(combo, config.n, config.top_k);
  const int n = config.n;
  RngStream data_rng(config.seed, kWarmData);
  RngStream val_rng(config.seed, kWarmVal);
  AdamState opt = make_adam(net, config.learning_rate, config.lr_decay,
                            config.lr_decay_every);

  // Held-out validation rows for the stop rule.
  const int val_profiles = (2000 + n - 1) / n;
  std::vector<TypeProfile> val_set;
  val_set.reserve(val_profiles);
  for (int k = 0; k < val_profiles; ++k) {
    val_set.push_back(sample_profile(config.prior, n, val_rng));
  }
  std::vector<double> val_rows, val_targets;
  supervised_rows(config, combo, fd, val_set, val_rows, val_targets);

  std::vector<TypeProfile> batch(config.batch_size);
  std::vector<double> rows, targets, y, dy;
  Gradients grads = make_zero_grads(net);
  long step = 0;
  double val_mse = 0.0;
  while (step < config.warm_max_steps) {
    ++step;
    for (auto& p : batch) p = sample_profile(config.prior, n, data_rng);
    supervised_rows(config, combo, fd, batch, rows, targets);
    const int row_count = static_cast<int>(targets.size());
    y.resize(row_count);
    BatchTrace trace;
    forward_batch(net, rows.data(), row_count, &trace, y.data());
    dy.resize(row_count);
    for (int r = 0; r < row_count; ++r) {
      dy[r] = 2.0 * (y[r] - targets[r]) / row_count;
    }
    grads.zero();
    backward_batch(net, trace, dy.data(), &grads, nullptr);
    adam_step(net, grads, opt);

    if (step % config.val_every == 0) {
      const int vr = static_cast<int>(val_targets.size());
      std::vector<double> vy(vr);
      forward_batch(net, val_rows.data(), vr, nullptr, vy.data());
      val_mse = 0.0;
      for (int r = 0; r < vr; ++r) {
        val_mse += supervised_loss(vy[r], val_targets[r]);
      }
      val_mse /= vr;
      if (!std::isfinite(val_mse)) {
        throw DivergenceError("warm start diverged (non-finite loss)");
      }
      if (val_mse < 1e-5) break;
    }
  }
  if (stats != nullptr) {
    stats->steps = step;
    stats->final_mse = val_mse;
  }
  return net;
}

namespace {

struct ValStats {
  double loss = 0.0;
  std::size_t violations = 0;       // gap < -1e-3 * (n-1)
  double min_ratio = 0.0;           // min over val of n - ratioStat
  double max_constraint_violation = 0.0;  // max of (n-1) - ratioStat, clamped
};

// Deterministic corner profiles (constant levels and spikes) covering the
// regions random sampling rarely reaches, such as near-zero-sum profiles.
std::vector<TypeProfile> make_stress_profiles(int n) {
  std::vector<TypeProfile> stress;
  for (int c = 0; c <= 20; ++c) {
    TypeProfile p;
    p.values.assign(n, c * 0.05);
    stress.push_back(std::move(p));
  }
  for (int ones = 1; ones <= n; ++ones) {
    TypeProfile p;
    p.values.assign(n, 0.0);
    std::fill(p.values.begin(), p.values.begin() + ones, 1.0);
    stress.push_back(std::move(p));
  }
  return stress;
}

ValStats worstcase_val_stats(const Mlp& net, FeatureCombo combo, int top_k,
                             std::span<const TypeProfile> val_set, int n,
                             const LossWeights& w) {
  ValStats stats;
  const SumHBatch batch = sum_h_batch(net, combo, top_k, val_set);
  double min_r = std::numeric_limits<double>::infinity();
  double loss_sum = 0.0;
  for (std::size_t p = 0; p < val_set.size(); ++p) {
    double sum = 0.0;
    for (double v : val_set[p].values) sum += v;
    const double s = std::max(sum, 1.0);
    const double ratio = batch.sum_h[p] / s;
    loss_sum += worstcase_loss(batch.sum_h[p], s, n, w);
    min_r = std::min(min_r, n - ratio);
    const double violation = (n - 1) - ratio;
    stats.max_constraint_violation =
        std::max(stats.max_constraint_violation, violation);
    if (violation > 1e-3 * (n - 1)) ++stats.violations;
  }
  stats.loss = loss_sum / static_cast<double>(val_set.size());
  stats.min_ratio = min_r;
  return stats;
}

}  // namespace

TrainReport train_worstcase(const TrainConfig& config,
                            const std::filesystem::path& run_dir) {
  if (config.objective != Objective::WorstCase) {
    throw ConfigError("train_worstcase requires objective = worstcase");
  }
  const auto t0 = std::chrono::steady_clock::now();
  snapshot_config(config, run_dir);
  RunLog log(run_dir / "log.txt");
  log.line("objective = worstcase, n = " + std::to_string(config.n) +
           ", seed = " + std::to_string(config.seed));

  const FeatureCombo combo = config.effective_combo();
  const int n = config.n;
  TrainReport report;

  WarmStartStats warm;
  Mlp net = warm_start(config, &warm);
  report.warm_steps = warm.steps;
  report.warm_mse = warm.final_mse;
  log.line("warm start: steps = " + std::to_string(warm.steps) +
           ", val mse = " + std::to_string(warm.final_mse));

  RngStream gen_init_rng(config.seed, kGenInit);
  Generator gen = make_generator(n, gen_init_rng);
  const bool use_adversary = config.adv_ratio > 0;

  AdamState adam_h = make_adam(net, config.learning_rate, config.lr_decay,
                               config.lr_decay_every);
  AdamState adam_g = make_adam(gen.net, config.learning_rate, config.lr_decay,
                               config.lr_decay_every);

  // Validation: fixed random half plus a fixed noise set pushed through the
  // current generator at validation time.
  RngStream val_rng(config.seed, kValData);
  RngStream val_noise_rng(config.seed, kValNoise);
  const int val_random = use_adversary ? config.val_size / 2 : config.val_size;
  const int val_adv = config.val_size - val_random;
  std::vector<TypeProfile> val_random_set;
  for (int k = 0; k < val_random; ++k) {
    val_random_set.push_back(sample_profile(config.prior, n, val_rng));
  }
  // Low-sum coverage: prior draws scaled toward the origin sweep every sum
  // level, where the worst ratios hide and the prior rarely samples. Part of
  // the adversarial pipeline only — random-only training (adv_ratio = 0)
  // deliberately sees nothing but prior draws.
  for (int k = 0; use_adversary && k < val_random; ++k) {
    TypeProfile p = sample_profile(config.prior, n, val_rng);
    const double t = val_rng.uniform01();
    for (double& v : p.values) v *= t;
    val_random_set.push_back(std::move(p));
  }
  std::vector<double> val_noise(static_cast<std::size_t>(val_adv) * n);
  for (double& z : val_noise) z = val_noise_rng.uniform01();

  const std::vector<TypeProfile> stress_set = make_stress_profiles(n);

  auto build_val_set = [&] {
    std::vector<TypeProfile> set = val_random_set;
    if (use_adversary) {
      set.insert(set.end(), stress_set.begin(), stress_set.end());
    }
    if (use_adversary && val_adv > 0) {
      std::vector<double> out(val_noise.size());
      forward_batch(gen.net, val_noise.data(), val_adv, nullptr, out.data());
      for (int j = 0; j < val_adv; ++j) {
        TypeProfile p;
        p.values.assign(out.begin() + static_cast<std::size_t>(j) * n,
                        out.begin() + static_cast<std::size_t>(j + 1) * n);
        set.push_back(std::move(p));
      }
    }
    return set;
  };

  LossWeights weights;
  weights.epsilon = config.effective_epsilon();
  // 1% inward margin on the budget bound: without it the validation minimum
  // hovers exactly at the bound and never clears the snapshot headroom.
  weights.low_bound_margin = 0.01 * (n - 1.0);
  if (config.alpha_target_init > 0.0) {
    weights.up_bound_target = config.alpha_target_init;
  } else {
    // Empirical worst ratio of the warm-start reference minus a margin.
    ManualRedistribution reference(ManualRedistribution::Kind::FallbackMax, n);
    const std::vector<TypeProfile> initial_val = build_val_set();
    double min_r = std::numeric_limits<double>::infinity();
    for (const TypeProfile& p : initial_val) {
      min_r = std::min(min_r, efficiency_ratio(p, reference));
    }
    weights.up_bound_target = std::clamp(min_r - 0.02, 0.01, 1.0);
  }
  log.line("alpha_target init = " + std::to_string(weights.up_bound_target));

  RngStream data_rng(config.seed, kTrainData);
  RngStream gen_noise_rng(config.seed, kGenNoise);

  std::vector<TypeProfile> batch;
  Gradients grads = make_zero_grads(net);
  std::vector<double> d_sum;

  double best_val = -std::numeric_limits<double>::infinity();
  int plateau_windows = 0;
  // Adam keeps wandering at the effective learning rate even on a flat
  // penalty, so the final parameters can sit far from the best seen; keep a
  // snapshot of the best zero-violation validation state and restore it.
  Mlp best_net;
  Mlp best_gen;  // paired: the snapshot only means something with the
                 // adversary that was probing it at the time
  double best_min_ratio = -std::numeric_limits<double>::infinity();
  long step = 0;
  double train_loss = 0.0;
  while (step < config.max_steps) {
    ++step;

    batch.clear();
    const int adv_count = use_adversary ? config.batch_size / 2 : 0;
    if (adv_count > 0) {
      batch = generate_batch(gen, adv_count, gen_noise_rng);
    }
    const int scaled_from =
        use_adversary ? adv_count + (config.batch_size - adv_count) / 2
                      : config.batch_size;
    while (static_cast<int>(batch.size()) < config.batch_size) {
      TypeProfile p = sample_profile(config.prior, n, data_rng);
      if (static_cast<int>(batch.size()) >= scaled_from) {
        const double t = data_rng.uniform01();
        for (double& v : p.values) v *= t;
      }
      batch.push_back(std::move(p));
    }
    // Every batch also trains on the corner profiles so the band holds in
    // regions the prior and the adversary rarely visit (adversarial pipeline
    // only; random-only training sees pure prior draws).
    if (use_adversary) {
      batch.insert(batch.end(), stress_set.begin(), stress_set.end());
    }

    const SumHBatch fwd = sum_h_batch(net, combo, config.top_k, batch);
    d_sum.resize(batch.size());
    train_loss = 0.0;
    for (std::size_t p = 0; p < batch.size(); ++p) {
      double sum = 0.0;
      for (double v : batch[p].values) sum += v;
      const double s = std::max(sum, 1.0);
      train_loss += worstcase_loss(fwd.sum_h[p], s, n, weights);
      d_sum[p] = worstcase_loss_dsum(fwd.sum_h[p], s, n, weights) /
                 static_cast<double>(batch.size());
    }
    train_loss /= static_cast<double>(batch.size());
    if (!std::isfinite(train_loss)) {
      throw DivergenceError("worst-case training loss went non-finite");
    }
    grads.zero();
    sum_h_backward_params(net, fwd, d_sum, &grads);
    adam_step(net, grads, adam_h);

    if (use_adversary && step % config.adv_ratio == 0) {
      adversary_step(gen, net, combo, config.top_k, config.batch_size, adam_g,
                     gen_noise_rng);
    }

    const bool do_curriculum =
        config.curriculum_every > 0 && step % config.curriculum_every == 0;
    const bool do_val = step % config.val_every == 0;
    if (do_curriculum || do_val) {
      const std::vector<TypeProfile> val_set = build_val_set();
      const ValStats stats = worstcase_val_stats(net, combo, config.top_k,
                                                 val_set, n, weights);
      // Ratchet: raise the target once validation is clean and the current
      // band is essentially achieved. The penalty then starts pushing the
      // ceiling down toward the new edge.
      if (do_curriculum && stats.violations == 0 &&
          stats.min_ratio >=
              weights.up_bound_target - 0.5 * config.alpha_target_step) {
        weights.up_bound_target = std::min(
            weights.up_bound_target + config.alpha_target_step, 1.0);
        best_val = -std::numeric_limits<double>::infinity();
        plateau_windows = 0;
      }
      // Snapshot the feasible state with the best validation worst-case
      // ratio. Headroom is provided by the training-side margin; demanding it
      // here too would never be met, since the adversary keeps producing
      // profiles that sit on the bound.
      if (stats.violations == 0 && stats.min_ratio > best_min_ratio) {
        best_min_ratio = stats.min_ratio;
        best_net = net;
        best_gen = gen.net;
      }
      if (do_val) {
        report.curve.push_back({step, train_loss, stats.loss,
                                weights.up_bound_target, stats.violations});
        // The stopping metric is the validation worst-case ratio (what the
        // objective maximizes); the penalty loss goes flat inside the target
        // band long before the adversarial game settles. Never stop before a
        // feasible snapshot exists or while validation has violations.
        const bool feasible = stats.violations == 0;
        if (!feasible ||
            best_min_ratio == -std::numeric_limits<double>::infinity()) {
          plateau_windows = 0;
        } else if (stats.min_ratio - best_val < 1e-5) {
          ++plateau_windows;
        } else {
          plateau_windows = 0;
        }
        if (feasible) best_val = std::max(best_val, stats.min_ratio);
        if (plateau_windows >= 5) {
          report.early_stop_step = step;
          log.line("early stop at step " + std::to_string(step));
          break;
        }
      }
    }

    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
      save_checkpoint(net, checkpoint_meta(config, "model"),
                      run_dir / "model.json");
      if (use_adversary) {
        save_checkpoint(gen.net, checkpoint_meta(config, "adversary"),
                        run_dir / "adversary.json");
      }
    }
  }
  report.steps_run = step;
  if (best_min_ratio > -std::numeric_limits<double>::infinity()) {
    net = std::move(best_net);
    gen.net = std::move(best_gen);
    log.line("restored best validation state (min ratio " +
             std::to_string(best_min_ratio) + ")");
  }

  save_checkpoint(net, checkpoint_meta(config, "model"),
                  run_dir / "model.json");
  report.final_checkpoint = (run_dir / "model.json").string();
  if (use_adversary) {
    save_checkpoint(gen.net, checkpoint_meta(config, "adversary"),
                    run_dir / "adversary.json");
    report.adversary_checkpoint = (run_dir / "adversary.json").string();
  }
  write_curve(report.curve, run_dir / "loss.csv");

  // Final audit on a fresh mixed test set.
  RngStream eval_rng(config.seed, kReportEval);
  NeuralRedistribution h(net, combo, n, config.top_k);
  const std::vector<TypeProfile> test_set = build_test_set(
      n, config.prior, use_adversary ? &gen.net : nullptr, 10000, eval_rng);
  const EvalReport eval = evaluate(h, test_set, n);
  report.achieved_alpha = eval.alpha_estimate;
  report.achieved_expectation = eval.expectation_estimate;
  report.violation_count = eval.violation_count;
  write_report(eval, run_dir / "eval", "final");

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::ostringstream done;
  done << "done: steps = " << report.steps_run
       << ", alpha = " << report.achieved_alpha
       << ", violations = " << report.violation_count
       << ", wall = " << report.wall_seconds << "s";
  log.line(done.str());
  return report;
}

TrainReport train_expectation(const TrainConfig& config,
                              const std::filesystem::path& run_dir) {
  if (config.objective != Objective::Expectation) {
    throw ConfigError("train_expectation requires objective = expectation");
  }
  const auto t0 = std::chrono::steady_clock::now();
  snapshot_config(config, run_dir);
  RunLog log(run_dir / "log.txt");
  log.line("objective = expectation, n = " + std::to_string(config.n) +
           ", seed = " + std::to_string(config.seed));

  const FeatureCombo combo = config.effective_combo();
  const int n = config.n;
  TrainReport report;

  WarmStartStats warm;
  Mlp net = warm_start(config, &warm);
  report.warm_steps = warm.steps;
  report.warm_mse = warm.final_mse;
  log.line("warm start: steps = " + std::to_string(warm.steps) +
           ", val mse = " + std::to_string(warm.final_mse));

  LossWeights weights;
  weights.epsilon = config.effective_epsilon();

  AdamState opt = make_adam(net, config.learning_rate, config.lr_decay,
                            config.lr_decay_every);
  RngStream data_rng(config.seed, kTrainData);
  RngStream feed_rng(config.seed, kFeed);
  RngStream val_rng(config.seed, kValData);

  std::vector<TypeProfile> val_set;
  for (int k = 0; k < config.val_size; ++k) {
    val_set.push_back(sample_profile(config.prior, n, val_rng));
  }

  // Corner profiles gate the snapshot (they do not enter the expectation
  // estimate), guarding regions random validation rarely reaches.
  const std::vector<TypeProfile> stress_set = make_stress_profiles(n);

  std::vector<TypeProfile> batch(config.batch_size);
  std::vector<double> feed_weights(config.batch_size, 1.0);
  Gradients grads = make_zero_grads(net);
  std::vector<double> d_sum(config.batch_size);

  double best_val = std::numeric_limits<double>::infinity();
  int plateau_windows = 0;
  // See train_worstcase: keep the best strictly feasible validation state,
  // since Adam keeps wandering after the penalty flattens.
  Mlp best_net;
  double best_mean_ratio = std::numeric_limits<double>::infinity();
  long step = 0;
  double train_loss = 0.0;
  while (step < config.max_steps) {
    ++step;
    for (int b = 0; b < config.batch_size; ++b) {
      batch[b] = sample_profile(config.prior, n, data_rng);
      if (config.feed) {
        FeedSample fs = feed_resample(batch[b], config.prior, feed_rng);
        batch[b] = std::move(fs.profile);
        feed_weights[b] = fs.weight;
      } else {
        feed_weights[b] = 1.0;
      }
    }

    const SumHBatch fwd = sum_h_batch(net, combo, config.top_k, batch);
    train_loss = 0.0;
    for (int p = 0; p < config.batch_size; ++p) {
      double sum = 0.0;
      for (double v : batch[p].values) sum += v;
      const double s = std::max(sum, 1.0);
      const double base = expectation_loss(fwd.sum_h[p], s, n, weights);
      train_loss += feed_weighted_loss(base, feed_weights[p]);
      d_sum[p] = feed_weights[p] *
                 expectation_loss_dsum(fwd.sum_h[p], s, n, weights) /
                 config.batch_size;
    }
    train_loss /= config.batch_size;
    if (!std::isfinite(train_loss)) {
      throw DivergenceError("expectation training loss went non-finite");
    }
    grads.zero();
    sum_h_backward_params(net, fwd, d_sum, &grads);
    adam_step(net, grads, opt);

    if (step % config.val_every == 0) {
      const SumHBatch vb = sum_h_batch(net, combo, config.top_k, val_set);
      double val_loss = 0.0;
      double mean_ratio = 0.0;
      double min_ratio = std::numeric_limits<double>::infinity();
      std::size_t violations = 0;
      for (std::size_t p = 0; p < val_set.size(); ++p) {
        double sum = 0.0;
        for (double v : val_set[p].values) sum += v;
        const double s = std::max(sum, 1.0);
        const double ratio = vb.sum_h[p] / s;
        val_loss += expectation_loss(vb.sum_h[p], s, n, weights);
        mean_ratio += ratio;
        min_ratio = std::min(min_ratio, ratio);
        if ((n - 1) - ratio > 1e-3 * (n - 1)) ++violations;
      }
      val_loss /= static_cast<double>(val_set.size());
      mean_ratio /= static_cast<double>(val_set.size());
      const SumHBatch sb = sum_h_batch(net, combo, config.top_k, stress_set);
      double stress_min = std::numeric_limits<double>::infinity();
      for (std::size_t p = 0; p < stress_set.size(); ++p) {
        double sum = 0.0;
        for (double v : stress_set[p].values) sum += v;
        stress_min = std::min(stress_min, sb.sum_h[p] / std::max(sum, 1.0));
      }
      // Feasibility with headroom gates the snapshot: the validation minimum
      // must clear the bound by 0.5% (and the corner profiles by 0.1%) so
      // unseen profiles stay clear of the tolerance-level threshold too.
      if (min_ratio >= (n - 1.0) * 1.005 &&
          stress_min >= (n - 1.0) * 1.001 && mean_ratio < best_mean_ratio) {
        best_mean_ratio = mean_ratio;
        best_net = net;
      }
      report.curve.push_back({step, train_loss, val_loss, 0.0, violations});
      // The stopping metric is the validation mean ratio statistic: the
      // penalty loss flattens near zero long before the expectation stops
      // improving. Never stop while the validation set still has violations.
      if (violations > 0) {
        plateau_windows = 0;
      } else if (best_val - mean_ratio < 1e-5) {
        ++plateau_windows;
      } else {
        plateau_windows = 0;
      }
      if (violations == 0) best_val = std::min(best_val, mean_ratio);
      if (plateau_windows >= 5) {
        report.early_stop_step = step;
        log.line("early stop at step " + std::to_string(step));
        break;
      }
    }

    if (config.checkpoint_every > 0 && step % config.checkpoint_every == 0) {
      save_checkpoint(net, checkpoint_meta(config, "model"),
                      run_dir / "model.json");
    }
  }
  report.steps_run = step;
  if (best_mean_ratio < std::numeric_limits<double>::infinity()) {
    net = std::move(best_net);
    log.line("restored best validation state (mean ratio " +
             std::to_string(best_mean_ratio) + ")");
  }

  save_checkpoint(net, checkpoint_meta(config, "model"),
                  run_dir / "model.json");
  report.final_checkpoint = (run_dir / "model.json").string();
  write_curve(report.curve, run_dir / "loss.csv");

  RngStream eval_rng(config.seed, kReportEval);
  NeuralRedistribution h(net, combo, n, config.top_k);
  const std::vector<TypeProfile> test_set =
      build_test_set(n, config.prior, nullptr, 10000, eval_rng);
  const EvalReport eval = evaluate(h, test_set, n);
  report.achieved_expectation = eval.expectation_estimate;
  report.achieved_alpha = eval.alpha_estimate;
  report.violation_count = eval.violation_count;
  write_report(eval, run_dir / "eval", "final");

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::ostringstream done;
  done << "done: steps = " << report.steps_run
       << ", expectation = " << report.achieved_expectation
       << ", violations = " << report.violation_count
       << ", wall = " << report.wall_seconds << "s";
  log.line(done.str());
  return report;
}

ContrastReport run_contrast(const TrainConfig& config,
                            const std::filesystem::path& run_dir) {
  TrainConfig base = config;
  base.objective = Objective::WorstCase;
  base.adv_ratio = 0;  // random-only training
  // No supervised warm start: the baseline should learn from prior samples
  // alone, leaving it unconstrained off-distribution — the blind spot the
  // audit is designed to expose. Warm-starting toward the manual reference
  // would make it feasible everywhere and mask the effect.
  base.warm_start = WarmStartKind::None;
  const TrainReport trained = train_worstcase(base, run_dir);

  auto [net, meta] = load_checkpoint(trained.final_checkpoint);
  const FeatureCombo combo = base.effective_combo();
  const int n = base.n;

  // A fresh adversary trained against the frozen model.
  RngStream gen_init_rng(base.seed, kGenInit);
  Generator gen = make_generator(n, gen_init_rng);
  AdamState adam_g = make_adam(gen.net, base.learning_rate, base.lr_decay,
                               base.lr_decay_every);
  RngStream noise_rng(base.seed, kGenNoise);
  for (int step = 0; step < base.contrast_adv_steps; ++step) {
    adversary_step(gen, net, combo, base.top_k, base.batch_size, adam_g,
                   noise_rng);
  }
  save_checkpoint(gen.net, checkpoint_meta(base, "adversary"),
                  run_dir / "adversary.json");

  NeuralRedistribution h(net, combo, n, base.top_k);
  RngStream a_rng(base.seed, kContrastA);
  RngStream b_rng(base.seed, kContrastB);
  const std::vector<TypeProfile> set_a =
      build_test_set(n, base.prior, nullptr, 20000, a_rng);
  const std::vector<TypeProfile> set_b =
      build_test_set(n, base.prior, &gen.net, 20000, b_rng);
  const EvalReport report_a = evaluate(h, set_a, n);
  const EvalReport report_b = evaluate(h, set_b, n);
  write_report(report_a, run_dir / "eval", "set_a");
  write_report(report_b, run_dir / "eval", "set_b");

  ContrastReport contrast;
  contrast.set_a_min = report_a.min_ratio_stat;
  contrast.set_a_max = report_a.max_ratio_stat;
  contrast.set_b_min = report_b.min_ratio_stat;
  contrast.set_b_max = report_b.max_ratio_stat;
  contrast.set_a_violations = report_a.violation_count;
  contrast.set_b_violations = report_b.violation_count;

  std::ofstream out(run_dir / "contrast.json");
  out << nlohmann::json{{"set_a_min", contrast.set_a_min},
                        {"set_a_max", contrast.set_a_max},
                        {"set_b_min", contrast.set_b_min},
                        {"set_b_max", contrast.set_b_max},
                        {"set_a_violations", contrast.set_a_violations},
                        {"set_b_violations", contrast.set_b_violations}}
             .dump(1)
      << "\n";
  return contrast;
}

}  // namespace redist
