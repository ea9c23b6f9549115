#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "redist/adversary.hpp"
#include "redist/features.hpp"
#include "redist/losses.hpp"
#include "redist/net.hpp"
#include "redist/priors.hpp"

namespace redist {

enum class Objective { WorstCase, Expectation };
enum class WarmStartKind { Fallback, Ao, None };

// Full experiment determinism: everything a run needs lives here, and all
// randomness flows from `seed`.
struct TrainConfig {
  std::uint64_t seed = 1;
  int n = 0;
  Objective objective = Objective::Expectation;
  Prior prior;
  FeatureCombo features = FeatureCombo::RawSorted;
  bool features_auto = true;  // C8 for n >= 5, RawSorted below
  int top_k = 1;
  int batch_size = 64;
  double epsilon = -1.0;            // auto: 0.01 worst-case, 1e-4 expectation
  double alpha_target_init = -1.0;  // auto: reference empirical worst - 0.02
  double alpha_target_step = 0.005;
  int curriculum_every = 500;
  int adv_ratio = 5;  // h-steps per adversary step; 0 disables the adversary
  WarmStartKind warm_start = WarmStartKind::Fallback;
  int warm_max_steps = 20000;
  long max_steps = 20000;
  int checkpoint_every = 5000;
  bool feed = true;  // PDF weighting (expectation objective)
  int val_every = 200;
  int val_size = 2000;
  int workers = 1;
  double learning_rate = 1e-3;
  double lr_decay = 0.98;
  int lr_decay_every = 100;
  int contrast_adv_steps = 2000;
  int hidden_layers = 6;
  int hidden_width = 100;

  FeatureCombo effective_combo() const {
    return features_auto ? default_combo(n) : features;
  }
  double effective_epsilon() const {
    if (epsilon > 0.0) return epsilon;
    return objective == Objective::WorstCase ? 0.01 : 1e-4;
  }
};

// Flat key=value text with '#' comments. Unknown keys and missing required
// keys (n, objective, prior) raise ConfigError naming the key.
TrainConfig parse_config(std::istream& in, const std::string& source_name);
TrainConfig load_config(const std::filesystem::path& path);
void apply_override(TrainConfig& config, const std::string& key,
                    const std::string& value);
std::string config_to_text(const TrainConfig& config);

struct CurveRow {
  long step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double alpha_target = 0.0;
  std::size_t violations = 0;
};

struct TrainReport {
  std::vector<CurveRow> curve;
  std::string final_checkpoint;
  std::string adversary_checkpoint;
  double achieved_alpha = 0.0;        // worst-case objective
  double achieved_expectation = 0.0;  // expectation objective
  std::size_t violation_count = 0;
  double wall_seconds = 0.0;
  long steps_run = 0;
  long warm_steps = 0;
  double warm_mse = 0.0;
  long early_stop_step = -1;  // -1 when the step cap ended the run
};

struct WarmStartStats {
  long steps = 0;
  double final_mse = 0.0;
};

// Supervised pre-training toward the configured manual mechanism; returns
// Xavier-fresh parameters untouched for warm_start=none.
Mlp warm_start(const TrainConfig& config, WarmStartStats* stats = nullptr);

// Adversarial alternation with the alpha-target curriculum. Writes the run
// directory (config snapshot, checkpoints, loss CSV, log).
TrainReport train_worstcase(const TrainConfig& config,
                            const std::filesystem::path& run_dir);

// FEED-weighted penalty descent toward sum h = (n-1) S.
TrainReport train_expectation(const TrainConfig& config,
                              const std::filesystem::path& run_dir);

// Trains h on random data only, then a generator against the frozen h, and
// audits the model on a random set (A) and a mixed set (B).
struct ContrastReport {
  double set_a_min = 0.0;
  double set_a_max = 0.0;
  double set_b_min = 0.0;
  double set_b_max = 0.0;
  std::size_t set_a_violations = 0;
  std::size_t set_b_violations = 0;
};

ContrastReport run_contrast(const TrainConfig& config,
                            const std::filesystem::path& run_dir);

}  // namespace redist
