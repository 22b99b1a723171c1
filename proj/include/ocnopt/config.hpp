#pragma once

#include <string>
#include <vector>

#include "ocnopt/curvature.hpp"
#include "ocnopt/layers.hpp"

namespace ocnopt {

struct DataConfig {
  std::string kind = "two-moons";  // or csv (with path), digits, ...
  std::string path;
  std::string label_column = "label";
  Index n = 400;
  double noise = 0.1;
};

struct OdeSettings {
  bool enabled = false;
  int steps = 20;
  double horizon = 1.0;
  bool horizon_opt = false;
  double penalty_c = 0.1;
  double eta_horizon = 0.1;
};

struct GameSettings {
  int players = 1;
  std::string alignment = "none";  // none | fixed:<i> | random | bandit
  int reward_period = 10;
};

/// Everything one training run depends on. A single seed fixes the dataset,
/// the initialization, the batch order and every other random draw.
struct TrainConfig {
  double eta = 0.01;
  double gamma = 0.0;
  double beta = 0.1;
  double eps = 1e-8;
  Index batch_size = 32;
  int epochs = 10;
  std::uint64_t seed = 1;
  std::string mode = "ocnopt-adaptive";
  bool feedback = true;
  std::vector<Index> hidden = {32, 32};
  std::string activation = "tanh";
  DataConfig data;
  OdeSettings ode;
  GameSettings game;
  std::string metrics_path = "metrics.csv";
  std::string checkpoint_path = "checkpoint.ocno";
  std::string manifest_path = "manifest.json";
  int checkpoint_period = 0;  // epochs between checkpoints; 0 = end only
  int eval_period = 0;        // steps between split evals; 0 = epoch end
  // curvature model details
  double adaptive_ema = 0.999;
  double kfac_ema = 0.95;
  int kfac_refresh = 20;
  std::string kfac_gamma_mode = "add-inverse";  // or folded-damping
};

void validate_config(const TrainConfig& cfg);

/// Parses a JSON document; `overrides` are dotted-path assignments such as
/// "eta=0.05" or "data.kind=digits" applied on top. Unknown keys and bad
/// values raise parse_error naming the key.
TrainConfig parse_config_text(const std::string& json_text,
                              const std::vector<std::string>& overrides = {});
TrainConfig load_config(const std::string& path,
                        const std::vector<std::string>& overrides = {});

/// Full echo of every config key as a pretty-printed JSON document.
std::string config_to_json(const TrainConfig& cfg);

Activation activation_from_string(const std::string& s);
KfacGammaMode kfac_gamma_mode_from_string(const std::string& s);

}  // namespace ocnopt
