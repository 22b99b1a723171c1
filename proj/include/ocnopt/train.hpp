#pragma once

#include "ocnopt/config.hpp"
#include "ocnopt/data.hpp"
#include "ocnopt/game.hpp"
#include "ocnopt/ode.hpp"
#include "ocnopt/optimizer.hpp"

namespace ocnopt {

struct TrainResult {
  std::uint64_t steps = 0;
  int epochs = 0;
  double final_train_loss = 0.0;
  double train_accuracy = 0.0;  // regression: negative mean squared error
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  double final_horizon = 0.0;  // ODE runs only
  double wall_ms = 0.0;        // reported in the manifest, never in metrics
};

/// Runs the configured training loop: builds the dataset and model from the
/// seed, steps through epochs writing one metrics row per update, writes
/// the checkpoint and a manifest echoing the config, and returns the final
/// evaluation. Divergence propagates as divergence_error with run context.
TrainResult train(const TrainConfig& cfg);

/// Continues a checkpointed run until cfg.epochs, appending to the metrics
/// file. The continuation reproduces an unbroken run exactly: parameters,
/// optimizer state and generator state all come from the checkpoint.
TrainResult train_resume(const TrainConfig& cfg,
                         const std::string& checkpoint_path);

/// Fraction of correctly classified samples in the index list; for
/// regression, the negative mean squared error. Empty lists give 0.
double dataset_accuracy(const NetworkSpec& net, const Dataset& ds,
                        const std::vector<Index>& idx);
double dataset_loss(const NetworkSpec& net, const Dataset& ds,
                    const std::vector<Index>& idx);

double ode_dataset_accuracy(const OdeModel& model, const Dataset& ds,
                            const std::vector<Index>& idx);

/// Per-run summary statistics of a metrics CSV (the `plot` back end):
/// row count plus min/max/first/last of every numeric column, as JSON.
std::string metrics_summary_json(const std::string& metrics_path);

}  // namespace ocnopt
