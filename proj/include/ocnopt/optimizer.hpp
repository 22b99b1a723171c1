#pragma once

#include <iosfwd>
#include <memory>
#include <string>

#include "ocnopt/core.hpp"

namespace ocnopt {

/// Training modes. The ocn-* modes run the stage-wise value recursion with
/// the named curvature model. sgd, rmsprop-like and ekfac-like are
/// independent plain implementations (reverse accumulation plus the
/// matching preconditioner) kept separate on purpose: the equivalence of
/// each baseline with the corresponding feedback-free ocn-* mode is a
/// tested property, not a definition. newton-oracle applies the dense
/// layer-wise Newton reference and only works on oracle-sized problems.
enum class OptimizerMode {
  OcnIdentity,
  OcnAdaptive,
  OcnKfac,
  Sgd,
  RmspropLike,
  EkfacLike,
  NewtonOracle,
};

OptimizerMode optimizer_mode_from_string(const std::string& s);
std::string to_string(OptimizerMode mode);

struct OptimizerConfig {
  OptimizerMode mode = OptimizerMode::OcnAdaptive;
  double eta = 0.01;
  double gamma = 0.0;
  double beta = 0.1;
  bool feedback = true;  // ocn-* modes only
  CurvatureOptions curvature;
};

struct StepDiagnostics {
  double batch_loss = 0.0;
  int radicand_clamps = 0;
  double q_norm = 0.0;
  double p_norm = 0.0;
  double dtheta_norm = 0.0;
};

class Optimizer {
 public:
  Optimizer(const NetworkSpec& net, OptimizerConfig cfg);

  /// One parameter update from one batch. Throws divergence_error when the
  /// loss or an update stops being finite.
  StepDiagnostics step(NetworkSpec& net, const Mat& x0, const Targets& t);

  const OptimizerConfig& config() const { return cfg_; }

  /// Optimizer state (curvature averages or squared-gradient EMAs) for
  /// exact training resumption; empty for stateless modes.
  void save_state(std::ostream& os) const;
  void load_state(std::istream& is);

  const CurvatureModel* curvature() const { return curv_.get(); }

 private:
  StepDiagnostics step_recursion(NetworkSpec& net, const Mat& x0,
                                 const Targets& t);
  StepDiagnostics step_sgd(NetworkSpec& net, const Mat& x0, const Targets& t);
  StepDiagnostics step_rmsprop(NetworkSpec& net, const Mat& x0,
                               const Targets& t);
  StepDiagnostics step_ekfac(NetworkSpec& net, const Mat& x0,
                             const Targets& t);
  StepDiagnostics step_newton(NetworkSpec& net, const Mat& x0,
                              const Targets& t);

  OptimizerConfig cfg_;
  std::unique_ptr<CurvatureModel> curv_;  // ocn-* and ekfac-like modes
  std::vector<Vec> sq_ema_;               // rmsprop-like state
};

Optimizer make_optimizer(const NetworkSpec& net, const OptimizerConfig& cfg);

}  // namespace ocnopt
