#pragma once

#include <vector>

#include "ocnopt/network.hpp"

namespace ocnopt {

enum class CurvatureKind { Identity, Adaptive, Kfac };

/// How damping gamma > 0 enters the Kronecker-factored apply. AddInverse
/// evaluates (1/gamma) I + (B (x) A)^+ in the joint eigenbasis, keeping the
/// factored pseudo-inverse intact. FoldedDamping inverts the damped
/// eigenvalues 1/(lambda_b * lambda_a + gamma) instead.
enum class KfacGammaMode { AddInverse, FoldedDamping };

struct CurvatureOptions {
  CurvatureKind kind = CurvatureKind::Identity;
  double eps = 1e-8;           // adaptive denominator floor
  double ema_adaptive = 0.999; // decay for squared-gradient averages
  double ema_kfac = 0.95;      // decay for Kronecker factor averages
  int refresh_period = 20;     // factor eigendecomposition cadence
  double gamma = 0.0;          // damping tied to the parameter running cost
  KfacGammaMode gamma_mode = KfacGammaMode::AddInverse;
  double pinv_tol = 1e-12;
};

/// In-place damped pseudo-inverse of a Kronecker-factored curvature on one
/// parameter block laid out as [vec_rm(W); b]. a_eig/b_eig are the
/// eigendecompositions of the homogeneous-input and cotangent factors; the
/// apply runs in their joint eigenbasis.
void kron_precondition_block(const SymEig& a_eig, const SymEig& b_eig,
                             double gamma, KfacGammaMode mode,
                             double pinv_tol, Index m, Index n,
                             double* block);

/// Everything a curvature model may consume from one backward step at one
/// layer. Gradient statistics use q_theta; Kronecker factors use the
/// per-sample blocks; p is the rank-one parameter factor of the value
/// recursion, consumed only by exact test curvatures.
struct CurvatureObservation {
  std::vector<KfacBlockObs> blocks;
  Vec q_theta;
  Vec p;
};

/// Interface the backward recursion talks to: accumulate statistics, then
/// apply the pseudo-inverse of the modeled parameter-space curvature.
class CurvatureBase {
 public:
  virtual ~CurvatureBase() = default;
  virtual void update_stats(Index layer, const CurvatureObservation& obs) = 0;
  virtual Vec apply_pinv(Index layer, const Vec& v) const = 0;
  virtual double quadratic_form(Index layer, const Vec& p) const {
    return p.dot(apply_pinv(layer, p));
  }
  /// Whether update_stats consumes per-sample Kronecker blocks; lets the
  /// backward pass skip building them for diagonal models.
  virtual bool needs_blocks() const { return false; }
};

class CurvatureModel : public CurvatureBase {
 public:
  CurvatureModel(const NetworkSpec& net, CurvatureOptions opts);

  void update_stats(Index layer, const CurvatureObservation& obs) override;
  Vec apply_pinv(Index layer, const Vec& v) const override;
  bool needs_blocks() const override {
    return opts_.kind == CurvatureKind::Kfac;
  }

  const CurvatureOptions& options() const { return opts_; }
  CurvatureKind kind() const { return opts_.kind; }

  /// Adaptive squared-gradient EMA for one layer (test access).
  const Vec& adaptive_ema(Index layer) const;
  /// Kronecker factor EMAs for one dense block (test access).
  const Mat& kfac_input_factor(Index layer, Index block) const;
  const Mat& kfac_cotangent_factor(Index layer, Index block) const;

  /// Serialized state for exact training resumption.
  void save_state(std::ostream& os) const;
  void load_state(std::istream& is);

 private:
  struct KfacBlockState {
    Index param_offset = 0;
    Index m = 0;
    Index n = 0;
    Mat a_ema;  // (n+1) x (n+1) homogeneous input second moment
    Mat b_ema;  // m x m pre-activation cotangent second moment
    SymEig a_eig, b_eig;
    bool ready = false;
  };
  struct LayerState {
    Vec s;  // adaptive squared-gradient EMA, zero-initialized
    std::vector<KfacBlockState> blocks;
    long updates = 0;
  };

  void kfac_apply_block(const KfacBlockState& bs, Vec& out) const;

  CurvatureOptions opts_;
  std::vector<LayerState> state_;
};

}  // namespace ocnopt
