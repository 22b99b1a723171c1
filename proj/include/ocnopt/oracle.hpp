#pragma once

#include "ocnopt/core.hpp"

namespace ocnopt {

/// Reference implementations on small problems. A batch of B samples is
/// treated as one stacked trajectory (state dimension d*B, shared
/// parameters), so batch training equals deterministic trajectory
/// optimization and dense value recursions are well-defined. Everything
/// here materializes full matrices and is guarded to small dimensions; the
/// production path never calls it.

/// Signed pseudo-inverse of a symmetric (possibly indefinite) matrix:
/// eigenvalues of magnitude above tol * max|lambda| are inverted.
Mat pinv_sym(const Mat& a, double tol = 1e-12);

/// Dense stacked Jacobians of one layer evaluation: fx is block-diagonal
/// over samples (column-major stacking), fth has one row block per sample.
struct StackedJacobians {
  Mat fx;   // (d_out * B) x (d_in * B)
  Mat fth;  // (d_out * B) x P
};
StackedJacobians stacked_jacobians(const LayerNode& layer, const Vec& theta,
                                   const LayerCache& cache);

/// Central-difference contractions of layer second derivatives with an
/// output cotangent v (one column per sample): d/d(.) of the corresponding
/// first-order pullback. Results are symmetrized where symmetry is exact.
Mat fxx_contract(const LayerNode& layer, const Vec& theta, const Mat& x,
                 const Mat& v, double step = 1e-4);
Mat ftt_contract(const LayerNode& layer, const Vec& theta, const Mat& x,
                 const Mat& v, double step = 1e-4);
Mat fxt_contract(const LayerNode& layer, const Vec& theta, const Mat& x,
                 const Mat& v, double step = 1e-4);

enum class TerminalModel {
  ExactHessian,  // block-diagonal exact loss Hessian
  GaussNewton,   // rank-one y y^T with y = beta * stacked loss gradient
};

struct DdpOptions {
  double gamma = 0.0;
  double beta = 1.0;
  TerminalModel terminal = TerminalModel::GaussNewton;
  bool include_f_second = false;  // add f^{..} . V^x contraction terms
  bool force_identity_qtt = false;
  bool force_zero_qxt = false;
  bool force_zero_qxx = false;
  double fd_step = 1e-4;
  double pinv_tol = 1e-12;
};

/// Stage quantities of the dense value recursion. The policy is
/// dtheta(dx) = -(g + kfb dx); vx/vxx are the post-minimization value
/// derivatives at the stage input.
struct DdpLayer {
  Vec g;
  Mat kfb;
  Vec qx, qth;
  Mat qxx, qxt, qtt;
  Vec vx;
  Mat vxx;
};

struct DdpResult {
  std::vector<DdpLayer> layers;
  Vec vx_terminal;
  Mat vxx_terminal;
  double loss = 0.0;
};

DdpResult dense_ddp_step(const NetworkSpec& net, const Mat& x0,
                         const Targets& t, const DdpOptions& opts);

/// Layer-wise damped Newton step: per-layer parameter block Hessian of the
/// total objective (mean loss plus (gamma/2)||theta||^2 per stage) by
/// central differences of the gradient, then -H^+ grad per layer.
std::vector<Vec> newton_reference(const NetworkSpec& net, const Mat& x0,
                                  const Targets& t, double gamma,
                                  double fd_step = 1e-4,
                                  double pinv_tol = 1e-10);

/// Plain reverse accumulation of the mean loss: per-layer parameter
/// gradients and per-sample state gradients.
struct BackpropResult {
  double loss = 0.0;
  std::vector<Vec> grad_theta;  // depth entries
  std::vector<Mat> grad_x;      // depth+1 entries, d_k x B
};
BackpropResult backprop_reference(const NetworkSpec& net, const Mat& x0,
                                  const Targets& t);

/// Rank-N recursion for the value Hessian V^xx = sum_i r^i r^i^T. Stage
/// curvature is materialized exactly from the factors
/// (Q^uu = sum_i p^i p^i^T + gamma I); the factor mixing matrix
/// S = I - P with P_ij = p^i^T (Q^uu)^+ p^j is eigendecomposed and factors
/// are re-orthogonalized as sqrt(sigma_i) * (Q U) columns.
struct RankNResult {
  std::vector<std::vector<Vec>> factors;  // [stage][i], stacked length d*B
  int clamped_sigmas = 0;                 // tiny negative S eigenvalues
};
RankNResult rank_n_backward(const NetworkSpec& net, const Mat& x0,
                            const std::vector<Vec>& terminal_factors,
                            double gamma, double pinv_tol = 1e-12);

/// Curvature that represents Q^uu = p p^T + gamma I exactly from the
/// rank-one factor observed during the backward recursion. Applies the
/// inverse in closed form; pairs the factored recursion against dense
/// references without a modeling gap.
class ExactRank1Curvature : public CurvatureBase {
 public:
  explicit ExactRank1Curvature(Index depth, double gamma)
      : gamma_(gamma), p_(static_cast<size_t>(depth)) {}
  void update_stats(Index layer, const CurvatureObservation& obs) override {
    p_.at(static_cast<size_t>(layer)) = obs.p;
  }
  Vec apply_pinv(Index layer, const Vec& v) const override;

 private:
  double gamma_;
  std::vector<Vec> p_;
};

}  // namespace ocnopt
