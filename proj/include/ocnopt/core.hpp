#pragma once

#include <functional>

#include "ocnopt/curvature.hpp"

namespace ocnopt {

/// Per-layer affine feedback policy dtheta*(dx) = -(g + h (q . dx)).
/// g is the preconditioned open-loop step; the closed-loop part reacts to
/// the state perturbation dx accumulated by earlier layer updates. With
/// feedback disabled h and q are zero and the policy is the open-loop step.
struct FeedbackPolicy {
  Vec g;
  Vec h;
  Vec q;
  Vec dtheta(const Vec& dx) const { return -(g + h * q.dot(dx)); }
};

/// Value-function quantities at one stage: the aggregate value gradient vx
/// and the rank-one factor r of the Gauss-Newton value Hessian V^xx = r r^T.
struct BackwardState {
  Vec vx;
  Vec r;
};

struct BackwardOptions {
  double gamma = 0.0;  // parameter running cost (gamma/2)||theta||^2
  double beta = 0.1;   // terminal value-Hessian scale, in (0, 1]
  bool feedback = true;
  /// Multiplies the quadratic term inside the contraction radicand
  /// 1 - sign * p^T (Q^uu)^+ p. Always +1 in training; the verification
  /// suite flips it to prove the equivalence checks catch a broken
  /// recursion.
  double radicand_sign = 1.0;
};

struct BackwardDiagnostics {
  int radicand_clamps = 0;
  std::vector<double> radicand;  // per layer, before clamping
  double q_norm_max = 0.0;
  double p_norm_max = 0.0;
};

struct BackwardResult {
  std::vector<FeedbackPolicy> policies;  // depth entries
  std::vector<BackwardState> states;     // depth+1 entries
  BackwardDiagnostics diag;
};

/// Stage-wise value recursion over the batch. Per-sample value gradients
/// propagate by plain reverse accumulation; the feedback contribution
/// -q (p . g) propagates as a single correction stream along the
/// representative trajectory, where the rank-one factors q = f_x^T r and
/// p = f_theta^T r are evaluated. Curvature statistics are updated before
/// each layer's pseudo-inverse applies.
BackwardResult backward_pass(const NetworkSpec& net,
                             const BatchActivations& acts, const Targets& t,
                             CurvatureBase& curvature,
                             const BackwardOptions& opts);

struct UpdateResult {
  double dx_norm_max = 0.0;
  double dtheta_norm_max = 0.0;
};

/// Applies the policies in layer order while propagating the state
/// perturbation dx_{k+1} = f_k(xr_k + dx_k, theta_k + dtheta_k) - xr_{k+1}
/// along the representative trajectory. The propagation uses the full
/// policy output; parameters move by eta times it. Throws divergence_error
/// when the perturbation stops being finite.
UpdateResult forward_update(NetworkSpec& net, const BatchActivations& acts,
                            const std::vector<FeedbackPolicy>& policies,
                            double eta);

/// Same perturbation propagation as forward_update, but the parameter move
/// at each layer is delegated to `move_params(k, dtheta_full)`. The mover
/// owns the learning-rate scaling and must leave net.params[k] at the value
/// later layers should propagate against.
UpdateResult forward_update_with(
    NetworkSpec& net, const BatchActivations& acts,
    const std::vector<FeedbackPolicy>& policies,
    const std::function<void(Index, const Vec&)>& move_params);

/// Scalar form of the value recursion, valid with no parameter running
/// cost: V^x_k and r_k stay parallel to the reverse-accumulated gradient
/// along the representative trajectory, so only two scalar coefficients
/// per stage are propagated. alpha scales r, alpha_bar scales vx.
struct ScalarGnResult {
  std::vector<double> alpha;      // depth+1
  std::vector<double> alpha_bar;  // depth+1
  std::vector<Vec> ghat;          // depth+1 representative-trajectory grads
  int radicand_clamps = 0;
};

ScalarGnResult scalar_gn_backward(const NetworkSpec& net,
                                  const BatchActivations& acts,
                                  const Targets& t,
                                  const CurvatureBase& curvature, double beta);

}  // namespace ocnopt
