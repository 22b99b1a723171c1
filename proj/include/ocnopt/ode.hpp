#pragma once

#include "ocnopt/curvature.hpp"

namespace ocnopt {

/// Continuous-depth model: the state follows dx/dt = F(t, x) with
/// F(t, x) = field([x; t]), integrated from 0 to `horizon` on a fixed RK4
/// grid of `steps` intervals, then the loss applies to x(horizon).
struct OdeModel {
  NetworkSpec field;  // in_dim = state_dim + 1, out_dim = state_dim
  LossKind loss = LossKind::SoftmaxCrossEntropy;
  double horizon = 1.0;
  int steps = 20;
  Index state_dim() const { return field.out_dim(); }
};

OdeModel build_ode_model(Index state_dim, const std::vector<Index>& hidden,
                         Activation act, LossKind loss, double horizon,
                         int steps, Rng& rng);

Mat ode_field_eval(const NetworkSpec& field, double t, const Mat& x);

/// Fixed-grid RK4 solution, storing states and field values at every node
/// so intermediate states can be reconstructed by cubic Hermite
/// interpolation during backward sweeps.
struct OdeTrajectory {
  std::vector<Mat> nodes;   // steps+1 entries, d x B
  std::vector<Mat> derivs;  // field evaluated at each node
  double horizon = 0.0;
  double h = 0.0;
  Index steps() const { return static_cast<Index>(nodes.size()) - 1; }
};

OdeTrajectory ode_forward(const NetworkSpec& field, const Mat& x0,
                          double horizon, int steps);

/// Backward RK4 sweep of the joint adjoint system
///   -dq/dt = F_x^T q,   -dp/dt = sum_i F_theta^T q_i,
/// from a terminal state cotangent (one column per sample). p aggregates
/// over the batch into flat field-parameter coordinates.
struct OdeAdjoint {
  std::vector<Mat> q;  // steps+1 entries, d x B
  std::vector<Vec> p;  // steps+1 entries, total field params
};

OdeAdjoint ode_adjoint_sweep(const NetworkSpec& field,
                             const OdeTrajectory& traj, const Mat& terminal_q);

/// Time-integrated Kronecker factors per dense unit of the field:
/// a_int = integral of the homogeneous unit-input second moment,
/// b_int = integral of the unit pre-activation cotangent second moment
/// under the adjoint, both by trapezoid quadrature on the grid. Offsets
/// index the flat field parameter vector.
struct OdeQuadFactors {
  struct Block {
    Index offset = 0;
    Index m = 0;
    Index n = 0;
    Mat a_int;
    Mat b_int;
  };
  std::vector<Block> blocks;
};

OdeQuadFactors ode_quadrature_factors(const NetworkSpec& field,
                                      const OdeTrajectory& traj,
                                      const OdeAdjoint& adj);

struct OdeStepOptions {
  double gamma = 0.0;           // parameter running cost rate
  double eta = 0.1;
  bool identity_precond = false;  // plain adjoint gradient step
  bool horizon_opt = false;
  double penalty_c = 0.1;       // horizon penalty (c/2) T^2
  double eta_horizon = 0.1;
  double t_min = 0.05;
  double t_max = 4.0;
  double pinv_tol = 1e-12;
};

struct OdeStepResult {
  double loss_before = 0.0;
  double dtheta_norm = 0.0;
  double horizon_delta = 0.0;
  bool horizon_skipped = false;
  double q_t = 0.0;   // objective sensitivity to the horizon
  double q_tt = 0.0;  // its curvature
};

/// One joint training step: adjoint sweep, Kronecker-preconditioned
/// parameter update with damping gamma * horizon, and (optionally) a
/// second-order horizon update using the transversality quantities at the
/// pre-update parameters. The horizon moves only when its curvature is
/// positive and stays inside [t_min, t_max].
OdeStepResult ode_train_step(OdeModel& model, const Mat& x0, const Targets& t,
                             const OdeStepOptions& opts);

/// Terminal states under the current field and horizon.
Mat ode_predict(const OdeModel& model, const Mat& x0);

/// Dense field Jacobians at one (t, x), for oracles.
struct FieldJacobians {
  Mat fx;   // d x d
  Mat fth;  // d x P
};
FieldJacobians field_jacobians(const NetworkSpec& field, double t,
                               const Vec& x);

/// Dense backward solutions of the stage-curvature matrix differential
/// equations (single sample):
///   -dQxx/dt = Fx^T Qxx + Qxx Fx
///   -dQxt/dt = Fx^T Qxt + Qxx Fth
///   -dQtt/dt = Fth^T Qxt + Qxt^T Fth + gamma I
/// with terminals (terminal_q terminal_q^T, 0, 0), on the same RK4 grid.
/// Reference for the outer-product factorization of the adjoint pair.
struct OdeDenseSecond {
  std::vector<Mat> qxx;  // steps+1 entries, d x d
  std::vector<Mat> qxt;  // d x P
  std::vector<Mat> qtt;  // P x P
};

OdeDenseSecond ode_dense_second_oracle(const NetworkSpec& field,
                                       const OdeTrajectory& traj,
                                       const Vec& terminal_q, double gamma);

/// Reverse-mode gradient through the unrolled discrete RK4 steps; the
/// discretize-then-differentiate reference for the continuous adjoint.
struct UnrolledGrad {
  double loss = 0.0;
  Vec grad_theta;  // flat field params
  Vec grad_x0;
};

UnrolledGrad unrolled_rk4_gradient(const NetworkSpec& field, const Vec& x0,
                                   LossKind loss, const Targets& t,
                                   double horizon, int steps);

}  // namespace ocnopt
