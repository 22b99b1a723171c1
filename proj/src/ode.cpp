#include "ocnopt/ode.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ocnopt {

namespace {

void check_field(const NetworkSpec& field) {
  validate_network(field);
  if (field.in_dim() != field.out_dim() + 1)
    throw dim_error("ode: field must map [x; t] to dx/dt");
}

Mat with_time_row(const Mat& x, double t) {
  Mat xin(x.rows() + 1, x.cols());
  xin.topRows(x.rows()) = x;
  xin.row(x.rows()).setConstant(t);
  return xin;
}

Mat field_forward(const NetworkSpec& field, double t, const Mat& x,
                  std::vector<LayerCache>* caches) {
  Mat z = with_time_row(x, t);
  if (caches) caches->resize(field.layers.size());
  for (size_t k = 0; k < field.layers.size(); ++k)
    z = layer_forward(field.layers[k], field.params[k], z,
                      caches ? &(*caches)[k] : nullptr);
  return z;
}

std::vector<Index> param_offsets(const NetworkSpec& net) {
  std::vector<Index> off(net.layers.size() + 1, 0);
  for (size_t k = 0; k < net.layers.size(); ++k)
    off[k + 1] = off[k] + net.layers[k].n_params;
  return off;
}

struct FieldVjp {
  Mat gx;      // d x B
  Vec gtheta;  // flat params
};

FieldVjp field_vjp(const NetworkSpec& field,
                   const std::vector<LayerCache>& caches, const Mat& v) {
  const std::vector<Index> off = param_offsets(field);
  FieldVjp out;
  out.gtheta = Vec::Zero(off.back());
  Mat vs = v;
  for (Index k = field.depth() - 1; k >= 0; --k) {
    const auto ku = static_cast<size_t>(k);
    out.gtheta.segment(off[ku], field.layers[ku].n_params) =
        layer_vjp_theta_sum(field.layers[ku], field.params[ku], caches[ku],
                            vs);
    vs = layer_vjp_x(field.layers[ku], field.params[ku], caches[ku], vs);
  }
  out.gx = vs.topRows(vs.rows() - 1);  // drop the time component
  return out;
}

Mat hermite_mid(const Mat& x0, const Mat& x1, const Mat& f0, const Mat& f1,
                double h) {
  return 0.5 * (x0 + x1) + (h / 8.0) * (f0 - f1);
}

}  // namespace

OdeModel build_ode_model(Index state_dim, const std::vector<Index>& hidden,
                         Activation act, LossKind loss, double horizon,
                         int steps, Rng& rng) {
  std::vector<Index> dims;
  dims.push_back(state_dim + 1);
  for (Index hdim : hidden) dims.push_back(hdim);
  dims.push_back(state_dim);
  OdeModel model;
  model.field = build_mlp(dims, act, loss, rng);
  model.loss = loss;
  model.horizon = horizon;
  model.steps = steps;
  if (horizon <= 0.0) throw dim_error("ode: horizon must be positive");
  if (steps < 1) throw dim_error("ode: need at least one step");
  return model;
}

Mat ode_field_eval(const NetworkSpec& field, double t, const Mat& x) {
  check_field(field);
  return field_forward(field, t, x, nullptr);
}

OdeTrajectory ode_forward(const NetworkSpec& field, const Mat& x0,
                          double horizon, int steps) {
  check_field(field);
  if (horizon <= 0.0) throw dim_error("ode_forward: horizon must be positive");
  if (steps < 1) throw dim_error("ode_forward: need at least one step");
  OdeTrajectory traj;
  traj.horizon = horizon;
  traj.h = horizon / steps;
  traj.nodes.resize(static_cast<size_t>(steps) + 1);
  traj.derivs.resize(static_cast<size_t>(steps) + 1);
  traj.nodes[0] = x0;
  traj.derivs[0] = field_forward(field, 0.0, x0, nullptr);
  const double h = traj.h;
  for (int n = 0; n < steps; ++n) {
    const double t = n * h;
    const Mat& x = traj.nodes[static_cast<size_t>(n)];
    const Mat& k1 = traj.derivs[static_cast<size_t>(n)];
    const Mat k2 = field_forward(field, t + 0.5 * h, x + 0.5 * h * k1, nullptr);
    const Mat k3 = field_forward(field, t + 0.5 * h, x + 0.5 * h * k2, nullptr);
    const Mat k4 = field_forward(field, t + h, x + h * k3, nullptr);
    Mat xn = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!xn.allFinite())
      throw divergence_error("ode_forward: state diverged at step " +
                             std::to_string(n));
    traj.derivs[static_cast<size_t>(n) + 1] =
        field_forward(field, t + h, xn, nullptr);
    traj.nodes[static_cast<size_t>(n) + 1] = std::move(xn);
  }
  return traj;
}

OdeAdjoint ode_adjoint_sweep(const NetworkSpec& field,
                             const OdeTrajectory& traj,
                             const Mat& terminal_q) {
  check_field(field);
  const Index steps = traj.steps();
  const double h = traj.h;
  const Index n_params = param_offsets(field).back();
  if (terminal_q.rows() != field.out_dim() ||
      terminal_q.cols() != traj.nodes[0].cols())
    throw dim_error("ode_adjoint_sweep: terminal cotangent shape mismatch");

  OdeAdjoint adj;
  adj.q.resize(static_cast<size_t>(steps) + 1);
  adj.p.resize(static_cast<size_t>(steps) + 1);
  adj.q[static_cast<size_t>(steps)] = terminal_q;
  adj.p[static_cast<size_t>(steps)] = Vec::Zero(n_params);

  auto rhs = [&](double t, const Mat& xval, const Mat& qv) {
    std::vector<LayerCache> caches;
    field_forward(field, t, xval, &caches);
    return field_vjp(field, caches, qv);
  };

  for (Index n = steps; n >= 1; --n) {
    const auto nu = static_cast<size_t>(n);
    const double t1 = n * h, t0 = (n - 1) * h, tm = t0 + 0.5 * h;
    const Mat& x1 = traj.nodes[nu];
    const Mat& x0 = traj.nodes[nu - 1];
    const Mat xm = hermite_mid(traj.nodes[nu - 1], traj.nodes[nu],
                               traj.derivs[nu - 1], traj.derivs[nu], h);
    const Mat& q1 = adj.q[nu];
    const Vec& p1 = adj.p[nu];

    const FieldVjp k1 = rhs(t1, x1, q1);
    const FieldVjp k2 = rhs(tm, xm, q1 + 0.5 * h * k1.gx);
    const FieldVjp k3 = rhs(tm, xm, q1 + 0.5 * h * k2.gx);
    const FieldVjp k4 = rhs(t0, x0, q1 + h * k3.gx);
    adj.q[nu - 1] =
        q1 + (h / 6.0) * (k1.gx + 2.0 * k2.gx + 2.0 * k3.gx + k4.gx);
    adj.p[nu - 1] = p1 + (h / 6.0) * (k1.gtheta + 2.0 * k2.gtheta +
                                      2.0 * k3.gtheta + k4.gtheta);
  }
  return adj;
}

OdeQuadFactors ode_quadrature_factors(const NetworkSpec& field,
                                      const OdeTrajectory& traj,
                                      const OdeAdjoint& adj) {
  check_field(field);
  const Index steps = traj.steps();
  const double h = traj.h;
  const Index batch = traj.nodes[0].cols();
  const std::vector<Index> off = param_offsets(field);

  OdeQuadFactors out;
  for (size_t k = 0; k < field.layers.size(); ++k) {
    for (const Branch& br : field.layers[k].branches) {
      if (!br.unit) continue;
      OdeQuadFactors::Block b;
      b.offset = off[k] + br.param_offset;
      b.m = br.unit->out;
      b.n = br.unit->in;
      b.a_int = Mat::Zero(b.n + 1, b.n + 1);
      b.b_int = Mat::Zero(b.m, b.m);
      out.blocks.push_back(std::move(b));
    }
  }

  for (Index n = 0; n <= steps; ++n) {
    const auto nu = static_cast<size_t>(n);
    const double w = h * ((n == 0 || n == steps) ? 0.5 : 1.0);
    std::vector<LayerCache> caches;
    field_forward(field, n * h, traj.nodes[nu], &caches);
    Mat vs = adj.q[nu];
    size_t block_at = out.blocks.size();
    // walk layers backward so the cotangent chain is available per layer
    std::vector<std::vector<KfacBlockObs>> per_layer(field.layers.size());
    for (Index k = field.depth() - 1; k >= 0; --k) {
      const auto ku = static_cast<size_t>(k);
      per_layer[ku] = layer_kfac_obs(field.layers[ku], field.params[ku],
                                     caches[ku], vs);
      vs = layer_vjp_x(field.layers[ku], field.params[ku], caches[ku], vs);
    }
    block_at = 0;
    for (size_t k = 0; k < field.layers.size(); ++k) {
      for (const KfacBlockObs& o : per_layer[k]) {
        OdeQuadFactors::Block& b = out.blocks[block_at++];
        b.a_int += (w / double(batch)) * (o.x_aug * o.x_aug.transpose());
        // per-sample cotangents carry 1/B; rescale to per-sample-loss units
        b.b_int += (w * double(batch)) * (o.v_h * o.v_h.transpose());
      }
    }
  }
  return out;
}

OdeStepResult ode_train_step(OdeModel& model, const Mat& x0, const Targets& t,
                             const OdeStepOptions& opts) {
  check_field(model.field);
  if (opts.gamma < 0.0) throw dim_error("ode_train_step: gamma must be >= 0");
  if (!(opts.eta > 0.0)) throw dim_error("ode_train_step: eta must be positive");

  OdeStepResult res;
  const double horizon = model.horizon;
  const OdeTrajectory traj =
      ode_forward(model.field, x0, horizon, model.steps);
  const Mat& xt = traj.nodes.back();
  res.loss_before = loss_value(model.loss, xt, t);
  if (!std::isfinite(res.loss_before))
    throw divergence_error("ode_train_step: loss is not finite");

  const Mat lgrad = loss_grad(model.loss, xt, t);
  const OdeAdjoint adj = ode_adjoint_sweep(model.field, traj, lgrad);
  const Vec theta = flat_params(model.field);
  const Vec q_theta = adj.p[0] + opts.gamma * horizon * theta;

  Vec dtheta = -q_theta;
  if (!opts.identity_precond) {
    const OdeQuadFactors quad =
        ode_quadrature_factors(model.field, traj, adj);
    for (const OdeQuadFactors::Block& b : quad.blocks) {
      const SymEig ae = sym_eig(b.a_int);
      const SymEig be = sym_eig(b.b_int);
      kron_precondition_block(ae, be, opts.gamma * horizon,
                              KfacGammaMode::AddInverse, opts.pinv_tol, b.m,
                              b.n, dtheta.data() + b.offset);
    }
  }
  res.dtheta_norm = dtheta.norm();

  if (opts.horizon_opt) {
    const Vec dtheta_applied = opts.eta * dtheta;
    const Mat& f_t = traj.derivs.back();
    const Index batch = x0.cols();
    double q_t = 0.5 * opts.gamma * theta.squaredNorm() +
                 opts.penalty_c * horizon +
                 (f_t.cwiseProduct(lgrad)).sum();
    double q_tt = opts.penalty_c;
    Mat terminal_u(model.state_dim(), batch);
    for (Index i = 0; i < batch; ++i) {
      const Mat lh = loss_hess_sample(model.loss, xt, t, i);
      terminal_u.col(i) = lh * f_t.col(i);
      q_tt += f_t.col(i).dot(terminal_u.col(i));
    }
    res.q_t = q_t;
    res.q_tt = q_tt;
    if (q_tt <= 0.0) {
      res.horizon_skipped = true;
    } else {
      const OdeAdjoint tadj =
          ode_adjoint_sweep(model.field, traj, terminal_u);
      const double dts =
          -(q_t + tadj.p[0].dot(dtheta_applied)) / q_tt;
      const double t_new = std::clamp(horizon + opts.eta_horizon * dts,
                                      opts.t_min, opts.t_max);
      res.horizon_delta = t_new - horizon;
      model.horizon = t_new;
    }
  }

  NetworkSpec& field = model.field;
  set_flat_params(field, theta + opts.eta * dtheta);
  return res;
}

Mat ode_predict(const OdeModel& model, const Mat& x0) {
  return ode_forward(model.field, x0, model.horizon, model.steps)
      .nodes.back();
}

FieldJacobians field_jacobians(const NetworkSpec& field, double t,
                               const Vec& x) {
  check_field(field);
  const Index d = field.out_dim();
  std::vector<LayerCache> caches;
  field_forward(field, t, x, &caches);
  const std::vector<Index> off = param_offsets(field);

  FieldJacobians j;
  j.fx.resize(d, d);
  for (Index l = 0; l < d; ++l) {
    Mat w = Mat::Zero(d + 1, 1);
    w(l, 0) = 1.0;
    for (size_t k = 0; k < field.layers.size(); ++k)
      w = layer_jvp_x(field.layers[k], field.params[k], caches[k], w);
    j.fx.col(l) = w.col(0);
  }
  j.fth.resize(d, off.back());
  for (size_t k = 0; k < field.layers.size(); ++k) {
    for (Index p = 0; p < field.layers[k].n_params; ++p) {
      Vec e = Vec::Zero(field.layers[k].n_params);
      e[p] = 1.0;
      Mat w = layer_jvp_theta(field.layers[k], field.params[k], caches[k], e);
      for (size_t k2 = k + 1; k2 < field.layers.size(); ++k2)
        w = layer_jvp_x(field.layers[k2], field.params[k2], caches[k2], w);
      j.fth.col(off[k] + p) = w.col(0);
    }
  }
  return j;
}

OdeDenseSecond ode_dense_second_oracle(const NetworkSpec& field,
                                       const OdeTrajectory& traj,
                                       const Vec& terminal_q, double gamma) {
  check_field(field);
  if (traj.nodes[0].cols() != 1)
    throw dim_error("ode_dense_second_oracle: single sample only");
  const Index steps = traj.steps();
  const double h = traj.h;
  const Index d = field.out_dim();
  const Index n_params = param_offsets(field).back();

  OdeDenseSecond out;
  out.qxx.resize(static_cast<size_t>(steps) + 1);
  out.qxt.resize(static_cast<size_t>(steps) + 1);
  out.qtt.resize(static_cast<size_t>(steps) + 1);
  out.qxx[static_cast<size_t>(steps)] = terminal_q * terminal_q.transpose();
  out.qxt[static_cast<size_t>(steps)] = Mat::Zero(d, n_params);
  out.qtt[static_cast<size_t>(steps)] = Mat::Zero(n_params, n_params);

  struct State {
    Mat qxx, qxt, qtt;
  };
  auto rhs = [&](double t, const Vec& xval, const State& s) {
    const FieldJacobians j = field_jacobians(field, t, xval);
    State ds;
    ds.qxx = j.fx.transpose() * s.qxx + s.qxx * j.fx;
    ds.qxt = j.fx.transpose() * s.qxt + s.qxx * j.fth;
    ds.qtt = j.fth.transpose() * s.qxt + s.qxt.transpose() * j.fth +
             gamma * Mat::Identity(n_params, n_params);
    return ds;
  };

  for (Index n = steps; n >= 1; --n) {
    const auto nu = static_cast<size_t>(n);
    const double t1 = n * h, t0 = (n - 1) * h, tm = t0 + 0.5 * h;
    const Vec x1 = traj.nodes[nu].col(0);
    const Vec x0 = traj.nodes[nu - 1].col(0);
    const Vec xm = hermite_mid(traj.nodes[nu - 1], traj.nodes[nu],
                               traj.derivs[nu - 1], traj.derivs[nu], h)
                       .col(0);
    State s{out.qxx[nu], out.qxt[nu], out.qtt[nu]};
    const State k1 = rhs(t1, x1, s);
    State s2{s.qxx + 0.5 * h * k1.qxx, s.qxt + 0.5 * h * k1.qxt,
             s.qtt + 0.5 * h * k1.qtt};
    const State k2 = rhs(tm, xm, s2);
    State s3{s.qxx + 0.5 * h * k2.qxx, s.qxt + 0.5 * h * k2.qxt,
             s.qtt + 0.5 * h * k2.qtt};
    const State k3 = rhs(tm, xm, s3);
    State s4{s.qxx + h * k3.qxx, s.qxt + h * k3.qxt, s.qtt + h * k3.qtt};
    const State k4 = rhs(t0, x0, s4);
    out.qxx[nu - 1] =
        s.qxx + (h / 6.0) * (k1.qxx + 2.0 * k2.qxx + 2.0 * k3.qxx + k4.qxx);
    out.qxt[nu - 1] =
        s.qxt + (h / 6.0) * (k1.qxt + 2.0 * k2.qxt + 2.0 * k3.qxt + k4.qxt);
    out.qtt[nu - 1] =
        s.qtt + (h / 6.0) * (k1.qtt + 2.0 * k2.qtt + 2.0 * k3.qtt + k4.qtt);
  }
  return out;
}

UnrolledGrad unrolled_rk4_gradient(const NetworkSpec& field, const Vec& x0,
                                   LossKind loss, const Targets& t,
                                   double horizon, int steps) {
  check_field(field);
  const double h = horizon / steps;
  struct StepRecord {
    Vec s1, s2, s3, s4;
    double t0;
  };
  std::vector<StepRecord> recs(static_cast<size_t>(steps));
  Vec x = x0;
  for (int n = 0; n < steps; ++n) {
    StepRecord& r = recs[static_cast<size_t>(n)];
    r.t0 = n * h;
    r.s1 = x;
    const Vec k1 = field_forward(field, r.t0, r.s1, nullptr).col(0);
    r.s2 = x + 0.5 * h * k1;
    const Vec k2 = field_forward(field, r.t0 + 0.5 * h, r.s2, nullptr).col(0);
    r.s3 = x + 0.5 * h * k2;
    const Vec k3 = field_forward(field, r.t0 + 0.5 * h, r.s3, nullptr).col(0);
    r.s4 = x + h * k3;
    const Vec k4 = field_forward(field, r.t0 + h, r.s4, nullptr).col(0);
    x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }

  UnrolledGrad out;
  out.loss = loss_value(loss, x, t);
  out.grad_theta = Vec::Zero(param_offsets(field).back());
  Vec a = loss_grad(loss, x, t).col(0);

  auto pullback = [&](double tv, const Vec& xv, const Vec& cot) {
    std::vector<LayerCache> caches;
    field_forward(field, tv, xv, &caches);
    return field_vjp(field, caches, cot);
  };

  for (int n = steps - 1; n >= 0; --n) {
    const StepRecord& r = recs[static_cast<size_t>(n)];
    const FieldVjp v4 = pullback(r.t0 + h, r.s4, (h / 6.0) * a);
    out.grad_theta += v4.gtheta;
    const Vec k3cot = (h / 3.0) * a + h * v4.gx.col(0);
    const FieldVjp v3 = pullback(r.t0 + 0.5 * h, r.s3, k3cot);
    out.grad_theta += v3.gtheta;
    const Vec k2cot = (h / 3.0) * a + 0.5 * h * v3.gx.col(0);
    const FieldVjp v2 = pullback(r.t0 + 0.5 * h, r.s2, k2cot);
    out.grad_theta += v2.gtheta;
    const Vec k1cot = (h / 6.0) * a + 0.5 * h * v2.gx.col(0);
    const FieldVjp v1 = pullback(r.t0, r.s1, k1cot);
    out.grad_theta += v1.gtheta;
    a = a + v4.gx.col(0) + v3.gx.col(0) + v2.gx.col(0) + v1.gx.col(0);
  }
  out.grad_x0 = a;
  return out;
}

}  // namespace ocnopt
