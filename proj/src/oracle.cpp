#include "ocnopt/oracle.hpp"

#include <cmath>
#include <string>

namespace ocnopt {

namespace {

constexpr Index kMaxStackedState = 16;
constexpr Index kMaxLayerParams = 272;  // a 16 -> 16 dense stage

void check_oracle_dims(const NetworkSpec& net, Index batch) {
  for (const LayerNode& layer : net.layers) {
    if (layer.in_dim * batch > kMaxStackedState ||
        layer.out_dim * batch > kMaxStackedState)
      throw dim_error("oracle: stacked state dimension exceeds " +
                      std::to_string(kMaxStackedState));
    if (layer.n_params > kMaxLayerParams)
      throw dim_error("oracle: layer parameter count exceeds " +
                      std::to_string(kMaxLayerParams));
  }
}

Vec stack(const Mat& m) {
  return Eigen::Map<const Vec>(m.data(), m.size());
}

Mat unstack(const Vec& v, Index rows, Index cols) {
  if (v.size() != rows * cols) throw dim_error("oracle: unstack size");
  return Eigen::Map<const Mat>(v.data(), rows, cols);
}

}  // namespace

Mat pinv_sym(const Mat& a, double tol) {
  if (a.rows() != a.cols()) throw dim_error("pinv_sym: square input required");
  if (a.rows() == 0) return a;
  SymEig e = sym_eig(a);
  const double lmax = e.values.cwiseAbs().maxCoeff();
  const double cut = tol * lmax;
  Vec inv = Vec::Zero(a.rows());
  for (Index i = 0; i < a.rows(); ++i)
    if (std::abs(e.values[i]) > cut && e.values[i] != 0.0)
      inv[i] = 1.0 / e.values[i];
  return e.vectors * inv.asDiagonal() * e.vectors.transpose();
}

StackedJacobians stacked_jacobians(const LayerNode& layer, const Vec& theta,
                                   const LayerCache& cache) {
  const Index batch = cache.in.cols();
  const Index din = layer.in_dim, dout = layer.out_dim;
  StackedJacobians j;
  j.fx = Mat::Zero(dout * batch, din * batch);
  for (Index l = 0; l < din; ++l) {
    Mat w = Mat::Zero(din, batch);
    w.row(l).setOnes();
    const Mat dy = layer_jvp_x(layer, theta, cache, w);
    for (Index i = 0; i < batch; ++i)
      j.fx.block(i * dout, i * din + l, dout, 1) = dy.col(i);
  }
  j.fth.resize(dout * batch, layer.n_params);
  for (Index p = 0; p < layer.n_params; ++p) {
    Vec e = Vec::Zero(layer.n_params);
    e[p] = 1.0;
    j.fth.col(p) = stack(layer_jvp_theta(layer, theta, cache, e));
  }
  return j;
}

Mat fxx_contract(const LayerNode& layer, const Vec& theta, const Mat& x,
                 const Mat& v, double step) {
  const Index batch = x.cols();
  const Index din = layer.in_dim;
  Mat out(din * batch, din * batch);
  for (Index i = 0; i < batch; ++i) {
    for (Index l = 0; l < din; ++l) {
      Mat xp = x, xm = x;
      xp(l, i) += step;
      xm(l, i) -= step;
      LayerCache cp, cm;
      layer_forward(layer, theta, xp, &cp);
      layer_forward(layer, theta, xm, &cm);
      out.col(i * din + l) = (stack(layer_vjp_x(layer, theta, cp, v)) -
                              stack(layer_vjp_x(layer, theta, cm, v))) /
                             (2.0 * step);
    }
  }
  return 0.5 * (out + out.transpose());
}

Mat ftt_contract(const LayerNode& layer, const Vec& theta, const Mat& x,
                 const Mat& v, double step) {
  const Index np = layer.n_params;
  Mat out(np, np);
  for (Index p = 0; p < np; ++p) {
    Vec tp = theta, tm = theta;
    tp[p] += step;
    tm[p] -= step;
    LayerCache cp, cm;
    layer_forward(layer, tp, x, &cp);
    layer_forward(layer, tm, x, &cm);
    out.col(p) = (layer_vjp_theta_sum(layer, tp, cp, v) -
                  layer_vjp_theta_sum(layer, tm, cm, v)) /
                 (2.0 * step);
  }
  return 0.5 * (out + out.transpose());
}

Mat fxt_contract(const LayerNode& layer, const Vec& theta, const Mat& x,
                 const Mat& v, double step) {
  const Index batch = x.cols();
  Mat out(layer.in_dim * batch, layer.n_params);
  for (Index p = 0; p < layer.n_params; ++p) {
    Vec tp = theta, tm = theta;
    tp[p] += step;
    tm[p] -= step;
    LayerCache cp, cm;
    layer_forward(layer, tp, x, &cp);
    layer_forward(layer, tm, x, &cm);
    out.col(p) = (stack(layer_vjp_x(layer, tp, cp, v)) -
                  stack(layer_vjp_x(layer, tm, cm, v))) /
                 (2.0 * step);
  }
  return out;
}

DdpResult dense_ddp_step(const NetworkSpec& net, const Mat& x0,
                         const Targets& t, const DdpOptions& opts) {
  validate_network(net);
  check_oracle_dims(net, x0.cols());
  if (opts.gamma < 0.0) throw dim_error("dense_ddp_step: gamma must be >= 0");
  const Index depth = net.depth();
  const Index batch = x0.cols();
  const BatchActivations acts = forward(net, x0);
  const Mat& zk = acts.x[static_cast<size_t>(depth)];

  DdpResult res;
  res.loss = loss_value(net.loss, zk, t);
  res.layers.resize(static_cast<size_t>(depth));

  const Mat lg = loss_grad(net.loss, zk, t);
  Vec vx = stack(lg);
  const Index dk = net.out_dim();
  Mat vxx;
  if (opts.terminal == TerminalModel::ExactHessian) {
    vxx = Mat::Zero(dk * batch, dk * batch);
    for (Index i = 0; i < batch; ++i)
      vxx.block(i * dk, i * dk, dk, dk) =
          loss_hess_sample(net.loss, zk, t, i);
  } else {
    const Vec y = opts.beta * vx;
    vxx = y * y.transpose();
  }
  res.vx_terminal = vx;
  res.vxx_terminal = vxx;

  for (Index k = depth - 1; k >= 0; --k) {
    const auto ku = static_cast<size_t>(k);
    const LayerNode& layer = net.layers[ku];
    const Vec& theta = net.params[ku];
    const LayerCache& cache = acts.cache[ku];
    const Mat& xin = acts.x[ku];
    const StackedJacobians j = stacked_jacobians(layer, theta, cache);
    const Mat v_next = unstack(vx, layer.out_dim, batch);

    DdpLayer& L = res.layers[ku];
    L.qx = j.fx.transpose() * vx;
    L.qth = j.fth.transpose() * vx;
    if (opts.gamma > 0.0) L.qth += opts.gamma * theta;

    L.qxx = j.fx.transpose() * vxx * j.fx;
    L.qtt = j.fth.transpose() * vxx * j.fth;
    L.qxt = j.fx.transpose() * vxx * j.fth;
    if (opts.include_f_second) {
      L.qxx += fxx_contract(layer, theta, xin, v_next, opts.fd_step);
      L.qtt += ftt_contract(layer, theta, xin, v_next, opts.fd_step);
      L.qxt += fxt_contract(layer, theta, xin, v_next, opts.fd_step);
    }
    if (opts.gamma > 0.0)
      L.qtt += opts.gamma * Mat::Identity(layer.n_params, layer.n_params);

    if (opts.force_zero_qxx) L.qxx.setZero();
    if (opts.force_zero_qxt) L.qxt.setZero();
    if (opts.force_identity_qtt)
      L.qtt = Mat::Identity(layer.n_params, layer.n_params);

    const Mat qtt_pinv = pinv_sym(L.qtt, opts.pinv_tol);
    L.g = qtt_pinv * L.qth;
    L.kfb = qtt_pinv * L.qxt.transpose();

    vx = L.qx - L.qxt * L.g;
    vxx = L.qxx - L.qxt * L.kfb;
    vxx = 0.5 * (vxx + vxx.transpose());
    L.vx = vx;
    L.vxx = vxx;
  }
  return res;
}

BackpropResult backprop_reference(const NetworkSpec& net, const Mat& x0,
                                  const Targets& t) {
  validate_network(net);
  const Index depth = net.depth();
  const BatchActivations acts = forward(net, x0);
  BackpropResult res;
  res.loss = loss_value(net.loss, acts.x[static_cast<size_t>(depth)], t);
  res.grad_theta.resize(static_cast<size_t>(depth));
  res.grad_x.resize(static_cast<size_t>(depth) + 1);
  Mat vs = loss_grad(net.loss, acts.x[static_cast<size_t>(depth)], t);
  res.grad_x[static_cast<size_t>(depth)] = vs;
  for (Index k = depth - 1; k >= 0; --k) {
    const auto ku = static_cast<size_t>(k);
    res.grad_theta[ku] =
        layer_vjp_theta_sum(net.layers[ku], net.params[ku], acts.cache[ku], vs);
    vs = layer_vjp_x(net.layers[ku], net.params[ku], acts.cache[ku], vs);
    res.grad_x[ku] = vs;
  }
  return res;
}

std::vector<Vec> newton_reference(const NetworkSpec& net, const Mat& x0,
                                  const Targets& t, double gamma,
                                  double fd_step, double pinv_tol) {
  validate_network(net);
  check_oracle_dims(net, x0.cols());
  const Index depth = net.depth();
  std::vector<Vec> steps(static_cast<size_t>(depth));
  NetworkSpec work = net;
  for (Index k = 0; k < depth; ++k) {
    const auto ku = static_cast<size_t>(k);
    const Index np = net.layers[ku].n_params;
    Vec grad = backprop_reference(net, x0, t).grad_theta[ku];
    if (gamma > 0.0) grad += gamma * net.params[ku];
    Mat hess(np, np);
    for (Index p = 0; p < np; ++p) {
      work.params[ku] = net.params[ku];
      work.params[ku][p] += fd_step;
      Vec gp = backprop_reference(work, x0, t).grad_theta[ku];
      work.params[ku][p] = net.params[ku][p] - fd_step;
      Vec gm = backprop_reference(work, x0, t).grad_theta[ku];
      hess.col(p) = (gp - gm) / (2.0 * fd_step);
    }
    work.params[ku] = net.params[ku];
    hess = 0.5 * (hess + hess.transpose());
    if (gamma > 0.0) hess += gamma * Mat::Identity(np, np);
    steps[ku] = -(pinv_sym(hess, pinv_tol) * grad);
  }
  return steps;
}

RankNResult rank_n_backward(const NetworkSpec& net, const Mat& x0,
                            const std::vector<Vec>& terminal_factors,
                            double gamma, double pinv_tol) {
  validate_network(net);
  check_oracle_dims(net, x0.cols());
  if (terminal_factors.empty())
    throw dim_error("rank_n_backward: need at least one terminal factor");
  const Index depth = net.depth();
  const Index batch = x0.cols();
  const Index n_factors = static_cast<Index>(terminal_factors.size());
  for (const Vec& y : terminal_factors)
    if (y.size() != net.out_dim() * batch)
      throw dim_error("rank_n_backward: terminal factor size mismatch");
  const BatchActivations acts = forward(net, x0);

  RankNResult res;
  res.factors.resize(static_cast<size_t>(depth) + 1);
  res.factors[static_cast<size_t>(depth)] = terminal_factors;

  for (Index k = depth - 1; k >= 0; --k) {
    const auto ku = static_cast<size_t>(k);
    const LayerNode& layer = net.layers[ku];
    const StackedJacobians j =
        stacked_jacobians(layer, net.params[ku], acts.cache[ku]);
    const std::vector<Vec>& r_next = res.factors[ku + 1];

    Mat qmat(layer.in_dim * batch, n_factors);
    Mat pmat(layer.n_params, n_factors);
    for (Index i = 0; i < n_factors; ++i) {
      qmat.col(i) = j.fx.transpose() * r_next[static_cast<size_t>(i)];
      pmat.col(i) = j.fth.transpose() * r_next[static_cast<size_t>(i)];
    }
    Mat qtt = pmat * pmat.transpose();
    if (gamma > 0.0)
      qtt += gamma * Mat::Identity(layer.n_params, layer.n_params);
    const Mat qtt_pinv = pinv_psd(qtt, pinv_tol);
    const Mat smix =
        Mat::Identity(n_factors, n_factors) - pmat.transpose() * qtt_pinv * pmat;
    SymEig se = sym_eig(smix);
    Mat qu = qmat * se.vectors;
    std::vector<Vec> r_k(static_cast<size_t>(n_factors));
    for (Index i = 0; i < n_factors; ++i) {
      double sigma = se.values[i];
      if (sigma < 0.0) {
        if (sigma < -1e-8)
          throw not_psd_error("rank_n_backward: factor mix eigenvalue " +
                              std::to_string(sigma));
        ++res.clamped_sigmas;
        sigma = 0.0;
      }
      r_k[static_cast<size_t>(i)] = std::sqrt(sigma) * qu.col(i);
    }
    res.factors[ku] = std::move(r_k);
  }
  return res;
}

Vec ExactRank1Curvature::apply_pinv(Index layer, const Vec& v) const {
  const Vec& p = p_.at(static_cast<size_t>(layer));
  if (p.size() != v.size())
    throw dim_error("ExactRank1Curvature: no factor recorded for layer");
  const double pp = p.squaredNorm();
  if (gamma_ > 0.0) {
    // (gamma I + p p^T)^{-1} v by the rank-one inversion identity.
    return (v - p * (p.dot(v) / (gamma_ + pp))) / gamma_;
  }
  if (pp == 0.0) return Vec::Zero(v.size());
  // (p p^T)^+ v = p (p . v) / ||p||^4
  return p * (p.dot(v) / (pp * pp));
}

}  // namespace ocnopt
