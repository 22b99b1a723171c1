#include "ocnopt/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ocnopt {

namespace {

void check_backward_args(const NetworkSpec& net, const BatchActivations& acts,
                         const BackwardOptions& opts) {
  validate_network(net);
  if (acts.x.size() != static_cast<size_t>(net.depth()) + 1)
    throw dim_error("backward_pass: activations do not match network depth");
  if (opts.beta <= 0.0 || opts.beta > 1.0)
    throw dim_error("backward_pass: beta must lie in (0, 1]");
  if (opts.gamma < 0.0)
    throw dim_error("backward_pass: gamma must be >= 0");
}

double clamp_radicand(double rad, int* clamps) {
  if (rad >= 0.0 && rad <= 1.0) return rad;
  ++*clamps;
  return std::clamp(rad, 0.0, 1.0);
}

}  // namespace

BackwardResult backward_pass(const NetworkSpec& net,
                             const BatchActivations& acts, const Targets& t,
                             CurvatureBase& curvature,
                             const BackwardOptions& opts) {
  check_backward_args(net, acts, opts);
  const Index depth = net.depth();
  const Index batch = acts.batch();

  BackwardResult res;
  res.policies.resize(static_cast<size_t>(depth));
  res.states.resize(static_cast<size_t>(depth) + 1);
  res.diag.radicand.assign(static_cast<size_t>(depth), 1.0);

  // Per-sample value gradients (columns carry the 1/B factor) and the
  // batch-level feedback correction stream.
  Mat vs = loss_grad(net.loss, acts.x[static_cast<size_t>(depth)], t);
  Vec corr = Vec::Zero(net.out_dim());
  bool corr_active = false;

  const Vec gbar = vs.rowwise().sum();
  Vec r = opts.beta * gbar;
  res.states[static_cast<size_t>(depth)] = {gbar, r};

  for (Index k = depth - 1; k >= 0; --k) {
    const auto ku = static_cast<size_t>(k);
    const LayerNode& layer = net.layers[ku];
    const Vec& theta = net.params[ku];
    const LayerCache& bc = acts.cache[ku];
    const LayerCache& rc = acts.rcache[ku];

    Vec q_theta = layer_vjp_theta_sum(layer, theta, bc, vs);
    if (corr_active)
      q_theta += layer_vjp_theta_sum(layer, theta, rc, corr);
    if (opts.gamma > 0.0) q_theta += opts.gamma * theta;

    const Vec q = layer_vjp_x(layer, theta, rc, r);
    const Vec p = layer_vjp_theta_sum(layer, theta, rc, r);

    CurvatureObservation obs;
    obs.q_theta = q_theta;
    obs.p = p;
    if (curvature.needs_blocks()) {
      Mat v_obs = vs;
      if (corr_active) v_obs.colwise() += corr / double(batch);
      obs.blocks = layer_kfac_obs(layer, theta, bc, v_obs);
    }
    curvature.update_stats(k, obs);

    const Vec g = curvature.apply_pinv(k, q_theta);
    const Vec h = curvature.apply_pinv(k, p);
    const double quad = p.dot(h);
    const double rad_raw = 1.0 - opts.radicand_sign * quad;
    res.diag.radicand[ku] = rad_raw;
    const double rad = clamp_radicand(rad_raw, &res.diag.radicand_clamps);

    FeedbackPolicy& pol = res.policies[ku];
    pol.g = g;
    pol.h = opts.feedback ? h : Vec::Zero(h.size());
    pol.q = opts.feedback ? q : Vec::Zero(q.size());

    res.diag.q_norm_max = std::max(res.diag.q_norm_max, q.norm());
    res.diag.p_norm_max = std::max(res.diag.p_norm_max, p.norm());

    vs = layer_vjp_x(layer, theta, bc, vs);
    if (opts.feedback) {
      Vec c_next = corr_active ? Vec(layer_vjp_x(layer, theta, rc, corr))
                               : Vec(Vec::Zero(layer.in_dim));
      corr = c_next - q * p.dot(g);
      corr_active = true;
    }
    r = std::sqrt(rad) * q;

    BackwardState& st = res.states[ku];
    st.vx = vs.rowwise().sum();
    if (corr_active) st.vx += corr;
    st.r = r;
  }
  return res;
}

UpdateResult forward_update(NetworkSpec& net, const BatchActivations& acts,
                            const std::vector<FeedbackPolicy>& policies,
                            double eta) {
  if (!(eta > 0.0)) throw dim_error("forward_update: eta must be positive");
  return forward_update_with(
      net, acts, policies,
      [&net, eta](Index k, const Vec& dtheta) {
        net.params[static_cast<size_t>(k)] += eta * dtheta;
      });
}

UpdateResult forward_update_with(
    NetworkSpec& net, const BatchActivations& acts,
    const std::vector<FeedbackPolicy>& policies,
    const std::function<void(Index, const Vec&)>& move_params) {
  validate_network(net);
  if (policies.size() != static_cast<size_t>(net.depth()))
    throw dim_error("forward_update: one policy per layer required");

  UpdateResult out;
  Vec dx = Vec::Zero(net.in_dim());
  for (Index k = 0; k < net.depth(); ++k) {
    const auto ku = static_cast<size_t>(k);
    const LayerNode& layer = net.layers[ku];
    const FeedbackPolicy& pol = policies[ku];
    if (pol.g.size() != layer.n_params)
      throw dim_error("forward_update: policy size mismatch at layer " +
                      std::to_string(k));
    const Vec dtheta = pol.dtheta(dx);
    const Vec x_in = acts.xr[ku] + dx;
    const Vec x_pert =
        layer_forward(layer, net.params[ku] + dtheta, x_in, nullptr);
    dx = x_pert - acts.xr[ku + 1];
    if (!dx.allFinite())
      throw divergence_error(
          "forward_update: perturbation diverged at layer " +
          std::to_string(k));
    move_params(k, dtheta);
    out.dx_norm_max = std::max(out.dx_norm_max, dx.norm());
    out.dtheta_norm_max = std::max(out.dtheta_norm_max, dtheta.norm());
  }
  return out;
}

ScalarGnResult scalar_gn_backward(const NetworkSpec& net,
                                  const BatchActivations& acts,
                                  const Targets& t,
                                  const CurvatureBase& curvature,
                                  double beta) {
  validate_network(net);
  if (beta <= 0.0 || beta > 1.0)
    throw dim_error("scalar_gn_backward: beta must lie in (0, 1]");
  const Index depth = net.depth();

  ScalarGnResult res;
  res.alpha.assign(static_cast<size_t>(depth) + 1, 0.0);
  res.alpha_bar.assign(static_cast<size_t>(depth) + 1, 0.0);
  res.ghat.resize(static_cast<size_t>(depth) + 1);

  const Mat vs = loss_grad(net.loss, acts.x[static_cast<size_t>(depth)], t);
  res.ghat[static_cast<size_t>(depth)] = vs.rowwise().sum();
  res.alpha[static_cast<size_t>(depth)] = beta;
  res.alpha_bar[static_cast<size_t>(depth)] = 1.0;

  for (Index k = depth - 1; k >= 0; --k) {
    const auto ku = static_cast<size_t>(k);
    const LayerNode& layer = net.layers[ku];
    const Vec& theta = net.params[ku];
    const LayerCache& rc = acts.rcache[ku];
    const Vec& g_next = res.ghat[ku + 1];
    const double a_next = res.alpha[ku + 1];

    res.ghat[ku] = layer_vjp_x(layer, theta, rc, g_next);
    const Vec pg = layer_vjp_theta_sum(layer, theta, rc, g_next);
    const double s = a_next * a_next * curvature.quadratic_form(k, pg);
    const double rad_raw = 1.0 - s;
    double rad = rad_raw;
    if (rad < 0.0 || rad > 1.0) {
      ++res.radicand_clamps;
      rad = std::clamp(rad, 0.0, 1.0);
    }
    res.alpha[ku] = std::sqrt(rad) * a_next;
    // The value-gradient stream keeps the raw factor: the feedback
    // correction it carries is not clamped, only the Hessian factor is.
    res.alpha_bar[ku] = res.alpha_bar[ku + 1] * rad_raw;
  }
  return res;
}

}  // namespace ocnopt
