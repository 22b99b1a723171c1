#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "ocnopt/core.hpp"
#include "ocnopt/oracle.hpp"

using namespace ocnopt;

namespace {

Mat random_mat(Index r, Index c, Rng& rng) {
  Mat m(r, c);
  for (Index j = 0; j < m.size(); ++j) m.data()[j] = rng.normal();
  return m;
}

Targets random_labels(Index classes, Index b, Rng& rng) {
  Eigen::VectorXi labels(b);
  for (Index i = 0; i < b; ++i) labels[i] = rng.uniform_int(int(classes));
  return targets_from_labels(labels);
}

CurvatureModel identity_curvature(const NetworkSpec& net) {
  CurvatureOptions co;
  co.kind = CurvatureKind::Identity;
  return CurvatureModel(net, co);
}

}  // namespace

TEST_CASE("open-loop identity-curvature gains are the damped gradient") {
  for (double gamma : {0.0, 0.05}) {
    for (int seed = 0; seed < 10; ++seed) {
      Rng rng(100 + seed);
      NetworkSpec net = build_mlp({3, 6, 5, 2}, Activation::Tanh,
                                  LossKind::SoftmaxCrossEntropy, rng);
      const Mat x0 = random_mat(3, 5, rng);
      const Targets t = random_labels(2, 5, rng);
      const BatchActivations acts = forward(net, x0);

      CurvatureModel curv = identity_curvature(net);
      BackwardOptions opts;
      opts.gamma = gamma;
      opts.beta = 0.5;
      opts.feedback = false;
      const BackwardResult back = backward_pass(net, acts, t, curv, opts);
      const BackpropResult bp = backprop_reference(net, x0, t);

      for (Index k = 0; k < net.depth(); ++k) {
        const Vec expect =
            bp.grad_theta[size_t(k)] + gamma * net.params[size_t(k)];
        CHECK((back.policies[size_t(k)].g - expect).cwiseAbs().maxCoeff() <
              1e-12);
        // with feedback off the closed-loop gain is explicitly zeroed
        CHECK(back.policies[size_t(k)].h.cwiseAbs().maxCoeff() == 0.0);
        CHECK(back.policies[size_t(k)].q.cwiseAbs().maxCoeff() == 0.0);
      }
    }
  }
}

TEST_CASE("a vanishing terminal weight recovers the open-loop gradient") {
  Rng rng(7);
  NetworkSpec net = build_mlp({3, 5, 4, 2}, Activation::Tanh,
                              LossKind::MeanSquaredError, rng);
  const Mat x0 = random_mat(3, 4, rng);
  const Targets t = targets_from_values(random_mat(2, 4, rng));
  const BatchActivations acts = forward(net, x0);

  CurvatureModel curv = identity_curvature(net);
  BackwardOptions opts;
  opts.beta = 1e-8;
  opts.feedback = true;
  const BackwardResult back = backward_pass(net, acts, t, curv, opts);
  const BackpropResult bp = backprop_reference(net, x0, t);

  for (Index k = 0; k < net.depth(); ++k) {
    CHECK((back.policies[size_t(k)].g - bp.grad_theta[size_t(k)])
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    // feedback terms scale with the terminal weight
    CHECK(back.policies[size_t(k)].h.norm() * back.policies[size_t(k)].q.norm() <
          1e-10);
  }
}

TEST_CASE("zero loss gradient produces identically zero policies") {
  Rng rng(11);
  NetworkSpec net = build_mlp({3, 4, 2}, Activation::Tanh,
                              LossKind::MeanSquaredError, rng);
  const Mat x0 = random_mat(3, 3, rng);
  BatchActivations acts = forward(net, x0);
  const Targets t = targets_from_values(acts.x.back());  // exact fit

  CurvatureModel curv = identity_curvature(net);
  BackwardOptions opts;
  const BackwardResult back = backward_pass(net, acts, t, curv, opts);
  CHECK(back.diag.radicand_clamps == 0);
  for (Index k = 0; k < net.depth(); ++k) {
    CHECK(back.policies[size_t(k)].g.cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.policies[size_t(k)].h.cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.policies[size_t(k)].q.cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.diag.radicand[size_t(k)] == 1.0);
  }

  const Vec before = flat_params(net);
  forward_update(net, acts, back.policies, 0.5);
  CHECK((flat_params(net) - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rank-one factors assemble the dense stage curvature") {
  for (int seed = 0; seed < 8; ++seed) {
    Rng rng(900 + seed);
    const bool mse = seed % 2 == 1;
    NetworkSpec net = build_mlp({3, 5, 4, 2}, Activation::Tanh,
                                mse ? LossKind::MeanSquaredError
                                    : LossKind::SoftmaxCrossEntropy,
                                rng);
    const Mat x0 = random_mat(3, 1, rng);
    const Targets t = mse ? targets_from_values(random_mat(2, 1, rng))
                          : random_labels(2, 1, rng);
    const BatchActivations acts = forward(net, x0);

    BackwardOptions opts;
    opts.gamma = 0.08;
    opts.beta = 0.9;
    ExactRank1Curvature curv(net.depth(), opts.gamma);
    const BackwardResult fac = backward_pass(net, acts, t, curv, opts);

    DdpOptions dopts;
    dopts.gamma = opts.gamma;
    dopts.beta = opts.beta;
    dopts.terminal = TerminalModel::GaussNewton;
    const DdpResult ddp = dense_ddp_step(net, x0, t, dopts);

    for (Index k = 0; k < net.depth(); ++k) {
      const FeedbackPolicy& pol = fac.policies[size_t(k)];
      const DdpLayer& dl = ddp.layers[size_t(k)];
      const Vec& q = pol.q;
      const Vec r_next = fac.states[size_t(k) + 1].r;
      const Vec p = layer_vjp_theta_sum(net.layers[size_t(k)],
                                        net.params[size_t(k)],
                                        acts.rcache[size_t(k)], r_next);
      const double scale = 1.0 + dl.qxx.cwiseAbs().maxCoeff();
      CHECK((q * q.transpose() - dl.qxx).cwiseAbs().maxCoeff() < 1e-8 * scale);
      CHECK((q * p.transpose() - dl.qxt).cwiseAbs().maxCoeff() < 1e-8 * scale);
      const Vec r = fac.states[size_t(k)].r;
      CHECK((r * r.transpose() - dl.vxx).cwiseAbs().maxCoeff() < 1e-8 * scale);
      CHECK((pol.g - dl.g).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((pol.h * pol.q.transpose() - dl.kfb).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("two scalar coefficients reproduce the vector recursion") {
  for (int seed = 0; seed < 12; ++seed) {
    Rng rng(1200 + seed);
    const bool mse = seed % 3 == 0;
    NetworkSpec net = build_mlp({4, 5, 4, 3}, Activation::Tanh,
                                mse ? LossKind::MeanSquaredError
                                    : LossKind::SoftmaxCrossEntropy,
                                rng);
    const Mat x0 = random_mat(4, 1, rng);
    const Targets t = mse ? targets_from_values(random_mat(3, 1, rng))
                          : random_labels(3, 1, rng);
    const BatchActivations acts = forward(net, x0);

    CurvatureModel curv = identity_curvature(net);
    BackwardOptions opts;
    opts.gamma = 0.0;
    opts.beta = 0.9;
    const BackwardResult vec = backward_pass(net, acts, t, curv, opts);
    const ScalarGnResult sc = scalar_gn_backward(net, acts, t, curv, opts.beta);

    CHECK(sc.radicand_clamps == vec.diag.radicand_clamps);
    for (size_t k = 0; k < vec.states.size(); ++k) {
      CHECK((vec.states[k].r - sc.alpha[k] * sc.ghat[k]).cwiseAbs().maxCoeff() <
            1e-10);
      CHECK((vec.states[k].vx - sc.alpha_bar[k] * sc.ghat[k])
                .cwiseAbs()
                .maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("exact rank-one curvature yields the closed-form radicand") {
  Rng rng(31);
  const double gamma = 0.07;
  NetworkSpec net = build_mlp({3, 6, 4, 2}, Activation::Tanh,
                              LossKind::SoftmaxCrossEntropy, rng);
  const Mat x0 = random_mat(3, 4, rng);
  const Targets t = random_labels(2, 4, rng);
  const BatchActivations acts = forward(net, x0);

  BackwardOptions opts;
  opts.gamma = gamma;
  opts.beta = 1.0;
  ExactRank1Curvature curv(net.depth(), gamma);
  const BackwardResult back = backward_pass(net, acts, t, curv, opts);

  CHECK(back.diag.radicand_clamps == 0);
  for (Index k = 0; k < net.depth(); ++k) {
    const Vec p = layer_vjp_theta_sum(net.layers[size_t(k)],
                                      net.params[size_t(k)],
                                      acts.rcache[size_t(k)],
                                      back.states[size_t(k) + 1].r);
    const double expect = gamma / (gamma + p.squaredNorm());
    CHECK(back.diag.radicand[size_t(k)] ==
          doctest::Approx(expect).epsilon(1e-10));
    CHECK(back.diag.radicand[size_t(k)] >= 0.0);
    CHECK(back.diag.radicand[size_t(k)] <= 1.0);
  }
}

TEST_CASE("policies are affine in the state perturbation") {
  Rng rng(41);
  NetworkSpec net = build_mlp({3, 5, 2}, Activation::Tanh,
                              LossKind::SoftmaxCrossEntropy, rng);
  const Mat x0 = random_mat(3, 2, rng);
  const Targets t = random_labels(2, 2, rng);
  const BatchActivations acts = forward(net, x0);
  CurvatureModel curv = identity_curvature(net);
  const BackwardResult back =
      backward_pass(net, acts, t, curv, BackwardOptions{});

  for (Index k = 0; k < net.depth(); ++k) {
    const FeedbackPolicy& pol = back.policies[size_t(k)];
    const Vec dx = random_mat(net.layers[size_t(k)].in_dim, 1, rng).col(0);
    const Vec got = pol.dtheta(dx);
    const Vec expect = -(pol.g + pol.h * pol.q.dot(dx));
    CHECK((got - expect).cwiseAbs().maxCoeff() == 0.0);
    CHECK((pol.dtheta(Vec::Zero(dx.size())) + pol.g).cwiseAbs().maxCoeff() ==
          0.0);
  }
}

TEST_CASE("forward_update with zeroed gains is one gradient step") {
  Rng rng(43);
  NetworkSpec net = build_mlp({3, 4, 2}, Activation::Tanh,
                              LossKind::SoftmaxCrossEntropy, rng);
  const Mat x0 = random_mat(3, 4, rng);
  const Targets t = random_labels(2, 4, rng);
  const BatchActivations acts = forward(net, x0);
  CurvatureModel curv = identity_curvature(net);
  BackwardOptions opts;
  opts.feedback = false;
  const BackwardResult back = backward_pass(net, acts, t, curv, opts);

  const double eta = 0.3;
  std::vector<Vec> expect;
  for (Index k = 0; k < net.depth(); ++k)
    expect.push_back(net.params[size_t(k)] - eta * back.policies[size_t(k)].g);
  const UpdateResult up = forward_update(net, acts, back.policies, eta);
  for (Index k = 0; k < net.depth(); ++k)
    CHECK((net.params[size_t(k)] - expect[size_t(k)]).cwiseAbs().maxCoeff() ==
          0.0);
  CHECK(up.dtheta_norm_max > 0.0);
}

TEST_CASE("forward_update propagates the perturbation it reports") {
  Rng rng(47);
  NetworkSpec net = build_mlp({3, 5, 4, 2}, Activation::Tanh,
                              LossKind::SoftmaxCrossEntropy, rng);
  const Mat x0 = random_mat(3, 3, rng);
  const Targets t = random_labels(2, 3, rng);
  const BatchActivations acts = forward(net, x0);
  CurvatureModel curv = identity_curvature(net);
  const BackwardResult back =
      backward_pass(net, acts, t, curv, BackwardOptions{});

  NetworkSpec updated = net;
  const UpdateResult up = forward_update(updated, acts, back.policies, 0.1);
  // the reported perturbation is the drift of the representative trajectory
  const Mat xr_new =
      layer_forward(updated.layers[0], updated.params[0], acts.xr[0], nullptr);
  CHECK(up.dx_norm_max >= (xr_new - acts.xr[1]).norm() - 1e-15);
  CHECK(up.dx_norm_max > 0.0);
}

TEST_CASE("one closed-loop step descends on a smooth objective") {
  int descents = 0;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(2000 + seed);
    NetworkSpec net = build_mlp({4, 8, 6, 2}, Activation::Tanh,
                                LossKind::MeanSquaredError, rng);
    const Mat x0 = random_mat(4, 8, rng);
    const Targets t = targets_from_values(random_mat(2, 8, rng));
    const BatchActivations acts = forward(net, x0);
    const double before = loss_value(net.loss, acts.x.back(), t);

    CurvatureModel curv = identity_curvature(net);
    const BackwardResult back =
        backward_pass(net, acts, t, curv, BackwardOptions{});
    forward_update(net, acts, back.policies, 1e-4);

    const double after =
        loss_value(net.loss, forward(net, x0).x.back(), t);
    if (after < before) ++descents;
  }
  CHECK(descents == 20);
}

TEST_CASE("radicand clamps are counted and the factor stays bounded") {
  // identity curvature with a large terminal weight drives the quadratic
  // form past one, so the square-root factor must clamp at zero
  Rng rng(53);
  NetworkSpec net = build_mlp({3, 16, 16, 2}, Activation::Tanh,
                              LossKind::MeanSquaredError, rng);
  const Mat x0 = 3.0 * random_mat(3, 1, rng);
  const Targets t = targets_from_values(10.0 * random_mat(2, 1, rng));
  const BatchActivations acts = forward(net, x0);
  CurvatureModel curv = identity_curvature(net);
  BackwardOptions opts;
  opts.beta = 1.0;
  const BackwardResult back = backward_pass(net, acts, t, curv, opts);
  CHECK(back.diag.radicand_clamps > 0);
  // every state factor below a clamped layer is exactly zeroed
  bool seen_clamp = false;
  for (Index k = net.depth() - 1; k >= 0; --k) {
    if (seen_clamp)
      CHECK(back.states[size_t(k)].r.cwiseAbs().maxCoeff() == 0.0);
    if (back.diag.radicand[size_t(k)] < 0.0) seen_clamp = true;
  }
  CHECK(seen_clamp);
}

TEST_CASE("backward_pass argument validation") {
  Rng rng(59);
  NetworkSpec net = build_mlp({3, 4, 2}, Activation::Tanh,
                              LossKind::SoftmaxCrossEntropy, rng);
  const Mat x0 = random_mat(3, 2, rng);
  const Targets t = random_labels(2, 2, rng);
  const BatchActivations acts = forward(net, x0);
  CurvatureModel curv = identity_curvature(net);

  BackwardOptions opts;
  opts.beta = 0.0;
  CHECK_THROWS_AS(backward_pass(net, acts, t, curv, opts), dim_error);
  opts = BackwardOptions{};
  opts.beta = 1.5;
  CHECK_THROWS_AS(backward_pass(net, acts, t, curv, opts), dim_error);
  opts = BackwardOptions{};
  opts.gamma = -1e-3;
  CHECK_THROWS_AS(backward_pass(net, acts, t, curv, opts), dim_error);

  NetworkSpec deeper = build_mlp({3, 4, 4, 2}, Activation::Tanh,
                                 LossKind::SoftmaxCrossEntropy, rng);
  CHECK_THROWS_AS(
      backward_pass(deeper, acts, t, curv, BackwardOptions{}), dim_error);

  CHECK_THROWS_AS(forward_update(net, acts, {}, 0.1), dim_error);
  const BackwardResult back =
      backward_pass(net, acts, t, curv, BackwardOptions{});
  CHECK_THROWS_AS(forward_update(net, acts, back.policies, 0.0), dim_error);
  CHECK_THROWS_AS(scalar_gn_backward(net, acts, t, curv, 0.0), dim_error);
}
