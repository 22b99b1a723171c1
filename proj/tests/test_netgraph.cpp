#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ocnopt/network.hpp"

using namespace ocnopt;

namespace {

Mat random_mat(Index r, Index c, Rng& rng) {
  Mat m(r, c);
  for (Index j = 0; j < m.size(); ++j) m.data()[j] = rng.normal();
  return m;
}

Vec random_vec(Index n, Rng& rng) {
  Vec v(n);
  for (Index j = 0; j < n; ++j) v[j] = rng.normal();
  return v;
}

// Central finite difference of sum_i <v_i, f(x_i)> in the x direction.
Mat fd_vjp_x(const LayerNode& layer, const Vec& theta, const Mat& x,
             const Mat& v, double step) {
  Mat g(x.rows(), x.cols());
  for (Index c = 0; c < x.cols(); ++c) {
    for (Index r = 0; r < x.rows(); ++r) {
      Mat xp = x, xm = x;
      xp(r, c) += step;
      xm(r, c) -= step;
      const double fp =
          (v.col(c).transpose() * layer_forward(layer, theta, xp, nullptr).col(c))
              .value();
      const double fm =
          (v.col(c).transpose() * layer_forward(layer, theta, xm, nullptr).col(c))
              .value();
      g(r, c) = (fp - fm) / (2.0 * step);
    }
  }
  return g;
}

Vec fd_vjp_theta(const LayerNode& layer, const Vec& theta, const Mat& x,
                 const Mat& v, double step) {
  Vec g(theta.size());
  for (Index i = 0; i < theta.size(); ++i) {
    Vec tp = theta, tm = theta;
    tp[i] += step;
    tm[i] -= step;
    const double fp =
        (v.array() * layer_forward(layer, tp, x, nullptr).array()).sum();
    const double fm =
        (v.array() * layer_forward(layer, tm, x, nullptr).array()).sum();
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

LayerCache make_cache(const LayerNode& layer, const Vec& theta, const Mat& x) {
  LayerCache cache;
  layer_forward(layer, theta, x, &cache);
  return cache;
}

// Layer kinds exercised by the derivative checks; smooth activations keep
// finite differences meaningful.
std::vector<LayerNode> smooth_layer_zoo() {
  std::vector<LayerNode> zoo;
  zoo.push_back(make_dense(3, 4, Activation::Tanh));
  zoo.push_back(make_dense(4, 2, Activation::Sigmoid));
  zoo.push_back(make_dense(2, 3, Activation::Identity));
  zoo.push_back(make_activation(3, Activation::Tanh));
  // residual stage: transform alongside a carried slice
  zoo.push_back(build_residual(DenseUnit{2, 2, Activation::Tanh},
                               std::nullopt, 2, 2));
  // residual stage with a transformed skip
  zoo.push_back(build_residual(DenseUnit{2, 3, Activation::Tanh},
                               DenseUnit{2, 3, Activation::Identity}, 2, 2));
  // multi-path merge: two branches summed under an outer activation
  {
    Branch b0, b1;
    b0.unit = DenseUnit{2, 3, Activation::Identity};
    b0.in_offset = 0;
    b0.in_len = 2;
    b1.unit = DenseUnit{2, 3, Activation::Identity};
    b1.in_offset = 2;
    b1.in_len = 2;
    zoo.push_back(make_sum_act(4, {b0, b1}, Activation::Tanh));
  }
  return zoo;
}

}  // namespace

TEST_CASE("forward: identity-weight dense layer is the identity map") {
  LayerNode layer = make_dense(2, 2, Activation::Identity);
  Vec theta(6);
  theta << 1, 0, 0, 1, 0, 0;  // row-major W = I, b = 0
  Mat x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  const Mat y = layer_forward(layer, theta, x, nullptr);
  CHECK((y - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward: tanh of zero pre-activation is zero") {
  LayerNode layer = make_dense(2, 1, Activation::Tanh);
  Vec theta(3);
  theta << 1, 1, 0;  // W = [1 1], b = 0
  Mat x = Mat::Zero(2, 1);
  const Mat y = layer_forward(layer, theta, x, nullptr);
  CHECK(y(0, 0) == 0.0);
}

TEST_CASE("forward: 3-layer MLP matches an independent scalar evaluation") {
  Rng rng(9);
  NetworkSpec net = build_mlp({3, 4, 3, 2}, Activation::Tanh,
                              LossKind::SoftmaxCrossEntropy, rng);
  const Mat x0 = random_mat(3, 5, rng);
  const BatchActivations acts = forward(net, x0);

  // scalar-loop re-evaluation of the same parameters
  Mat cur = x0;
  for (Index k = 0; k < net.depth(); ++k) {
    const LayerNode& layer = net.layers[size_t(k)];
    const DenseUnit& u = *layer.branches[0].unit;
    const Vec& th = net.params[size_t(k)];
    Mat next(u.out, cur.cols());
    for (Index c = 0; c < cur.cols(); ++c) {
      for (Index o = 0; o < u.out; ++o) {
        double h = th[u.in * u.out + o];  // bias after row-major W
        for (Index i = 0; i < u.in; ++i) h += th[o * u.in + i] * cur(i, c);
        next(o, c) = u.act == Activation::Tanh ? std::tanh(h) : h;
      }
    }
    cur = next;
    CHECK((acts.x[size_t(k) + 1] - cur).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("vjp_x: identity activation layer passes cotangents through") {
  LayerNode layer = make_activation(3, Activation::Identity);
  Vec theta(0);
  Mat x(3, 2);
  x << 1, 2, 3, 4, 5, 6;
  const LayerCache cache = make_cache(layer, theta, x);
  Rng rng(2);
  const Mat v = random_mat(3, 2, rng);
  CHECK((layer_vjp_x(layer, theta, cache, v) - v).cwiseAbs().maxCoeff() ==
        0.0);
}

TEST_CASE("vjp_x: linear dense layer applies W transpose") {
  LayerNode layer = make_dense(2, 2, Activation::Identity);
  Vec theta(6);
  theta << 2, 0, 0, 3, 0, 0;  // W = diag(2,3)
  Mat x = Mat::Zero(2, 1);
  const LayerCache cache = make_cache(layer, theta, x);
  Mat v(2, 1);
  v << 1, 1;
  const Mat g = layer_vjp_x(layer, theta, cache, v);
  CHECK(g(0, 0) == doctest::Approx(2.0));
  CHECK(g(1, 0) == doctest::Approx(3.0));
}

TEST_CASE("vjp/jvp match central finite differences across layer kinds") {
  Rng rng(77);
  const double step = 1e-5;
  for (const LayerNode& layer : smooth_layer_zoo()) {
    for (int trial = 0; trial < 15; ++trial) {
      const Vec theta = random_vec(layer.n_params, rng);
      const Mat x = random_mat(layer.in_dim, 2, rng);
      const Mat v = random_mat(layer.out_dim, 2, rng);
      const LayerCache cache = make_cache(layer, theta, x);

      const Mat gx = layer_vjp_x(layer, theta, cache, v);
      const Mat gx_fd = fd_vjp_x(layer, theta, x, v, step);
      CHECK((gx - gx_fd).cwiseAbs().maxCoeff() <
            1e-6 * (1.0 + gx_fd.cwiseAbs().maxCoeff()));

      if (layer.n_params > 0) {
        const Vec gt = layer_vjp_theta_sum(layer, theta, cache, v);
        const Vec gt_fd = fd_vjp_theta(layer, theta, x, v, step);
        CHECK((gt - gt_fd).cwiseAbs().maxCoeff() <
              1e-6 * (1.0 + gt_fd.cwiseAbs().maxCoeff()));
      }
    }
  }
}

TEST_CASE("adjoint identity couples vjps and jvps") {
  Rng rng(31);
  for (const LayerNode& layer : smooth_layer_zoo()) {
    for (int trial = 0; trial < 15; ++trial) {
      const Vec theta = random_vec(layer.n_params, rng);
      const Mat x = random_mat(layer.in_dim, 1, rng);
      const LayerCache cache = make_cache(layer, theta, x);
      const Mat v = random_mat(layer.out_dim, 1, rng);
      const Mat wx = random_mat(layer.in_dim, 1, rng);

      const double lhs_x =
          (v.transpose() * layer_jvp_x(layer, theta, cache, wx)).value();
      const double rhs_x =
          (layer_vjp_x(layer, theta, cache, v).transpose() * wx).value();
      CHECK(std::abs(lhs_x - rhs_x) < 1e-10 * (1.0 + std::abs(rhs_x)));

      if (layer.n_params > 0) {
        const Vec wt = random_vec(layer.n_params, rng);
        const double lhs_t =
            (v.transpose() * layer_jvp_theta(layer, theta, cache, wt)).value();
        const double rhs_t =
            layer_vjp_theta_sum(layer, theta, cache, v).dot(wt);
        CHECK(std::abs(lhs_t - rhs_t) < 1e-10 * (1.0 + std::abs(rhs_t)));
      }
    }
  }
}

TEST_CASE("relu derivative matches the sign of the pre-activation") {
  LayerNode layer = make_dense(1, 1, Activation::Relu);
  Vec theta(2);
  theta << 1, 0;  // pre-activation equals the input
  for (double x0 : {1.5, -1.5}) {
    Mat x(1, 1);
    x << x0;
    const LayerCache cache = make_cache(layer, theta, x);
    Mat v(1, 1);
    v << 1.0;
    const double g = layer_vjp_x(layer, theta, cache, v)(0, 0);
    CHECK(g == (x0 > 0 ? 1.0 : 0.0));
  }
}

TEST_CASE("residual stage equals its direct block evaluation") {
  Rng rng(13);
  const Index d = 3;
  // augmented input [z; z_carry]
  LayerNode res_stage = build_residual(DenseUnit{d, d, Activation::Tanh},
                                       std::nullopt, d, d);
  LayerNode merge;
  {
    Branch b0, b1;
    b0.in_offset = 0;
    b0.in_len = d;
    b1.in_offset = d;
    b1.in_len = d;
    merge = make_sum_act(2 * d, {b0, b1}, Activation::Relu);
  }
  LayerNode main_only = make_dense(d, d, Activation::Tanh);

  for (int trial = 0; trial < 10; ++trial) {
    const Vec theta = random_vec(res_stage.n_params, rng);
    const Mat z = random_mat(d, 4, rng);
    Mat aug(2 * d, 4);
    aug.topRows(d) = z;
    aug.bottomRows(d) = z;

    const Mat staged = layer_forward(
        merge, Vec(0), layer_forward(res_stage, theta, aug, nullptr), nullptr);
    const Mat direct = act_eval(
        Activation::Relu, layer_forward(main_only, theta, z, nullptr) + z);
    CHECK((staged - direct).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("loss values and gradients match finite differences") {
  Rng rng(19);
  const double step = 1e-5;
  for (LossKind kind :
       {LossKind::SoftmaxCrossEntropy, LossKind::MeanSquaredError}) {
    const Index d = 3, b = 4;
    Mat z = random_mat(d, b, rng);
    Targets t;
    if (kind == LossKind::SoftmaxCrossEntropy) {
      Eigen::VectorXi labels(b);
      for (Index i = 0; i < b; ++i) labels[i] = int(rng.uniform_int(int(d)));
      t = targets_from_labels(labels);
    } else {
      t = targets_from_values(random_mat(d, b, rng));
    }
    const Mat g = loss_grad(kind, z, t);
    for (Index c = 0; c < b; ++c) {
      for (Index r = 0; r < d; ++r) {
        Mat zp = z, zm = z;
        zp(r, c) += step;
        zm(r, c) -= step;
        const double fd =
            (loss_value(kind, zp, t) - loss_value(kind, zm, t)) / (2.0 * step);
        CHECK(std::abs(g(r, c) - fd) < 1e-6 * (1.0 + std::abs(fd)));
      }
    }
  }
}

TEST_CASE("loss Hessian of one sample matches finite differences of the gradient") {
  Rng rng(29);
  const Index d = 3, b = 2;
  Mat z = random_mat(d, b, rng);
  Eigen::VectorXi labels(b);
  labels << 0, 2;
  const Targets t = targets_from_labels(labels);
  const double step = 1e-5;
  for (Index i = 0; i < b; ++i) {
    const Mat h = loss_hess_sample(LossKind::SoftmaxCrossEntropy, z, t, i);
    CHECK((h - h.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    for (Index r = 0; r < d; ++r) {
      Mat zp = z, zm = z;
      zp(r, i) += step;
      zm(r, i) -= step;
      const Vec fd = (loss_grad(LossKind::SoftmaxCrossEntropy, zp, t).col(i) -
                      loss_grad(LossKind::SoftmaxCrossEntropy, zm, t).col(i)) /
                     (2.0 * step);
      CHECK((h.col(r) - fd).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("cross-entropy stays finite under extreme logits") {
  Mat z(3, 1);
  z << 1e4, -1e4, 0.0;
  Eigen::VectorXi labels(1);
  labels << 1;
  const Targets t = targets_from_labels(labels);
  const double L = loss_value(LossKind::SoftmaxCrossEntropy, z, t);
  CHECK(std::isfinite(L));
  CHECK(loss_grad(LossKind::SoftmaxCrossEntropy, z, t).allFinite());
}

TEST_CASE("validate_network rejects broken dimension chains") {
  NetworkSpec net;
  net.layers.push_back(make_dense(2, 3, Activation::Tanh));
  net.layers.push_back(make_dense(4, 2, Activation::Identity));  // gap: 3 vs 4
  net.params.push_back(Vec::Zero(net.layers[0].n_params));
  net.params.push_back(Vec::Zero(net.layers[1].n_params));
  CHECK_THROWS_AS(validate_network(net), dim_error);
}

TEST_CASE("validate_layer rejects out-of-range branch slices") {
  Branch b;
  b.in_offset = 3;
  b.in_len = 2;  // reads past in_dim = 4
  CHECK_THROWS_AS(make_concat(4, {b}), dim_error);
}

TEST_CASE("build_mlp layout and flat parameter round trip") {
  Rng rng(3);
  NetworkSpec net = build_mlp({4, 8, 8, 3}, Activation::Tanh,
                              LossKind::SoftmaxCrossEntropy, rng);
  CHECK(net.depth() == 3);
  CHECK(net.in_dim() == 4);
  CHECK(net.out_dim() == 3);
  CHECK(net.total_params() == (4 * 8 + 8) + (8 * 8 + 8) + (8 * 3 + 3));

  const Vec flat = flat_params(net);
  CHECK(flat.size() == net.total_params());
  NetworkSpec other = build_mlp({4, 8, 8, 3}, Activation::Tanh,
                                LossKind::SoftmaxCrossEntropy, rng);
  set_flat_params(other, flat);
  CHECK((flat_params(other) - flat).cwiseAbs().maxCoeff() == 0.0);

  const Mat x0 = random_mat(4, 6, rng);
  CHECK(forward(net, x0).x.back().allFinite());
  CHECK_THROWS_AS(forward(net, random_mat(5, 2, rng)), dim_error);
}

TEST_CASE("representative trajectory follows the batch-mean input") {
  Rng rng(41);
  NetworkSpec net = build_mlp({3, 5, 2}, Activation::Tanh,
                              LossKind::SoftmaxCrossEntropy, rng);
  const Mat x0 = random_mat(3, 7, rng);
  const BatchActivations acts = forward(net, x0);
  REQUIRE(acts.xr.size() == size_t(net.depth()) + 1);
  CHECK((acts.xr[0] - x0.rowwise().mean()).cwiseAbs().maxCoeff() < 1e-15);
  // the representative trajectory satisfies the layer dynamics exactly
  for (Index k = 0; k < net.depth(); ++k) {
    const Mat prop = layer_forward(net.layers[size_t(k)], net.params[size_t(k)],
                                   acts.xr[size_t(k)], nullptr);
    CHECK((prop - acts.xr[size_t(k) + 1]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("accuracy counts argmax-correct columns") {
  Mat z(3, 4);
  z << 5, 0, 0, 1,  //
      0, 5, 0, 2,   //
      0, 0, 5, 3;
  Eigen::VectorXi labels(4);
  labels << 0, 1, 2, 0;  // last sample's argmax is row 2
  CHECK(accuracy(z, labels) == doctest::Approx(0.75));
}
