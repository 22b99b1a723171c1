#include "ocnopt/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ocnopt/data.hpp"
#include "ocnopt/linalg.hpp"

namespace ocnopt {

namespace {

using Clock = std::chrono::steady_clock;
using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

Mat random_mat(Rng& rng, Index r, Index c, double scale = 1.0) {
  Mat m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

Vec random_vec(Rng& rng, Index n, double scale = 1.0) {
  Vec v(n);
  for (Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

Targets random_labels(Rng& rng, int classes, Index b) {
  Eigen::VectorXi y(b);
  for (Index i = 0; i < b; ++i) y[i] = rng.uniform_int(classes);
  return targets_from_labels(y);
}

// --- claim 1: sgd equals the identity-curvature recursion without feedback

double sgd_equivalence_gap(int steps) {
  Dataset ds = make_synthetic("two-moons", 128, 0.1, 7);
  const std::vector<Index> dims{2, 8, 8, 2};
  Rng ra(11), rb(11);
  NetworkSpec a = build_mlp(dims, Activation::Tanh,
                            LossKind::SoftmaxCrossEntropy, ra);
  NetworkSpec b = build_mlp(dims, Activation::Tanh,
                            LossKind::SoftmaxCrossEntropy, rb);

  OptimizerConfig ca;
  ca.mode = OptimizerMode::Sgd;
  ca.eta = 0.05;
  OptimizerConfig cb = ca;
  cb.mode = OptimizerMode::OcnIdentity;
  cb.feedback = false;
  Optimizer oa(a, ca), ob(b, cb);

  double gap = 0.0;
  size_t pos = 0;
  const size_t bs = 16;
  for (int s = 0; s < steps; ++s) {
    if (pos + bs > ds.train_idx.size()) pos = 0;
    const Mat x = gather_features(ds, ds.train_idx, pos, bs);
    const Targets t = gather_targets(ds, ds.train_idx, pos, bs);
    pos += bs;
    oa.step(a, x, t);
    ob.step(b, x, t);
    for (size_t k = 0; k < a.params.size(); ++k)
      gap = std::max(gap,
                     (a.params[k] - b.params[k]).cwiseAbs().maxCoeff());
  }
  return gap;
}

// --- claim 2: open-loop dense recursion equals layer-wise damped Newton

double newton_match_gap(int seeds) {
  double gap = 0.0;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(100 + s);
    NetworkSpec net = build_mlp({2, 3, 2}, Activation::Tanh,
                                LossKind::SoftmaxCrossEntropy, rng);
    const Mat x0 = random_mat(rng, 2, 4);
    const Targets t = random_labels(rng, 2, 4);

    DdpOptions opts;
    opts.gamma = 0.1;
    opts.terminal = TerminalModel::ExactHessian;
    opts.include_f_second = true;
    opts.force_zero_qxt = true;
    const DdpResult ddp = dense_ddp_step(net, x0, t, opts);
    const std::vector<Vec> newton = newton_reference(net, x0, t, opts.gamma);
    for (size_t k = 0; k < newton.size(); ++k)
      gap = std::max(
          gap, (-ddp.layers[k].g - newton[k]).cwiseAbs().maxCoeff());
  }
  return gap;
}

// --- claims 3 and 9: factored recursion vs dense recursion (policy gains
// and feedback), with an optional sign mutation inside the contraction

double rank1_dense_gap(int seeds, double radicand_sign) {
  double gap = 0.0;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(200 + s);
    const bool mse = s % 3 == 2;
    const std::vector<Index> dims{3, 6, 6, 2};
    NetworkSpec net = build_mlp(dims, Activation::Tanh,
                                mse ? LossKind::MeanSquaredError
                                    : LossKind::SoftmaxCrossEntropy,
                                rng);
    const Mat x0 = random_mat(rng, dims.front(), 1);
    const Targets t = mse ? targets_from_values(random_mat(rng, 2, 1))
                          : random_labels(rng, 2, 1);

    BackwardOptions opts;
    opts.gamma = 0.08;
    opts.beta = 0.9;
    opts.feedback = true;
    opts.radicand_sign = radicand_sign;
    const BatchActivations acts = forward(net, x0);
    ExactRank1Curvature curv(net.depth(), opts.gamma);
    const BackwardResult fac = backward_pass(net, acts, t, curv, opts);

    DdpOptions dopts;
    dopts.gamma = opts.gamma;
    dopts.beta = opts.beta;
    dopts.terminal = TerminalModel::GaussNewton;
    const DdpResult ddp = dense_ddp_step(net, x0, t, dopts);

    for (Index k = 0; k < net.depth(); ++k) {
      const FeedbackPolicy& pol = fac.policies[static_cast<size_t>(k)];
      const DdpLayer& dl = ddp.layers[static_cast<size_t>(k)];
      gap = std::max(gap, (pol.g - dl.g).cwiseAbs().maxCoeff());
      const Mat kfb = pol.h * pol.q.transpose();
      gap = std::max(gap, (kfb - dl.kfb).cwiseAbs().maxCoeff());
    }
  }
  return gap;
}

// --- claim 4: two scalar coefficients reproduce the vector recursion

double scalar_recursion_gap(int seeds) {
  double gap = 0.0;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(300 + s);
    const std::vector<Index> dims{3, 5, 4, 2};
    NetworkSpec net = build_mlp(dims, Activation::Tanh,
                                LossKind::SoftmaxCrossEntropy, rng);
    const Mat x0 = random_mat(rng, dims.front(), 1);
    const Targets t = random_labels(rng, 2, 1);
    const BatchActivations acts = forward(net, x0);

    CurvatureOptions copts;
    copts.kind = CurvatureKind::Identity;
    CurvatureModel curv(net, copts);

    BackwardOptions opts;
    opts.gamma = 0.0;
    opts.beta = 0.9;
    const BackwardResult vec = backward_pass(net, acts, t, curv, opts);
    const ScalarGnResult sc =
        scalar_gn_backward(net, acts, t, curv, opts.beta);

    for (size_t k = 0; k < vec.states.size(); ++k) {
      gap = std::max(gap, (vec.states[k].r - sc.alpha[k] * sc.ghat[k])
                              .cwiseAbs()
                              .maxCoeff());
      gap = std::max(gap, (vec.states[k].vx - sc.alpha_bar[k] * sc.ghat[k])
                              .cwiseAbs()
                              .maxCoeff());
    }
  }
  return gap;
}

// --- claim 5: rank-N factor propagation carries the dense value Hessian

double rank_n_gap(int seeds) {
  double gap = 0.0;
  for (int s = 0; s < seeds; ++s) {
    for (int n_factors = 1; n_factors <= 3; ++n_factors) {
      Rng rng(400 + 16 * s + n_factors);
      const std::vector<Index> dims{3, 4, 4, 2};
      NetworkSpec net = build_mlp(dims, Activation::Tanh,
                                  LossKind::SoftmaxCrossEntropy, rng);
      const Index b = 2;
      const Mat x0 = random_mat(rng, dims.front(), b);
      const double gamma = 0.1;

      const Index dk = dims.back() * b;
      std::vector<Vec> terminal(static_cast<size_t>(n_factors));
      for (auto& f : terminal) f = random_vec(rng, dk, 0.7);

      const RankNResult fac = rank_n_backward(net, x0, terminal, gamma);

      const BatchActivations acts = forward(net, x0);
      Mat vxx = Mat::Zero(dk, dk);
      for (const Vec& f : terminal) vxx += f * f.transpose();
      std::vector<Mat> dense(net.layers.size() + 1);
      dense.back() = vxx;
      for (Index k = net.depth() - 1; k >= 0; --k) {
        const StackedJacobians j = stacked_jacobians(
            net.layers[static_cast<size_t>(k)],
            net.params[static_cast<size_t>(k)],
            acts.cache[static_cast<size_t>(k)]);
        const Mat quu = gamma * Mat::Identity(j.fth.cols(), j.fth.cols()) +
                        j.fth.transpose() * vxx * j.fth;
        const Mat qxt = j.fx.transpose() * vxx * j.fth;
        vxx = j.fx.transpose() * vxx * j.fx -
              qxt * pinv_sym(quu) * qxt.transpose();
        dense[static_cast<size_t>(k)] = vxx;
      }

      for (size_t k = 0; k < fac.factors.size(); ++k) {
        Mat rec = Mat::Zero(dense[k].rows(), dense[k].cols());
        for (const Vec& f : fac.factors[k]) rec += f * f.transpose();
        gap = std::max(gap, (rec - dense[k]).cwiseAbs().maxCoeff());
      }
    }
  }
  return gap;
}

// --- claim 6: factored damped pseudo-inverse equals the assembled one

double kron_apply_gap(int seeds) {
  double gap = 0.0;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(500 + s);
    const Index m = 2 + rng.uniform_int(4);  // outputs, <= 5
    const Index n = 2 + rng.uniform_int(4);  // inputs, <= 5

    struct Case {
      double gamma;
      KfacGammaMode mode;
      bool deficient;
    };
    const Case cases[] = {
        {0.0, KfacGammaMode::AddInverse, false},
        {0.0, KfacGammaMode::AddInverse, true},
        {0.1, KfacGammaMode::AddInverse, false},
        {0.1, KfacGammaMode::AddInverse, true},
        {0.1, KfacGammaMode::FoldedDamping, false},
    };
    for (const Case& c : cases) {
      const Index ra = c.deficient ? (n + 1) / 2 + 1 : n + 1;
      const Index rb = c.deficient ? m / 2 + 1 : m;
      const Mat fa = random_mat(rng, n + 1, ra);
      const Mat fb = random_mat(rng, m, rb);
      const Mat a = fa * fa.transpose();
      const Mat b = fb * fb.transpose();
      Vec v = random_vec(rng, m * (n + 1));

      // The rank cut needs headroom over the eigensolver's resolution so
      // both sides agree on which directions count as null.
      const double cut = 1e-8;
      Vec factored = v;
      kron_precondition_block(sym_eig(a), sym_eig(b), c.gamma, c.mode, cut,
                              m, n, factored.data());

      // assemble the same operator on [vec_rm(W); bias] coordinates
      Mat cmat(n + 1, m);
      cmat.topRows(n) =
          Eigen::Map<const RowMat>(v.data(), m, n).transpose();
      cmat.row(n) = Eigen::Map<const Vec>(v.data() + m * n, m).transpose();
      const Vec w = Eigen::Map<const Vec>(cmat.data(), (n + 1) * m);
      const Mat kk = kron_dense(b, a);
      Vec y;
      if (c.gamma > 0.0 && c.mode == KfacGammaMode::FoldedDamping) {
        y = (kk + c.gamma * Mat::Identity(kk.rows(), kk.cols()))
                .ldlt()
                .solve(w);
      } else {
        // pinv of a Kronecker product is the Kronecker product of pinvs;
        // this keeps the rank decision per factor, as the apply makes it
        y = kron_dense(pinv_sym(b, cut), pinv_sym(a, cut)) * w;
        if (c.gamma > 0.0) y += w / c.gamma;
      }
      Mat cy = Eigen::Map<const Mat>(y.data(), n + 1, m);
      Vec dense(m * (n + 1));
      Eigen::Map<RowMat>(dense.data(), m, n) = cy.topRows(n).transpose();
      Eigen::Map<Vec>(dense.data() + m * n, m) = cy.row(n).transpose();

      gap = std::max(gap, (factored - dense).cwiseAbs().maxCoeff());
    }
  }
  return gap;
}

// --- claim 7: adjoint outer products solve the dense curvature ODEs

double ode_factored_gap(int grid_steps) {
  double gap = 0.0;
  for (double gamma : {0.0, 0.1}) {
    Rng rng(600);
    OdeModel model =
        build_ode_model(3, {4}, Activation::Tanh,
                        LossKind::SoftmaxCrossEntropy, 1.0, grid_steps, rng);
    const Vec x0 = random_vec(rng, 3, 0.8);
    Vec tq = random_vec(rng, 3);
    tq /= tq.norm();

    const OdeTrajectory traj =
        ode_forward(model.field, x0, model.horizon, model.steps);
    const OdeAdjoint adj = ode_adjoint_sweep(model.field, traj, tq);
    const OdeDenseSecond oracle =
        ode_dense_second_oracle(model.field, traj, tq, gamma);

    const Index p = model.field.total_params();
    const Index n_nodes = static_cast<Index>(traj.nodes.size());
    for (Index j = 0; j < n_nodes; j += 10) {
      const Vec qj = adj.q[static_cast<size_t>(j)].col(0);
      const Vec pj = adj.p[static_cast<size_t>(j)];
      const double remaining = traj.horizon - double(j) * traj.h;
      gap = std::max(gap, (oracle.qxx[static_cast<size_t>(j)] -
                           qj * qj.transpose())
                              .cwiseAbs()
                              .maxCoeff());
      gap = std::max(gap, (oracle.qxt[static_cast<size_t>(j)] -
                           qj * pj.transpose())
                              .cwiseAbs()
                              .maxCoeff());
      const Mat qtt_fac =
          pj * pj.transpose() + gamma * remaining * Mat::Identity(p, p);
      gap = std::max(
          gap,
          (oracle.qtt[static_cast<size_t>(j)] - qtt_fac).cwiseAbs().maxCoeff());
    }
  }
  return gap;
}

// --- claim 8: continuous adjoint equals the unrolled discrete gradient

double ode_unrolled_gap(int grid_steps) {
  double gap = 0.0;
  for (int s = 0; s < 2; ++s) {
    Rng rng(700 + s);
    OdeModel model =
        build_ode_model(3, {4}, Activation::Tanh,
                        LossKind::SoftmaxCrossEntropy, 1.0, grid_steps, rng);
    const Vec x0 = random_vec(rng, 3, 0.8);
    Eigen::VectorXi y(1);
    y[0] = s % 3;
    const Targets t = targets_from_labels(y);

    const OdeTrajectory traj =
        ode_forward(model.field, x0, model.horizon, model.steps);
    const Mat lgrad = loss_grad(model.loss, traj.nodes.back(), t);
    const OdeAdjoint adj = ode_adjoint_sweep(model.field, traj, lgrad);

    const UnrolledGrad ref = unrolled_rk4_gradient(
        model.field, x0, model.loss, t, model.horizon, model.steps);

    gap = std::max(gap,
                   (adj.p.front() - ref.grad_theta).cwiseAbs().maxCoeff());
    gap = std::max(
        gap, (adj.q.front().col(0) - ref.grad_x0).cwiseAbs().maxCoeff());
  }
  return gap;
}

}  // namespace

VerifyReport run_verification(VerifyLevel level) {
  const bool full = level == VerifyLevel::Full;
  VerifyReport report;
  const auto t0 = Clock::now();

  const auto claim = [&report](const std::string& name, double tol,
                               bool exceeds, auto&& fn) {
    ClaimResult c;
    c.name = name;
    c.tol = tol;
    c.exceeds = exceeds;
    const auto tc = Clock::now();
    c.max_err = fn();
    c.ms = ms_since(tc);
    c.pass = exceeds ? c.max_err > tol : c.max_err <= tol;
    report.claims.push_back(std::move(c));
  };

  claim("sgd-open-loop-equivalence", 1e-12, false,
        [&] { return sgd_equivalence_gap(full ? 100 : 25); });
  claim("stagewise-newton-match", 1e-5, false,
        [&] { return newton_match_gap(full ? 10 : 3); });
  claim("rank1-vs-dense-recursion", 1e-8, false,
        [&] { return rank1_dense_gap(full ? 50 : 12, 1.0); });
  claim("scalar-coefficient-recursion", 1e-10, false,
        [&] { return scalar_recursion_gap(full ? 50 : 12); });
  claim("rank-n-value-recursion", 1e-8, false,
        [&] { return rank_n_gap(full ? 12 : 4); });
  claim("kron-damped-apply", 1e-9, false,
        [&] { return kron_apply_gap(full ? 12 : 4); });
  claim("ode-factored-curvature", 1e-6, false,
        [&] { return ode_factored_gap(200); });
  claim("ode-adjoint-vs-unrolled", 1e-6, false,
        [&] { return ode_unrolled_gap(200); });
  claim("radicand-sign-mutation-detected", 1e-6, true,
        [&] { return rank1_dense_gap(full ? 12 : 5, -1.0); });

  report.total_ms = ms_since(t0);
  report.all_pass = std::all_of(report.claims.begin(), report.claims.end(),
                                [](const ClaimResult& c) { return c.pass; });
  return report;
}

std::string verify_report_text(const VerifyReport& report) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-34s %12s    %-12s %9s  %s\n", "claim",
                "max error", "tolerance", "time", "result");
  os << line;
  int passed = 0;
  for (const ClaimResult& c : report.claims) {
    std::snprintf(line, sizeof(line), "%-34s %12.3e  %s %-10.1e %7.0f ms  %s\n",
                  c.name.c_str(), c.max_err, c.exceeds ? ">" : "<=", c.tol,
                  c.ms, c.pass ? "PASS" : "FAIL");
    os << line;
    passed += c.pass ? 1 : 0;
  }
  std::snprintf(line, sizeof(line), "%d/%d claims pass, total %.0f ms\n",
                passed, static_cast<int>(report.claims.size()),
                report.total_ms);
  os << line;
  return os.str();
}

}  // namespace ocnopt
