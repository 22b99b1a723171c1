#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "ocnopt/game.hpp"

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

TEST_CASE("a single player owns the parameters bitwise") {
  Rng rng(3);
  NetworkSpec net = build_mlp({3, 5, 2}, Activation::Tanh,
                              LossKind::SoftmaxCrossEntropy, rng);
  const PlayerSplit split = split_players(net, 1, rng);
  REQUIRE(split.n_players == 1);
  for (Index k = 0; k < net.depth(); ++k)
    CHECK((split.players[size_t(k)][0] - net.params[size_t(k)])
              .cwiseAbs()
              .maxCoeff() == 0.0);
  CHECK(split_residual(net, split) == 0.0);
}

TEST_CASE("player splits reproduce the parameters exactly at any count") {
  Rng rng(5);
  NetworkSpec net = build_mlp({4, 6, 5, 3}, Activation::Tanh,
                              LossKind::SoftmaxCrossEntropy, rng);
  for (int n : {2, 3, 5}) {
    for (double noise_rel : {1e-3, 0.5, 50.0}) {
      Rng r2(100 + n);
      const PlayerSplit split = split_players(net, n, r2, noise_rel);
      CHECK(split_residual(net, split) == 0.0);
    }
  }
}

TEST_CASE("collapse_players writes the in-order player sums") {
  Rng rng(7);
  NetworkSpec net = build_mlp({3, 4, 2}, Activation::Tanh,
                              LossKind::SoftmaxCrossEntropy, rng);
  PlayerSplit split = split_players(net, 3, rng, 0.2);
  // nudge one player; the collapsed network must follow the exact sum
  split.players[0][1] *= 1.5;
  NetworkSpec moved = net;
  collapse_players(moved, split);
  for (Index k = 0; k < net.depth(); ++k) {
    Vec sum = Vec::Zero(net.layers[size_t(k)].n_params);
    for (const Vec& pl : split.players[size_t(k)]) sum += pl;
    CHECK((moved.params[size_t(k)] - sum).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(split_residual(moved, split) == 0.0);

  const Mat x0 = random_mat(3, 4, rng);
  CHECK((forward(moved, x0).x.back() - forward(moved, x0).x.back())
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("one cooperative player is the plain training step") {
  Rng rng(11);
  NetworkSpec net = build_mlp({3, 5, 2}, Activation::Tanh,
                              LossKind::SoftmaxCrossEntropy, rng);
  NetworkSpec manual = net;
  PlayerSplit split = split_players(net, 1, rng);

  const Mat x0 = random_mat(3, 5, rng);
  const Targets t = random_labels(2, 5, rng);
  BackwardOptions opts;
  opts.gamma = 0.04;
  opts.beta = 0.5;
  const double eta = 0.3;

  CurvatureModel curv = identity_curvature(net);
  const CoopStepResult res =
      cooperative_step(net, split, x0, t, curv, opts, eta);

  CurvatureModel curv2 = identity_curvature(manual);
  const BatchActivations acts = forward(manual, x0);
  const BackwardResult back = backward_pass(manual, acts, t, curv2, opts);
  forward_update(manual, acts, back.policies, eta);

  for (Index k = 0; k < net.depth(); ++k)
    CHECK((net.params[size_t(k)] - manual.params[size_t(k)])
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  CHECK(res.batch_loss ==
        doctest::Approx(loss_value(manual.loss, acts.x.back(), t)));
  CHECK(split_residual(net, split) == 0.0);
}

TEST_CASE("the collapsed cooperative update solves at the shared damping") {
  // N players acting through their sum share one subproblem whose running
  // cost splits evenly; the collapsed move with a full learning rate equals
  // the single-agent move at gamma / N
  Rng rng(13);
  for (double gamma : {0.0, 0.1}) {
    NetworkSpec net = build_mlp({3, 5, 4, 2}, Activation::Tanh,
                                LossKind::SoftmaxCrossEntropy, rng);
    NetworkSpec manual = net;
    PlayerSplit split = split_players(net, 2, rng, 0.1);

    const Mat x0 = random_mat(3, 4, rng);
    const Targets t = random_labels(2, 4, rng);
    BackwardOptions opts;
    opts.gamma = gamma;
    const double eta = 1.0;  // equalizing move: players land on the target

    CurvatureModel curv = identity_curvature(net);
    cooperative_step(net, split, x0, t, curv, opts, eta);

    BackwardOptions shared = opts;
    shared.gamma = gamma / 2.0;
    CurvatureModel curv2 = identity_curvature(manual);
    const BatchActivations acts = forward(manual, x0);
    const BackwardResult back = backward_pass(manual, acts, t, curv2, shared);
    forward_update(manual, acts, back.policies, eta);

    for (Index k = 0; k < net.depth(); ++k)
      CHECK((net.params[size_t(k)] - manual.params[size_t(k)])
                .cwiseAbs()
                .maxCoeff() < 1e-12);
  }
}

TEST_CASE("a full-rate cooperative step equalizes the players") {
  Rng rng(17);
  NetworkSpec net = build_mlp({3, 4, 2}, Activation::Tanh,
                              LossKind::SoftmaxCrossEntropy, rng);
  PlayerSplit split = split_players(net, 3, rng, 0.4);
  const Mat x0 = random_mat(3, 4, rng);
  const Targets t = random_labels(2, 4, rng);
  BackwardOptions opts;
  opts.gamma = 0.05;
  CurvatureModel curv = identity_curvature(net);
  cooperative_step(net, split, x0, t, curv, opts, 1.0);

  for (Index k = 0; k < net.depth(); ++k) {
    const std::vector<Vec>& pls = split.players[size_t(k)];
    for (size_t p = 1; p < pls.size(); ++p)
      CHECK((pls[p] - pls[0]).cwiseAbs().maxCoeff() <
            1e-12 * (1.0 + pls[0].cwiseAbs().maxCoeff()));
  }
  CHECK(split_residual(net, split) == 0.0);
}

TEST_CASE("cooperative steps keep the exact sum across iterations") {
  Rng rng(19);
  NetworkSpec net = build_mlp({3, 5, 2}, Activation::Tanh,
                              LossKind::SoftmaxCrossEntropy, rng);
  PlayerSplit split = split_players(net, 4, rng, 0.3);
  const Mat x0 = random_mat(3, 6, rng);
  const Targets t = random_labels(2, 6, rng);
  BackwardOptions opts;
  opts.gamma = 0.02;
  CurvatureModel curv = identity_curvature(net);
  for (int step = 0; step < 10; ++step) {
    cooperative_step(net, split, x0, t, curv, opts, 0.25);
    CHECK(split_residual(net, split) == 0.0);
  }
}

TEST_CASE("alignment arms share one function and one flat layout") {
  Rng rng(23);
  AlignmentFamily fam = build_alignment_family(
      4, 5, 6, 3, Activation::Tanh, LossKind::SoftmaxCrossEntropy, rng);
  REQUIRE(fam.arms.size() == 4);
  REQUIRE(fam.arm_names.size() == 4);
  for (const NetworkSpec& arm : fam.arms) {
    CHECK(arm.total_params() == fam.n_flat);
    CHECK(arm.in_dim() == 4);
    CHECK(arm.out_dim() == 3);
  }
  CHECK((flat_params(fam.arms[0]) - flat_params(fam.arms[1]))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  const Mat x0 = random_mat(4, 7, rng);
  const Mat ref = forward(fam.arms[0], x0).x.back();
  for (size_t a = 1; a < fam.arms.size(); ++a) {
    const Mat out = forward(fam.arms[a], x0).x.back();
    CHECK((out - ref).cwiseAbs().maxCoeff() < 1e-12);
  }

  // moving the shared flat vector moves every arm the same way
  Vec theta = flat_params(fam.arms[0]);
  theta *= 1.1;
  for (NetworkSpec& arm : fam.arms) set_flat_params(arm, theta);
  const Mat moved = forward(fam.arms[0], x0).x.back();
  for (size_t a = 1; a < fam.arms.size(); ++a)
    CHECK((forward(fam.arms[a], x0).x.back() - moved).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("parameterless stage regrouping is transparent to the recursion") {
  // split and merge stages carry no parameters: their radicand is exactly
  // one and their feedback correction contribution is zero, so fusing them
  // into neighbouring stages must not change any policy or update
  Rng rng(29);
  AlignmentFamily fam = build_alignment_family(
      4, 5, 6, 3, Activation::Tanh, LossKind::SoftmaxCrossEntropy, rng);
  const Mat x0 = 2.0 * random_mat(4, 4, rng);
  const Targets t = random_labels(3, 4, rng);

  for (bool feedback : {true, false}) {
    BackwardOptions opts;
    opts.gamma = 0.05;
    opts.beta = 1.0;
    opts.feedback = feedback;

    std::vector<Vec> gains, updated;
    for (const NetworkSpec& arm0 : fam.arms) {
      NetworkSpec arm = arm0;
      CurvatureModel curv = identity_curvature(arm);
      const BatchActivations acts = forward(arm, x0);
      const BackwardResult back = backward_pass(arm, acts, t, curv, opts);
      gains.push_back(policy_gains_flat(arm, back.policies));
      CHECK(gains.back().size() == fam.n_flat);
      forward_update(arm, acts, back.policies, 0.5);
      updated.push_back(flat_params(arm));
    }
    for (size_t a = 1; a < fam.arms.size(); ++a) {
      CHECK((gains[a] - gains[0]).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((updated[a] - updated[0]).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("policy_gains_flat validates the policy list") {
  Rng rng(53);
  NetworkSpec net = build_mlp({3, 4, 2}, Activation::Tanh,
                              LossKind::SoftmaxCrossEntropy, rng);
  CHECK_THROWS_AS(policy_gains_flat(net, {}), dim_error);
}

TEST_CASE("bandit over one arm always selects it") {
  AlignmentBandit bandit = make_bandit(1, 100);
  Rng rng(31);
  for (int i = 0; i < 20; ++i) {
    CHECK(bandit_select(bandit, rng) == 0);
    bandit_reward(bandit, 0, 0.7);
  }
  const Vec p = bandit_probabilities(bandit);
  CHECK(p.size() == 1);
  CHECK(p[0] == doctest::Approx(1.0));
}

TEST_CASE("bandit learning rate follows the planned horizon") {
  const AlignmentBandit bandit = make_bandit(4, 250);
  CHECK(bandit.lr == doctest::Approx(std::sqrt(std::log(4.0) / 250.0)));
  CHECK_THROWS_AS(make_bandit(0, 10), dim_error);
  CHECK_THROWS_AS(make_bandit(2, 0), dim_error);
}

TEST_CASE("bandit probabilities are a floored distribution") {
  AlignmentBandit bandit = make_bandit(4, 500, 0.08);
  Rng rng(37);
  for (int round = 0; round < 200; ++round) {
    const int arm = bandit_select(bandit, rng);
    bandit_reward(bandit, arm, arm == 1 ? 1.0 : 0.0);
    const Vec p = bandit_probabilities(bandit);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK(p.minCoeff() >= 0.08 / 4.0 - 1e-15);
  }
  CHECK(bandit_probabilities(bandit)[1] > 0.9);
}

TEST_CASE("the reward update is importance-weighted by the used probability") {
  AlignmentBandit bandit = make_bandit(4, 1000, 0.05);
  Rng rng(41);
  for (int round = 0; round < 50; ++round) {
    const int arm = bandit_select(bandit, rng);
    const Vec probs = bandit.last_probs;
    const Vec before = bandit.logw;
    const double r = 0.25 * (round % 5);  // includes a clamped 1.0 case
    bandit_reward(bandit, arm, r);
    for (Index i = 0; i < 4; ++i) {
      const double expect =
          before[i] + (i == arm ? bandit.lr * std::min(r, 1.0) / probs[i] : 0.0);
      CHECK(bandit.logw[i] == expect);
    }
    // the expected drift p_i * (lr r / p_i) is arm-independent, which is
    // what keeps uniform rewards uninformative on average
    for (Index i = 0; i < 4; ++i)
      CHECK(probs[i] * (bandit.lr * r / probs[i]) ==
            doctest::Approx(bandit.lr * r).epsilon(1e-12));
  }
}

TEST_CASE("zero rewards leave the selection distribution exactly uniform") {
  AlignmentBandit bandit = make_bandit(4, 300, 0.1);
  Rng rng(59);
  for (int round = 0; round < 100; ++round) {
    const int arm = bandit_select(bandit, rng);
    bandit_reward(bandit, arm, 0.0);
    const Vec p = bandit_probabilities(bandit);
    for (Index i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(0.25));
  }
  CHECK(bandit.logw.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rewards outside the unit interval are clamped and counted") {
  AlignmentBandit bandit = make_bandit(3, 100);
  Rng rng(43);
  const int arm = bandit_select(bandit, rng);
  bandit_reward(bandit, arm, 1.5);
  CHECK(bandit.clamped_rewards == 1);
  bandit_reward(bandit, arm, -0.25);
  CHECK(bandit.clamped_rewards == 2);
  bandit_reward(bandit, arm, 0.75);
  CHECK(bandit.clamped_rewards == 2);
  CHECK(bandit.reward_history.size() == 3);
  // a negative reward clamps to zero and leaves the weights untouched
  CHECK(bandit.reward_history[1] == 0.0);
}

TEST_CASE("cooperative and split argument validation") {
  Rng rng(47);
  NetworkSpec net = build_mlp({3, 4, 2}, Activation::Tanh,
                              LossKind::SoftmaxCrossEntropy, rng);
  CHECK_THROWS_AS(split_players(net, 0, rng), dim_error);
  CHECK_THROWS_AS(split_players(net, 2, rng, -1.0), dim_error);

  PlayerSplit split = split_players(net, 2, rng);
  const Mat x0 = random_mat(3, 3, rng);
  const Targets t = random_labels(2, 3, rng);
  CurvatureModel curv = identity_curvature(net);
  CHECK_THROWS_AS(
      cooperative_step(net, split, x0, t, curv, BackwardOptions{}, 0.0),
      dim_error);
}
