#include "ocnopt/game.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace ocnopt {

namespace {

// In-order player sum; every sum-constraint statement refers to this exact
// accumulation order.
Vec sum_players(const std::vector<Vec>& pl) {
  Vec acc = pl[0];
  for (size_t n = 1; n < pl.size(); ++n) acc += pl[n];
  return acc;
}

void check_split(const NetworkSpec& net, const PlayerSplit& split) {
  if (split.n_players < 1)
    throw dim_error("players: need at least one player");
  if (split.players.size() != net.layers.size())
    throw dim_error("players: layer count mismatch");
  for (size_t k = 0; k < net.layers.size(); ++k) {
    if (split.players[k].size() != static_cast<size_t>(split.n_players))
      throw dim_error("players: player count mismatch at layer " +
                      std::to_string(k));
    for (const Vec& p : split.players[k])
      if (p.size() != net.layers[k].n_params)
        throw dim_error("players: sub-parameter size mismatch at layer " +
                        std::to_string(k));
  }
}

Branch carry(Index offset, Index len) {
  Branch br;
  br.in_offset = offset;
  br.in_len = len;
  return br;
}

Branch unit_branch(DenseUnit unit, Index offset) {
  Branch br;
  br.unit = unit;
  br.in_offset = offset;
  br.in_len = unit.in;
  return br;
}

}  // namespace

PlayerSplit split_players(const NetworkSpec& net, int n_players, Rng& rng,
                          double noise_rel) {
  validate_network(net);
  if (n_players < 1)
    throw dim_error("split_players: need at least one player");
  if (noise_rel < 0.0)
    throw dim_error("split_players: noise scale must be >= 0");

  PlayerSplit split;
  split.n_players = n_players;
  split.players.resize(net.layers.size());
  const auto n = static_cast<size_t>(n_players);

  for (size_t k = 0; k < net.layers.size(); ++k) {
    const Vec& theta = net.params[k];
    const Index dim = theta.size();
    auto& pl = split.players[k];
    pl.assign(n, Vec::Zero(dim));
    if (dim == 0) continue;

    // centered symmetric break between otherwise identical players
    Mat zeta(dim, n_players);
    const double scale = noise_rel * theta.norm() / std::sqrt(double(dim));
    for (Index j = 0; j < zeta.size(); ++j)
      zeta.data()[j] = scale * rng.normal();
    zeta.colwise() -= zeta.rowwise().mean().eval();

    for (size_t p = 0; p + 1 < n; ++p)
      pl[p] = theta / double(n_players) + zeta.col(static_cast<Index>(p));

    // Correct the final player until the in-order sum reproduces theta
    // bitwise, so that collapsing the fresh split leaves the network's
    // function untouched.
    Vec partial = Vec::Zero(dim);
    if (n > 1) {
      partial = pl[0];
      for (size_t p = 1; p + 1 < n; ++p) partial += pl[p];
    }
    Vec last = theta - partial;
    bool exact = false;
    for (int iter = 0; iter < 32 && !exact; ++iter) {
      const Vec total = partial + last;
      const Vec diff = theta - total;
      exact = (diff.array() == 0.0).all();
      if (!exact) last += diff;
    }
    if (!exact) {
      // degenerate but unconditionally exact fallback: player 0 carries all
      for (size_t p = 0; p < n; ++p) pl[p] = Vec::Zero(dim);
      pl[0] = theta;
    } else {
      pl[n - 1] = std::move(last);
    }
  }
  return split;
}

void collapse_players(NetworkSpec& net, const PlayerSplit& split) {
  check_split(net, split);
  for (size_t k = 0; k < net.layers.size(); ++k) {
    if (net.layers[k].n_params == 0) continue;
    net.params[k] = sum_players(split.players[k]);
  }
}

double split_residual(const NetworkSpec& net, const PlayerSplit& split) {
  check_split(net, split);
  double worst = 0.0;
  for (size_t k = 0; k < net.layers.size(); ++k) {
    if (net.layers[k].n_params == 0) continue;
    const Vec acc = sum_players(split.players[k]);
    worst = std::max(worst, (net.params[k] - acc).cwiseAbs().maxCoeff());
  }
  return worst;
}

CoopStepResult cooperative_step(NetworkSpec& net, PlayerSplit& split,
                                const Mat& x, const Targets& t,
                                CurvatureBase& curvature,
                                const BackwardOptions& opts, double eta) {
  check_split(net, split);
  if (!(eta > 0.0))
    throw dim_error("cooperative_step: eta must be positive");
  const int n_players = split.n_players;

  const BatchActivations acts = forward(net, x);
  CoopStepResult res;
  res.batch_loss = loss_value(net.loss, acts.x.back(), t);
  if (!std::isfinite(res.batch_loss))
    throw divergence_error("cooperative_step: loss is not finite");

  // The joint subproblem over stacked players reduces to the single-agent
  // one at running cost gamma / N (players enter only through their sum and
  // each pays for its own sub-parameter).
  BackwardOptions coop = opts;
  coop.gamma = opts.gamma / double(n_players);
  const BackwardResult bw = backward_pass(net, acts, t, curvature, coop);
  res.radicand_clamps = bw.diag.radicand_clamps;

  const UpdateResult up = forward_update_with(
      net, acts, bw.policies, [&](Index k, const Vec& dtheta) {
        const auto ku = static_cast<size_t>(k);
        if (net.layers[ku].n_params == 0) return;
        auto& pl = split.players[ku];
        const Vec& theta_bar = net.params[ku];
        const double n = double(n_players);
        // full-step equalizing point: theta_{k,p} -> (theta_k + dtheta)/N
        for (int p = 0; p < n_players; ++p)
          pl[static_cast<size_t>(p)] +=
              (eta / n) *
              (dtheta + (theta_bar - n * pl[static_cast<size_t>(p)]));
        net.params[ku] = sum_players(pl);
      });
  res.dx_norm_max = up.dx_norm_max;
  res.dtheta_norm_max = up.dtheta_norm_max;
  return res;
}

AlignmentFamily build_alignment_family(Index in_dim, Index state_dim,
                                       Index hidden_dim, Index out_dim,
                                       Activation act, LossKind loss,
                                       Rng& rng) {
  if (in_dim <= 0 || state_dim <= 0 || hidden_dim <= 0 || out_dim <= 0)
    throw dim_error("alignment family: dimensions must be positive");

  const DenseUnit body1{state_dim, hidden_dim, act};
  const DenseUnit body2{hidden_dim, state_dim, Activation::Identity};

  const LayerNode stem = make_dense(in_dim, state_dim, act);
  const LayerNode head = make_dense(state_dim, out_dim, Activation::Identity);
  const LayerNode split =
      make_concat(state_dim, {carry(0, state_dim), carry(0, state_dim)});
  const LayerNode b1 = make_concat(
      2 * state_dim, {unit_branch(body1, 0), carry(state_dim, state_dim)});
  const LayerNode b2 = make_concat(
      hidden_dim + state_dim,
      {unit_branch(body2, 0), carry(hidden_dim, state_dim)});
  const LayerNode merge = make_sum_act(
      2 * state_dim, {carry(0, state_dim), carry(state_dim, state_dim)}, act);
  // split absorbed into the first body stage: both branches read the input
  const LayerNode split_b1 =
      make_concat(state_dim, {unit_branch(body1, 0), carry(0, state_dim)});
  // merge absorbed into the second body stage
  const LayerNode b2_merge = make_sum_act(
      hidden_dim + state_dim,
      {unit_branch(body2, 0), carry(hidden_dim, state_dim)}, act);

  auto mk = [&](std::vector<LayerNode> layers) {
    NetworkSpec net;
    net.layers = std::move(layers);
    net.loss = loss;
    net.params.reserve(net.layers.size());
    for (const LayerNode& layer : net.layers)
      net.params.push_back(Vec::Zero(layer.n_params));
    validate_network(net);
    return net;
  };

  AlignmentFamily fam;
  fam.arms.push_back(mk({stem, split, b1, b2, merge, head}));
  fam.arm_names.push_back("skip-own-stages");
  fam.arms.push_back(mk({stem, split_b1, b2, merge, head}));
  fam.arm_names.push_back("split-fused-back");
  fam.arms.push_back(mk({stem, split, b1, b2_merge, head}));
  fam.arm_names.push_back("merge-fused-forward");
  fam.arms.push_back(mk({stem, split_b1, b2_merge, head}));
  fam.arm_names.push_back("both-fused");

  for (size_t k = 0; k < fam.arms[0].layers.size(); ++k)
    fam.arms[0].params[k] = init_params(fam.arms[0].layers[k], rng);
  const Vec flat = flat_params(fam.arms[0]);
  for (size_t i = 1; i < fam.arms.size(); ++i)
    set_flat_params(fam.arms[i], flat);
  fam.n_flat = flat.size();
  return fam;
}

Vec policy_gains_flat(const NetworkSpec& net,
                      const std::vector<FeedbackPolicy>& policies) {
  if (policies.size() != static_cast<size_t>(net.depth()))
    throw dim_error("policy_gains_flat: one policy per layer required");
  Vec out(net.total_params());
  Index at = 0;
  for (size_t k = 0; k < policies.size(); ++k) {
    if (policies[k].g.size() != net.layers[k].n_params)
      throw dim_error("policy_gains_flat: policy size mismatch");
    out.segment(at, policies[k].g.size()) = policies[k].g;
    at += policies[k].g.size();
  }
  return out;
}

AlignmentBandit make_bandit(int n_arms, int rounds, double explore) {
  if (n_arms < 1) throw dim_error("bandit: need at least one arm");
  if (rounds < 1) throw dim_error("bandit: planned rounds must be positive");
  if (explore < 0.0 || explore > 1.0)
    throw dim_error("bandit: exploration rate must lie in [0, 1]");
  AlignmentBandit b;
  b.logw = Vec::Zero(n_arms);
  b.explore = explore;
  b.lr = std::sqrt(std::log(double(n_arms)) / double(rounds));
  return b;
}

Vec bandit_probabilities(const AlignmentBandit& bandit) {
  const Index n_arms = bandit.logw.size();
  const Vec z = (bandit.logw.array() - bandit.logw.maxCoeff()).exp();
  const Vec soft = z / z.sum();
  return (1.0 - bandit.explore) * soft +
         Vec::Constant(n_arms, bandit.explore / double(n_arms));
}

int bandit_select(AlignmentBandit& bandit, Rng& rng) {
  bandit.last_probs = bandit_probabilities(bandit);
  const double u = rng.uniform();
  double acc = 0.0;
  for (Index i = 0; i < bandit.last_probs.size(); ++i) {
    acc += bandit.last_probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(bandit.last_probs.size() - 1);
}

void bandit_reward(AlignmentBandit& bandit, int arm, double reward) {
  if (arm < 0 || arm >= bandit.logw.size())
    throw dim_error("bandit_reward: arm index out of range");
  double r = reward;
  if (r < 0.0 || r > 1.0) {
    r = std::clamp(r, 0.0, 1.0);
    ++bandit.clamped_rewards;
  }
  const Vec probs = bandit.last_probs.size() == bandit.logw.size()
                        ? bandit.last_probs
                        : bandit_probabilities(bandit);
  // importance-weighted exponential-weights update
  bandit.logw[arm] += bandit.lr * r / probs[arm];
  bandit.reward_history.push_back(r);
}

}  // namespace ocnopt
