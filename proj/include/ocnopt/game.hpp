#pragma once

#include <string>

#include "ocnopt/core.hpp"

namespace ocnopt {

/// Fictitious cooperative players: each layer's parameter vector is written
/// as a sum of per-player sub-parameters. The collapsed network is the only
/// thing inference ever sees; the split changes how updates are solved.
struct PlayerSplit {
  int n_players = 1;
  std::vector<std::vector<Vec>> players;  // [layer][player]
};

/// Splits every layer as theta_k = sum_n theta_{k,n}. Players receive
/// theta_k/N plus centered Gaussian noise of scale
/// noise_rel * ||theta_k|| / sqrt(dim); the last player is then corrected so
/// the running sum used by collapse_players reproduces theta_k bitwise.
PlayerSplit split_players(const NetworkSpec& net, int n_players, Rng& rng,
                          double noise_rel = 1e-3);

/// Writes the collapsed parameters (the in-order player sums) into net.
void collapse_players(NetworkSpec& net, const PlayerSplit& split);

/// Largest absolute mismatch between net's parameters and the player sums.
double split_residual(const NetworkSpec& net, const PlayerSplit& split);

struct CoopStepResult {
  double batch_loss = 0.0;
  double dx_norm_max = 0.0;
  double dtheta_norm_max = 0.0;  // collapsed full-policy step
  int radicand_clamps = 0;
};

/// One cooperative training step for the split players. All players act on
/// the dynamics only through their sum, so the joint quadratic subproblem
/// collapses: its exact stationarity conditions equalize the damped players
/// and reduce to the single-agent subproblem with running cost gamma/N.
/// The collapsed step is therefore obtained from the standard backward pass
/// at gamma/N; each player then moves toward the equalizing point
/// (theta_k + dtheta_k)/N, scaled by eta, and the collapsed parameters are
/// re-synchronized to the exact player sums.
CoopStepResult cooperative_step(NetworkSpec& net, PlayerSplit& split,
                                const Mat& x, const Targets& t,
                                CurvatureBase& curvature,
                                const BackwardOptions& opts, double eta);

/// A family of stage decompositions of one residual classifier that all
/// compute the same function over the same flat parameter vector. The arms
/// differ in which stage absorbs the skip connection's split and merge:
/// kept as separate stages, fused into the neighbouring body stages, or
/// both. Stage boundaries change the per-stage subproblems and hence the
/// update policies, which is what the alignment bandit exploits.
struct AlignmentFamily {
  std::vector<NetworkSpec> arms;
  std::vector<std::string> arm_names;
  Index n_flat = 0;
};

/// Residual classifier family: dense stem (in_dim -> state_dim), one
/// residual block with body state_dim -> hidden_dim -> state_dim, dense
/// head (state_dim -> out_dim). Weights are drawn once and shared by every
/// arm through the common flat layout.
AlignmentFamily build_alignment_family(Index in_dim, Index state_dim,
                                       Index hidden_dim, Index out_dim,
                                       Activation act, LossKind loss,
                                       Rng& rng);

/// Concatenated open-loop policy gains in flat parameter order.
Vec policy_gains_flat(const NetworkSpec& net,
                      const std::vector<FeedbackPolicy>& policies);

/// Exponential-weights bandit over alignment arms, with uniform exploration
/// mixing: p_i = (1 - explore) softmax(logw)_i + explore / K. Rewards are
/// importance-weighted by the selection probability. Weights are kept in
/// log space.
struct AlignmentBandit {
  Vec logw;
  double explore = 0.05;
  double lr = 0.0;
  int clamped_rewards = 0;
  std::vector<double> reward_history;
  Vec last_probs;  // probabilities used for the most recent selection
};

/// lr defaults to sqrt(log(n_arms) / rounds) for a planned horizon.
AlignmentBandit make_bandit(int n_arms, int rounds, double explore = 0.05);

/// Current selection distribution (valid, each entry >= explore / K).
Vec bandit_probabilities(const AlignmentBandit& bandit);

/// Samples an arm from the current distribution.
int bandit_select(AlignmentBandit& bandit, Rng& rng);

/// Records reward in [0, 1] (clamped with a diagnostic count otherwise)
/// for an arm selected under the bandit's current distribution.
void bandit_reward(AlignmentBandit& bandit, int arm, double reward);

}  // namespace ocnopt
