#pragma once

#include <vector>

#include "ocnopt/layers.hpp"

namespace ocnopt {

enum class LossKind { SoftmaxCrossEntropy, MeanSquaredError };

/// Supervision for one batch: integer labels for classification, target
/// columns for regression. Only the member matching the loss kind is read.
struct Targets {
  Eigen::VectorXi labels;
  Mat values;
};

Targets targets_from_labels(Eigen::VectorXi labels);
Targets targets_from_values(Mat values);

/// A deep network as a chain of layer stages with per-stage parameter
/// vectors and a terminal loss. Adjacent stage dimensions must agree.
struct NetworkSpec {
  std::vector<LayerNode> layers;
  std::vector<Vec> params;
  LossKind loss = LossKind::SoftmaxCrossEntropy;

  Index depth() const { return static_cast<Index>(layers.size()); }
  Index in_dim() const { return layers.front().in_dim; }
  Index out_dim() const { return layers.back().out_dim; }
  Index total_params() const;
};

void validate_network(const NetworkSpec& net);

/// Multilayer perceptron: dense stages through `dims` with `act` on every
/// stage except the last, which is linear.
NetworkSpec build_mlp(const std::vector<Index>& dims, Activation act,
                      LossKind loss, Rng& rng);

Vec flat_params(const NetworkSpec& net);
void set_flat_params(NetworkSpec& net, const Vec& theta);

/// Everything the derivative passes need from one batch evaluation:
/// per-sample activations plus a single representative trajectory obtained
/// by propagating the batch-mean input through the network. The
/// representative trajectory satisfies the layer dynamics exactly, so
/// perturbation recursions along it are self-consistent for any batch size,
/// and for a single sample it coincides with the sample trajectory.
struct BatchActivations {
  std::vector<Mat> x;              // depth+1 entries, d_k x B
  std::vector<LayerCache> cache;   // depth entries
  std::vector<Vec> xr;             // depth+1 entries, representative states
  std::vector<LayerCache> rcache;  // depth entries
  Index batch() const { return x.empty() ? 0 : x.front().cols(); }
};

BatchActivations forward(const NetworkSpec& net, const Mat& x0);

/// Mean loss over the batch. Cross-entropy uses a log-sum-exp shift.
double loss_value(LossKind kind, const Mat& z, const Targets& t);

/// Per-sample gradients of the mean loss, one column per sample (each
/// carries the 1/B factor).
Mat loss_grad(LossKind kind, const Mat& z, const Targets& t);

/// Exact Hessian of the mean loss with respect to sample i's output
/// (carries the 1/B factor).
Mat loss_hess_sample(LossKind kind, const Mat& z, const Targets& t, Index i);

/// Fraction of argmax-correct columns; meaningful for classification only.
double accuracy(const Mat& z, const Eigen::VectorXi& labels);

}  // namespace ocnopt
