#pragma once

#include <optional>
#include <vector>

#include "ocnopt/linalg.hpp"
#include "ocnopt/rng.hpp"

namespace ocnopt {

enum class Activation { Identity, Tanh, Sigmoid, Relu };

/// Elementwise activation and its derivative, evaluated at pre-activations.
/// Relu derivative is defined as 0 at 0.
Mat act_eval(Activation a, const Mat& h);
Mat act_deriv(Activation a, const Mat& h);

/// Shape of one affine map y = act(W x + b). Parameters live in the owning
/// layer's flat vector: W row-major, then b.
struct DenseUnit {
  Index in = 0;
  Index out = 0;
  Activation act = Activation::Identity;
  Index param_count() const { return in * out + out; }
};

/// One input-slice-to-output contribution inside a layer. A branch either
/// applies a DenseUnit to its input slice or carries the slice unchanged.
struct Branch {
  std::optional<DenseUnit> unit;  // nullopt: identity carry
  Index in_offset = 0;
  Index in_len = 0;
  Index out_offset = 0;   // within the layer output (Concat layers)
  Index param_offset = 0; // within the layer's flat parameter vector
  Index out_len() const { return unit ? unit->out : in_len; }
};

/// A single stage x_{k+1} = f_k(x_k, theta_k) of the network, built from
/// branches over (possibly overlapping) slices of the input.
///   Concat: branch outputs are concatenated. Covers plain dense layers,
///           residual splits (transform alongside an identity carry) and
///           parallel transforms on disjoint slices.
///   SumAct: branch outputs share one dimension, are summed, and an outer
///           activation is applied. Covers residual merges and multi-path
///           aggregation.
struct LayerNode {
  enum class Kind { Concat, SumAct };
  Kind kind = Kind::Concat;
  Index in_dim = 0;
  Index out_dim = 0;
  Index n_params = 0;
  Activation out_act = Activation::Identity;  // SumAct only
  std::vector<Branch> branches;
};

/// Batched intermediate values from one layer evaluation, one column per
/// sample. Needed by every derivative product.
struct LayerCache {
  Mat in;                 // in_dim x B
  std::vector<Mat> h;     // per branch: pre-activation (empty for carries)
  Mat h_sum;              // SumAct: summed branch outputs before out_act
  Mat out;                // out_dim x B
};

LayerNode make_dense(Index in, Index out, Activation act);
LayerNode make_activation(Index dim, Activation act);

/// Concat layer: each entry transforms (or carries) a slice of the input.
LayerNode make_concat(Index in_dim, std::vector<Branch> branches);

/// SumAct layer: branch outputs of equal length are summed, then activated.
LayerNode make_sum_act(Index in_dim, std::vector<Branch> branches,
                       Activation out_act);

/// Residual block stage over the augmented state [z_main; z_carry]: the main
/// slice is transformed, the carry slice is transformed by `skip` when given
/// and carried unchanged otherwise, and both are concatenated.
LayerNode build_residual(DenseUnit main, std::optional<DenseUnit> skip,
                         Index carry_offset, Index carry_len);

void validate_layer(const LayerNode& layer);

/// Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases.
Vec init_params(const LayerNode& layer, Rng& rng);

Mat layer_forward(const LayerNode& layer, const Vec& theta, const Mat& x,
                  LayerCache* cache);

/// v^T (df/dx): pulls a batch of output cotangents back to the input.
Mat layer_vjp_x(const LayerNode& layer, const Vec& theta,
                const LayerCache& cache, const Mat& v);

/// Sum over the batch of v_i^T (df/dtheta): the parameter cotangent of a
/// batch objective whose per-sample output cotangents are the columns of v.
Vec layer_vjp_theta_sum(const LayerNode& layer, const Vec& theta,
                        const LayerCache& cache, const Mat& v);

/// (df/dx) wx for a batch of input tangents.
Mat layer_jvp_x(const LayerNode& layer, const Vec& theta,
                const LayerCache& cache, const Mat& wx);

/// (df/dtheta) wtheta, broadcast over the batch.
Mat layer_jvp_theta(const LayerNode& layer, const Vec& theta,
                    const LayerCache& cache, const Vec& wtheta);

/// Kronecker-factorable view of one dense branch evaluation: the layer's
/// parameter gradient restricted to the branch factors as x_aug (x) v_h,
/// with x_aug the homogeneous input [x; 1] and v_h the cotangent at the
/// branch pre-activation.
struct KfacBlockObs {
  Index param_offset = 0;
  Index m = 0;      // unit output dim
  Index n = 0;      // unit input dim
  Mat x_aug;        // (n+1) x B
  Mat v_h;          // m x B
};

std::vector<KfacBlockObs> layer_kfac_obs(const LayerNode& layer,
                                         const Vec& theta,
                                         const LayerCache& cache,
                                         const Mat& v);

}  // namespace ocnopt
