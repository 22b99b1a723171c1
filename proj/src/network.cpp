#include "ocnopt/network.hpp"

#include <cmath>
#include <string>

namespace ocnopt {

Targets targets_from_labels(Eigen::VectorXi labels) {
  Targets t;
  t.labels = std::move(labels);
  return t;
}

Targets targets_from_values(Mat values) {
  Targets t;
  t.values = std::move(values);
  return t;
}

Index NetworkSpec::total_params() const {
  Index p = 0;
  for (const auto& v : params) p += v.size();
  return p;
}

void validate_network(const NetworkSpec& net) {
  if (net.layers.empty()) throw dim_error("network: no layers");
  if (net.params.size() != net.layers.size())
    throw dim_error("network: one parameter vector per layer required");
  for (size_t k = 0; k < net.layers.size(); ++k) {
    validate_layer(net.layers[k]);
    if (net.params[k].size() != net.layers[k].n_params)
      throw dim_error("network: layer " + std::to_string(k) +
                      " parameter size mismatch");
    if (k + 1 < net.layers.size() &&
        net.layers[k].out_dim != net.layers[k + 1].in_dim)
      throw dim_error("network: dimension break between layers " +
                      std::to_string(k) + " and " + std::to_string(k + 1));
  }
}

NetworkSpec build_mlp(const std::vector<Index>& dims, Activation act,
                      LossKind loss, Rng& rng) {
  if (dims.size() < 2) throw dim_error("build_mlp: need at least two dims");
  NetworkSpec net;
  net.loss = loss;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = (i + 2 == dims.size());
    net.layers.push_back(
        make_dense(dims[i], dims[i + 1], last ? Activation::Identity : act));
    net.params.push_back(init_params(net.layers.back(), rng));
  }
  validate_network(net);
  return net;
}

Vec flat_params(const NetworkSpec& net) {
  Vec out(net.total_params());
  Index at = 0;
  for (const auto& v : net.params) {
    out.segment(at, v.size()) = v;
    at += v.size();
  }
  return out;
}

void set_flat_params(NetworkSpec& net, const Vec& theta) {
  if (theta.size() != net.total_params())
    throw dim_error("set_flat_params: size mismatch");
  Index at = 0;
  for (auto& v : net.params) {
    v = theta.segment(at, v.size());
    at += v.size();
  }
}

BatchActivations forward(const NetworkSpec& net, const Mat& x0) {
  validate_network(net);
  if (x0.rows() != net.in_dim())
    throw dim_error("forward: input dim mismatch");
  if (x0.cols() == 0) throw dim_error("forward: empty batch");
  const Index depth = net.depth();
  BatchActivations acts;
  acts.x.resize(static_cast<size_t>(depth) + 1);
  acts.cache.resize(static_cast<size_t>(depth));
  acts.xr.resize(static_cast<size_t>(depth) + 1);
  acts.rcache.resize(static_cast<size_t>(depth));
  acts.x[0] = x0;
  acts.xr[0] = x0.rowwise().mean();
  for (Index k = 0; k < depth; ++k) {
    const auto ku = static_cast<size_t>(k);
    acts.x[ku + 1] = layer_forward(net.layers[ku], net.params[ku], acts.x[ku],
                                   &acts.cache[ku]);
    acts.xr[ku + 1] = layer_forward(net.layers[ku], net.params[ku],
                                    acts.xr[ku], &acts.rcache[ku]);
  }
  return acts;
}

namespace {

void check_targets(LossKind kind, const Mat& z, const Targets& t) {
  if (kind == LossKind::SoftmaxCrossEntropy) {
    if (t.labels.size() != z.cols())
      throw dim_error("loss: one label per sample required");
    for (Index i = 0; i < t.labels.size(); ++i)
      if (t.labels[i] < 0 || t.labels[i] >= z.rows())
        throw dim_error("loss: label out of range");
  } else {
    if (t.values.rows() != z.rows() || t.values.cols() != z.cols())
      throw dim_error("loss: target shape mismatch");
  }
}

Vec softmax(const Vec& z) {
  Vec s = (z.array() - z.maxCoeff()).exp();
  return s / s.sum();
}

}  // namespace

double loss_value(LossKind kind, const Mat& z, const Targets& t) {
  check_targets(kind, z, t);
  const Index batch = z.cols();
  double total = 0.0;
  if (kind == LossKind::SoftmaxCrossEntropy) {
    for (Index i = 0; i < batch; ++i) {
      const Vec zi = z.col(i);
      const double zmax = zi.maxCoeff();
      const double lse = zmax + std::log((zi.array() - zmax).exp().sum());
      total += lse - zi[t.labels[i]];
    }
    return total / double(batch);
  }
  return 0.5 * (z - t.values).squaredNorm() / double(batch);
}

Mat loss_grad(LossKind kind, const Mat& z, const Targets& t) {
  check_targets(kind, z, t);
  const Index batch = z.cols();
  if (kind == LossKind::SoftmaxCrossEntropy) {
    Mat g(z.rows(), batch);
    for (Index i = 0; i < batch; ++i) {
      Vec s = softmax(z.col(i));
      s[t.labels[i]] -= 1.0;
      g.col(i) = s / double(batch);
    }
    return g;
  }
  return (z - t.values) / double(batch);
}

Mat loss_hess_sample(LossKind kind, const Mat& z, const Targets& t, Index i) {
  check_targets(kind, z, t);
  if (i < 0 || i >= z.cols()) throw dim_error("loss_hess_sample: bad index");
  const double inv_b = 1.0 / double(z.cols());
  if (kind == LossKind::SoftmaxCrossEntropy) {
    Vec s = softmax(z.col(i));
    Mat h = -s * s.transpose();
    h.diagonal() += s;
    return inv_b * h;
  }
  return inv_b * Mat::Identity(z.rows(), z.rows());
}

double accuracy(const Mat& z, const Eigen::VectorXi& labels) {
  if (labels.size() != z.cols())
    throw dim_error("accuracy: one label per sample required");
  if (z.cols() == 0) return 0.0;
  Index hits = 0;
  for (Index i = 0; i < z.cols(); ++i) {
    Index arg = 0;
    z.col(i).maxCoeff(&arg);
    if (arg == labels[i]) ++hits;
  }
  return double(hits) / double(z.cols());
}

}  // namespace ocnopt
