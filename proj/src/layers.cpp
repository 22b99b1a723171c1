#include "ocnopt/layers.hpp"

#include <cmath>
#include <string>

namespace ocnopt {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> weight(const Vec& theta, const Branch& b) {
  return Eigen::Map<const RowMat>(theta.data() + b.param_offset, b.unit->out,
                                  b.unit->in);
}

Eigen::Map<const Vec> bias(const Vec& theta, const Branch& b) {
  return Eigen::Map<const Vec>(
      theta.data() + b.param_offset + b.unit->in * b.unit->out, b.unit->out);
}

void check_layer_args(const LayerNode& layer, const Vec& theta, Index rows,
                      Index expect_rows, const char* who) {
  if (theta.size() != layer.n_params)
    throw dim_error(std::string(who) + ": parameter vector has " +
                    std::to_string(theta.size()) + " entries, layer needs " +
                    std::to_string(layer.n_params));
  if (rows != expect_rows)
    throw dim_error(std::string(who) + ": got " + std::to_string(rows) +
                    " rows, expected " + std::to_string(expect_rows));
}

/// Cotangent at each dense branch pre-activation; identity carries get an
/// empty slot. For Concat the source is the output slice, for SumAct the
/// shared outer cotangent u = act'(h_sum) .* v.
std::vector<Mat> branch_cotangents(const LayerNode& layer,
                                   const LayerCache& cache, const Mat& v) {
  std::vector<Mat> g(layer.branches.size());
  if (layer.kind == LayerNode::Kind::Concat) {
    for (size_t i = 0; i < layer.branches.size(); ++i) {
      const Branch& br = layer.branches[i];
      if (!br.unit) continue;
      g[i] = act_deriv(br.unit->act, cache.h[i])
                 .cwiseProduct(v.middleRows(br.out_offset, br.unit->out));
    }
  } else {
    const Mat u = act_deriv(layer.out_act, cache.h_sum).cwiseProduct(v);
    for (size_t i = 0; i < layer.branches.size(); ++i) {
      const Branch& br = layer.branches[i];
      if (!br.unit) continue;
      g[i] = act_deriv(br.unit->act, cache.h[i]).cwiseProduct(u);
    }
  }
  return g;
}

}  // namespace

Mat act_eval(Activation a, const Mat& h) {
  switch (a) {
    case Activation::Identity:
      return h;
    case Activation::Tanh:
      return h.array().tanh();
    case Activation::Sigmoid:
      return (0.5 * ((0.5 * h).array().tanh() + 1.0)).matrix();
    case Activation::Relu:
      return h.cwiseMax(0.0);
  }
  throw dim_error("act_eval: unknown activation");
}

Mat act_deriv(Activation a, const Mat& h) {
  switch (a) {
    case Activation::Identity:
      return Mat::Ones(h.rows(), h.cols());
    case Activation::Tanh: {
      Mat t = h.array().tanh();
      return (1.0 - t.array().square()).matrix();
    }
    case Activation::Sigmoid: {
      Mat s = (0.5 * ((0.5 * h).array().tanh() + 1.0)).matrix();
      return s.cwiseProduct((1.0 - s.array()).matrix());
    }
    case Activation::Relu:
      return (h.array() > 0.0).cast<double>();
  }
  throw dim_error("act_deriv: unknown activation");
}

void validate_layer(const LayerNode& layer) {
  if (layer.in_dim <= 0 || layer.out_dim <= 0)
    throw dim_error("layer: dimensions must be positive");
  if (layer.branches.empty()) throw dim_error("layer: needs branches");
  Index params = 0;
  Index concat_out = 0;
  for (const Branch& br : layer.branches) {
    if (br.in_offset < 0 || br.in_len <= 0 ||
        br.in_offset + br.in_len > layer.in_dim)
      throw dim_error("layer: branch input slice out of range");
    if (br.unit) {
      if (br.unit->in != br.in_len)
        throw dim_error("layer: unit input dim does not match slice");
      if (br.unit->out <= 0) throw dim_error("layer: unit output dim");
      if (br.param_offset != params)
        throw dim_error("layer: branch parameter offsets must be contiguous");
      params += br.unit->param_count();
    }
    if (layer.kind == LayerNode::Kind::Concat) {
      if (br.out_offset != concat_out)
        throw dim_error("layer: branch output offsets must be contiguous");
      concat_out += br.out_len();
    } else {
      if (br.out_len() != layer.out_dim)
        throw dim_error("layer: summed branches must share the output dim");
    }
  }
  if (layer.kind == LayerNode::Kind::Concat && concat_out != layer.out_dim)
    throw dim_error("layer: concatenated branch outputs do not fill out_dim");
  if (params != layer.n_params)
    throw dim_error("layer: n_params does not match branch units");
}

LayerNode make_concat(Index in_dim, std::vector<Branch> branches) {
  LayerNode layer;
  layer.kind = LayerNode::Kind::Concat;
  layer.in_dim = in_dim;
  Index out = 0, params = 0;
  for (Branch& br : branches) {
    br.out_offset = out;
    br.param_offset = params;
    out += br.out_len();
    if (br.unit) params += br.unit->param_count();
  }
  layer.out_dim = out;
  layer.n_params = params;
  layer.branches = std::move(branches);
  validate_layer(layer);
  return layer;
}

LayerNode make_sum_act(Index in_dim, std::vector<Branch> branches,
                       Activation out_act) {
  LayerNode layer;
  layer.kind = LayerNode::Kind::SumAct;
  layer.in_dim = in_dim;
  layer.out_act = out_act;
  Index params = 0;
  for (Branch& br : branches) {
    br.out_offset = 0;
    br.param_offset = params;
    if (br.unit) params += br.unit->param_count();
  }
  layer.out_dim = branches.empty() ? 0 : branches.front().out_len();
  layer.n_params = params;
  layer.branches = std::move(branches);
  validate_layer(layer);
  return layer;
}

LayerNode make_dense(Index in, Index out, Activation act) {
  Branch br;
  br.unit = DenseUnit{in, out, act};
  br.in_offset = 0;
  br.in_len = in;
  return make_concat(in, {br});
}

LayerNode make_activation(Index dim, Activation act) {
  Branch br;
  br.in_offset = 0;
  br.in_len = dim;
  return make_sum_act(dim, {br}, act);
}

LayerNode build_residual(DenseUnit main, std::optional<DenseUnit> skip,
                         Index carry_offset, Index carry_len) {
  Branch bm;
  bm.unit = main;
  bm.in_offset = 0;
  bm.in_len = main.in;
  Branch bc;
  bc.unit = skip;
  bc.in_offset = carry_offset;
  bc.in_len = carry_len;
  const Index in_dim = std::max(main.in, carry_offset + carry_len);
  return make_concat(in_dim, {bm, bc});
}

Vec init_params(const LayerNode& layer, Rng& rng) {
  Vec theta = Vec::Zero(layer.n_params);
  for (const Branch& br : layer.branches) {
    if (!br.unit) continue;
    const double bound =
        std::sqrt(6.0 / double(br.unit->in + br.unit->out));
    for (Index i = 0; i < br.unit->in * br.unit->out; ++i)
      theta[br.param_offset + i] = rng.uniform(-bound, bound);
    // biases stay zero
  }
  return theta;
}

Mat layer_forward(const LayerNode& layer, const Vec& theta, const Mat& x,
                  LayerCache* cache) {
  check_layer_args(layer, theta, x.rows(), layer.in_dim, "layer_forward");
  const Index batch = x.cols();
  LayerCache local;
  LayerCache& c = cache ? *cache : local;
  c.in = x;
  c.h.assign(layer.branches.size(), Mat());
  Mat out;
  if (layer.kind == LayerNode::Kind::Concat) {
    out.resize(layer.out_dim, batch);
    for (size_t i = 0; i < layer.branches.size(); ++i) {
      const Branch& br = layer.branches[i];
      if (br.unit) {
        Mat h = weight(theta, br) * x.middleRows(br.in_offset, br.in_len);
        h.colwise() += bias(theta, br);
        c.h[i] = h;
        out.middleRows(br.out_offset, br.unit->out) =
            act_eval(br.unit->act, h);
      } else {
        out.middleRows(br.out_offset, br.in_len) =
            x.middleRows(br.in_offset, br.in_len);
      }
    }
  } else {
    Mat s = Mat::Zero(layer.out_dim, batch);
    for (size_t i = 0; i < layer.branches.size(); ++i) {
      const Branch& br = layer.branches[i];
      if (br.unit) {
        Mat h = weight(theta, br) * x.middleRows(br.in_offset, br.in_len);
        h.colwise() += bias(theta, br);
        c.h[i] = h;
        s += act_eval(br.unit->act, h);
      } else {
        s += x.middleRows(br.in_offset, br.in_len);
      }
    }
    c.h_sum = s;
    out = act_eval(layer.out_act, s);
  }
  c.out = out;
  return out;
}

Mat layer_vjp_x(const LayerNode& layer, const Vec& theta,
                const LayerCache& cache, const Mat& v) {
  check_layer_args(layer, theta, v.rows(), layer.out_dim, "layer_vjp_x");
  Mat gx = Mat::Zero(layer.in_dim, v.cols());
  const std::vector<Mat> g = branch_cotangents(layer, cache, v);
  for (size_t i = 0; i < layer.branches.size(); ++i) {
    const Branch& br = layer.branches[i];
    if (br.unit) {
      gx.middleRows(br.in_offset, br.in_len) +=
          weight(theta, br).transpose() * g[i];
    } else if (layer.kind == LayerNode::Kind::Concat) {
      gx.middleRows(br.in_offset, br.in_len) +=
          v.middleRows(br.out_offset, br.in_len);
    } else {
      gx.middleRows(br.in_offset, br.in_len) +=
          act_deriv(layer.out_act, cache.h_sum).cwiseProduct(v);
    }
  }
  return gx;
}

Vec layer_vjp_theta_sum(const LayerNode& layer, const Vec& theta,
                        const LayerCache& cache, const Mat& v) {
  check_layer_args(layer, theta, v.rows(), layer.out_dim,
                   "layer_vjp_theta_sum");
  Vec gt = Vec::Zero(layer.n_params);
  const std::vector<Mat> g = branch_cotangents(layer, cache, v);
  for (size_t i = 0; i < layer.branches.size(); ++i) {
    const Branch& br = layer.branches[i];
    if (!br.unit) continue;
    const Index m = br.unit->out, n = br.unit->in;
    Eigen::Map<RowMat> gw(gt.data() + br.param_offset, m, n);
    gw = g[i] * cache.in.middleRows(br.in_offset, br.in_len).transpose();
    gt.segment(br.param_offset + m * n, m) = g[i].rowwise().sum();
  }
  return gt;
}

Mat layer_jvp_x(const LayerNode& layer, const Vec& theta,
                const LayerCache& cache, const Mat& wx) {
  check_layer_args(layer, theta, wx.rows(), layer.in_dim, "layer_jvp_x");
  const Index batch = wx.cols();
  if (layer.kind == LayerNode::Kind::Concat) {
    Mat dy(layer.out_dim, batch);
    for (size_t i = 0; i < layer.branches.size(); ++i) {
      const Branch& br = layer.branches[i];
      if (br.unit) {
        Mat dh = weight(theta, br) * wx.middleRows(br.in_offset, br.in_len);
        dy.middleRows(br.out_offset, br.unit->out) =
            act_deriv(br.unit->act, cache.h[i]).cwiseProduct(dh);
      } else {
        dy.middleRows(br.out_offset, br.in_len) =
            wx.middleRows(br.in_offset, br.in_len);
      }
    }
    return dy;
  }
  Mat s = Mat::Zero(layer.out_dim, batch);
  for (size_t i = 0; i < layer.branches.size(); ++i) {
    const Branch& br = layer.branches[i];
    if (br.unit) {
      Mat dh = weight(theta, br) * wx.middleRows(br.in_offset, br.in_len);
      s += act_deriv(br.unit->act, cache.h[i]).cwiseProduct(dh);
    } else {
      s += wx.middleRows(br.in_offset, br.in_len);
    }
  }
  return act_deriv(layer.out_act, cache.h_sum).cwiseProduct(s);
}

Mat layer_jvp_theta(const LayerNode& layer, const Vec& theta,
                    const LayerCache& cache, const Vec& wtheta) {
  if (wtheta.size() != layer.n_params)
    throw dim_error("layer_jvp_theta: tangent size mismatch");
  check_layer_args(layer, theta, cache.in.rows(), layer.in_dim,
                   "layer_jvp_theta");
  const Index batch = cache.in.cols();
  Mat out = Mat::Zero(layer.out_dim, batch);
  Mat sum = Mat::Zero(layer.out_dim, batch);
  for (size_t i = 0; i < layer.branches.size(); ++i) {
    const Branch& br = layer.branches[i];
    if (!br.unit) continue;
    const Index m = br.unit->out, n = br.unit->in;
    Eigen::Map<const RowMat> dw(wtheta.data() + br.param_offset, m, n);
    Eigen::Map<const Vec> db(wtheta.data() + br.param_offset + m * n, m);
    Mat dh = dw * cache.in.middleRows(br.in_offset, br.in_len);
    dh.colwise() += db;
    Mat dy = act_deriv(br.unit->act, cache.h[i]).cwiseProduct(dh);
    if (layer.kind == LayerNode::Kind::Concat)
      out.middleRows(br.out_offset, m) = dy;
    else
      sum += dy;
  }
  if (layer.kind == LayerNode::Kind::Concat) return out;
  return act_deriv(layer.out_act, cache.h_sum).cwiseProduct(sum);
}

std::vector<KfacBlockObs> layer_kfac_obs(const LayerNode& layer,
                                         const Vec& theta,
                                         const LayerCache& cache,
                                         const Mat& v) {
  check_layer_args(layer, theta, v.rows(), layer.out_dim, "layer_kfac_obs");
  const Index batch = v.cols();
  std::vector<KfacBlockObs> obs;
  const std::vector<Mat> g = branch_cotangents(layer, cache, v);
  for (size_t i = 0; i < layer.branches.size(); ++i) {
    const Branch& br = layer.branches[i];
    if (!br.unit) continue;
    KfacBlockObs o;
    o.param_offset = br.param_offset;
    o.m = br.unit->out;
    o.n = br.unit->in;
    o.x_aug.resize(br.in_len + 1, batch);
    o.x_aug.topRows(br.in_len) = cache.in.middleRows(br.in_offset, br.in_len);
    o.x_aug.row(br.in_len).setOnes();
    o.v_h = g[i];
    obs.push_back(std::move(o));
  }
  return obs;
}

}  // namespace ocnopt
