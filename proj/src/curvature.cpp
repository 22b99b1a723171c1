#include "ocnopt/curvature.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

namespace ocnopt {

namespace {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void write_mat(std::ostream& os, const Mat& m) {
  const std::int64_t r = m.rows(), c = m.cols();
  os.write(reinterpret_cast<const char*>(&r), sizeof r);
  os.write(reinterpret_cast<const char*>(&c), sizeof c);
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(double) * m.size()));
}

Mat read_mat(std::istream& is) {
  std::int64_t r = 0, c = 0;
  is.read(reinterpret_cast<char*>(&r), sizeof r);
  is.read(reinterpret_cast<char*>(&c), sizeof c);
  if (is.fail() || r < 0 || c < 0)
    throw parse_error("curvature state: bad matrix header");
  Mat m(r, c);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (is.fail()) throw parse_error("curvature state: truncated matrix");
  return m;
}

}  // namespace

CurvatureModel::CurvatureModel(const NetworkSpec& net, CurvatureOptions opts)
    : opts_(opts), state_(static_cast<size_t>(net.depth())) {
  if (opts_.eps <= 0.0) throw dim_error("curvature: eps must be positive");
  if (opts_.ema_adaptive < 0.0 || opts_.ema_adaptive >= 1.0 ||
      opts_.ema_kfac < 0.0 || opts_.ema_kfac >= 1.0)
    throw dim_error("curvature: EMA decay must lie in [0, 1)");
  if (opts_.refresh_period <= 0)
    throw dim_error("curvature: refresh period must be positive");
  if (opts_.gamma < 0.0) throw dim_error("curvature: gamma must be >= 0");
  for (Index k = 0; k < net.depth(); ++k) {
    LayerState& ls = state_[static_cast<size_t>(k)];
    const LayerNode& layer = net.layers[static_cast<size_t>(k)];
    ls.s = Vec::Zero(layer.n_params);
    for (const Branch& br : layer.branches) {
      if (!br.unit) continue;
      KfacBlockState bs;
      bs.param_offset = br.param_offset;
      bs.m = br.unit->out;
      bs.n = br.unit->in;
      bs.a_ema = Mat::Zero(bs.n + 1, bs.n + 1);
      bs.b_ema = Mat::Zero(bs.m, bs.m);
      ls.blocks.push_back(std::move(bs));
    }
  }
}

void CurvatureModel::update_stats(Index layer, const CurvatureObservation& obs) {
  LayerState& ls = state_.at(static_cast<size_t>(layer));
  if (opts_.kind == CurvatureKind::Identity) {
    ++ls.updates;
    return;
  }
  if (opts_.kind == CurvatureKind::Adaptive) {
    if (obs.q_theta.size() != ls.s.size())
      throw dim_error("curvature: gradient size mismatch");
    const double rho = opts_.ema_adaptive;
    ls.s = rho * ls.s + (1.0 - rho) * obs.q_theta.cwiseProduct(obs.q_theta);
    ++ls.updates;
    return;
  }
  // Kronecker factors. Per-sample cotangents arrive scaled by 1/B (gradients
  // of the batch-mean objective); rescale so the factor average is the
  // per-sample second moment.
  if (obs.blocks.size() != ls.blocks.size())
    throw dim_error("curvature: block count mismatch");
  const double rho = opts_.ema_kfac;
  for (size_t j = 0; j < ls.blocks.size(); ++j) {
    KfacBlockState& bs = ls.blocks[j];
    const KfacBlockObs& o = obs.blocks[j];
    if (o.param_offset != bs.param_offset || o.m != bs.m || o.n != bs.n)
      throw dim_error("curvature: block shape mismatch");
    const Index batch = o.x_aug.cols();
    if (batch == 0) throw dim_error("curvature: empty observation");
    const Mat a_batch = o.x_aug * o.x_aug.transpose() / double(batch);
    const Mat g = double(batch) * o.v_h;
    const Mat b_batch = g * g.transpose() / double(batch);
    bs.a_ema = rho * bs.a_ema + (1.0 - rho) * a_batch;
    bs.b_ema = rho * bs.b_ema + (1.0 - rho) * b_batch;
  }
  if (ls.updates % opts_.refresh_period == 0) {
    for (KfacBlockState& bs : ls.blocks) {
      bs.a_eig = sym_eig(bs.a_ema);
      bs.b_eig = sym_eig(bs.b_ema);
      bs.ready = true;
    }
  }
  ++ls.updates;
}

void kron_precondition_block(const SymEig& a_eig, const SymEig& b_eig,
                             double gamma, KfacGammaMode mode,
                             double pinv_tol, Index m, Index n,
                             double* block) {
  // Parameter block [vec_rm(W); b] viewed as the augmented gradient matrix
  // [W | b], transposed so the apply is two small dense products.
  Mat c(n + 1, m);
  c.topRows(n) = Eigen::Map<const RowMat>(block, m, n).transpose();
  c.row(n) = Eigen::Map<const Vec>(block + m * n, m).transpose();

  Mat y = a_eig.vectors.transpose() * c * b_eig.vectors;
  const double a_cut = pinv_tol * std::max(a_eig.values.maxCoeff(), 0.0);
  const double b_cut = pinv_tol * std::max(b_eig.values.maxCoeff(), 0.0);
  for (Index i = 0; i <= n; ++i) {
    const double la = std::max(a_eig.values[i], 0.0);
    for (Index j = 0; j < m; ++j) {
      const double lb = std::max(b_eig.values[j], 0.0);
      double d;
      if (gamma > 0.0 && mode == KfacGammaMode::FoldedDamping) {
        d = 1.0 / (la * lb + gamma);
      } else {
        const double inv_a = (la > a_cut && la > 0.0) ? 1.0 / la : 0.0;
        const double inv_b = (lb > b_cut && lb > 0.0) ? 1.0 / lb : 0.0;
        d = inv_a * inv_b;
        if (gamma > 0.0) d += 1.0 / gamma;
      }
      y(i, j) *= d;
    }
  }
  c = a_eig.vectors * y * b_eig.vectors.transpose();
  Eigen::Map<RowMat>(block, m, n) = c.topRows(n).transpose();
  Eigen::Map<Vec>(block + m * n, m) = c.row(n).transpose();
}

void CurvatureModel::kfac_apply_block(const KfacBlockState& bs,
                                      Vec& out) const {
  kron_precondition_block(bs.a_eig, bs.b_eig, opts_.gamma, opts_.gamma_mode,
                          opts_.pinv_tol, bs.m, bs.n,
                          out.data() + bs.param_offset);
}

Vec CurvatureModel::apply_pinv(Index layer, const Vec& v) const {
  const LayerState& ls = state_.at(static_cast<size_t>(layer));
  if (opts_.kind == CurvatureKind::Identity) return v;
  if (opts_.kind == CurvatureKind::Adaptive) {
    if (v.size() != ls.s.size())
      throw dim_error("curvature: apply size mismatch");
    // Bias-corrected average: without the correction the early averages
    // sit near zero and the first applies are wildly over-scaled.
    const double correction =
        1.0 - std::pow(opts_.ema_adaptive, double(std::max(ls.updates, 1L)));
    return (v.array() / ((ls.s / correction).array().sqrt() + opts_.eps))
        .matrix();
  }
  Vec out = v;
  for (const KfacBlockState& bs : ls.blocks) {
    if (bs.param_offset + bs.m * bs.n + bs.m > v.size())
      throw dim_error("curvature: apply size mismatch");
    if (!bs.ready) continue;  // identity until first factor refresh
    kfac_apply_block(bs, out);
  }
  return out;
}

const Vec& CurvatureModel::adaptive_ema(Index layer) const {
  return state_.at(static_cast<size_t>(layer)).s;
}

const Mat& CurvatureModel::kfac_input_factor(Index layer, Index block) const {
  return state_.at(static_cast<size_t>(layer))
      .blocks.at(static_cast<size_t>(block))
      .a_ema;
}

const Mat& CurvatureModel::kfac_cotangent_factor(Index layer,
                                                 Index block) const {
  return state_.at(static_cast<size_t>(layer))
      .blocks.at(static_cast<size_t>(block))
      .b_ema;
}

void CurvatureModel::save_state(std::ostream& os) const {
  const std::int64_t layers = static_cast<std::int64_t>(state_.size());
  os.write(reinterpret_cast<const char*>(&layers), sizeof layers);
  for (const LayerState& ls : state_) {
    write_mat(os, ls.s);
    os.write(reinterpret_cast<const char*>(&ls.updates), sizeof ls.updates);
    const std::int64_t blocks = static_cast<std::int64_t>(ls.blocks.size());
    os.write(reinterpret_cast<const char*>(&blocks), sizeof blocks);
    for (const KfacBlockState& bs : ls.blocks) {
      write_mat(os, bs.a_ema);
      write_mat(os, bs.b_ema);
      // The eigenbases are refreshed on a cadence, so they can lag the
      // factor averages; persist them so resumption continues bit-exact.
      const std::int8_t ready = bs.ready ? 1 : 0;
      os.write(reinterpret_cast<const char*>(&ready), sizeof ready);
      if (bs.ready) {
        write_mat(os, bs.a_eig.vectors);
        write_mat(os, bs.a_eig.values);
        write_mat(os, bs.b_eig.vectors);
        write_mat(os, bs.b_eig.values);
      }
    }
  }
}

void CurvatureModel::load_state(std::istream& is) {
  std::int64_t layers = 0;
  is.read(reinterpret_cast<char*>(&layers), sizeof layers);
  if (is.fail() || layers != static_cast<std::int64_t>(state_.size()))
    throw parse_error("curvature state: layer count mismatch");
  for (LayerState& ls : state_) {
    Mat s = read_mat(is);
    if (s.cols() != 1 || s.rows() != ls.s.size())
      throw parse_error("curvature state: EMA size mismatch");
    ls.s = s.col(0);
    is.read(reinterpret_cast<char*>(&ls.updates), sizeof ls.updates);
    std::int64_t blocks = 0;
    is.read(reinterpret_cast<char*>(&blocks), sizeof blocks);
    if (is.fail() || blocks != static_cast<std::int64_t>(ls.blocks.size()))
      throw parse_error("curvature state: block count mismatch");
    for (KfacBlockState& bs : ls.blocks) {
      bs.a_ema = read_mat(is);
      bs.b_ema = read_mat(is);
      if (bs.a_ema.rows() != bs.n + 1 || bs.b_ema.rows() != bs.m)
        throw parse_error("curvature state: factor shape mismatch");
      std::int8_t ready = 0;
      is.read(reinterpret_cast<char*>(&ready), sizeof ready);
      if (is.fail()) throw parse_error("curvature state: truncated");
      bs.ready = ready != 0;
      if (bs.ready) {
        bs.a_eig.vectors = read_mat(is);
        Mat av = read_mat(is);
        bs.b_eig.vectors = read_mat(is);
        Mat bv = read_mat(is);
        if (av.cols() != 1 || bv.cols() != 1)
          throw parse_error("curvature state: bad eigenvalue block");
        bs.a_eig.values = av.col(0);
        bs.b_eig.values = bv.col(0);
      }
    }
  }
}

}  // namespace ocnopt
