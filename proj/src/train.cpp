#include "ocnopt/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "ocnopt/checkpoint.hpp"
#include "ocnopt/errors.hpp"

namespace ocnopt {

namespace {

constexpr Index kEvalChunk = 256;
constexpr const char* kMetricsHeader =
    "step,epoch,train_loss,train_acc,val_acc,test_acc,gain_norm,"
    "radicand_clamps,ode_t,bandit_arm";

std::string fd(double v) {
  char b[48];
  std::snprintf(b, sizeof(b), "%.17g", v);
  return b;
}

// hex float: exact round-trip through strtod
std::string fx(double v) {
  char b[48];
  std::snprintf(b, sizeof(b), "%a", v);
  return b;
}

double parse_hex(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str())
    throw parse_error("checkpoint: bad numeric state field '" + s + "'");
  return v;
}

Mat eval_forward(const NetworkSpec& net, const Mat& x) {
  Mat z = x;
  for (size_t k = 0; k < net.layers.size(); ++k)
    z = layer_forward(net.layers[k], net.params[k], z, nullptr);
  return z;
}

bool is_ocn(OptimizerMode m) {
  return m == OptimizerMode::OcnIdentity || m == OptimizerMode::OcnAdaptive ||
         m == OptimizerMode::OcnKfac;
}

CurvatureKind curvature_kind_for(OptimizerMode m) {
  switch (m) {
    case OptimizerMode::OcnIdentity:
      return CurvatureKind::Identity;
    case OptimizerMode::OcnAdaptive:
      return CurvatureKind::Adaptive;
    case OptimizerMode::OcnKfac:
      return CurvatureKind::Kfac;
    default:
      throw parse_error("train: mode has no curvature model");
  }
}

OptimizerConfig optimizer_config_from(const TrainConfig& c) {
  OptimizerConfig oc;
  oc.mode = optimizer_mode_from_string(c.mode);
  oc.eta = c.eta;
  oc.gamma = c.gamma;
  oc.beta = c.beta;
  oc.feedback = c.feedback;
  oc.curvature.eps = c.eps;
  oc.curvature.ema_adaptive = c.adaptive_ema;
  oc.curvature.ema_kfac = c.kfac_ema;
  oc.curvature.refresh_period = c.kfac_refresh;
  oc.curvature.gamma_mode = kfac_gamma_mode_from_string(c.kfac_gamma_mode);
  return oc;
}

struct EvalState {
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
};

class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, bool append) {
    out_.open(path, append ? (std::ios::out | std::ios::app)
                           : (std::ios::out | std::ios::trunc));
    if (!out_)
      throw parse_error("train: cannot open metrics file '" + path + "'");
    if (!append) out_ << kMetricsHeader << '\n';
  }
  void row(std::uint64_t step, int epoch, double batch_loss,
           const EvalState& ev, double gain_norm, int clamps, double ode_t,
           int arm) {
    out_ << step << ',' << epoch << ',' << fd(batch_loss) << ','
         << fd(ev.train_acc) << ',' << fd(ev.val_acc) << ','
         << fd(ev.test_acc) << ',' << fd(gain_norm) << ',' << clamps << ','
         << fd(ode_t) << ',' << arm << '\n';
    if (!out_) throw parse_error("train: metrics write failed");
  }

 private:
  std::ofstream out_;
};

struct Driver {
  explicit Driver(TrainConfig c) : cfg(std::move(c)) {}

  TrainConfig cfg;
  Dataset ds;
  LossKind loss = LossKind::SoftmaxCrossEntropy;
  OptimizerMode mode = OptimizerMode::OcnAdaptive;

  bool use_ode = false;
  bool use_players = false;
  bool use_family = false;

  NetworkSpec net;  // standard + players
  std::unique_ptr<Optimizer> opt;
  PlayerSplit split;
  std::unique_ptr<CurvatureModel> coop_curv;
  AlignmentFamily family;
  AlignmentBandit bandit;
  bool use_bandit = false;
  bool random_arm = false;
  int arm = 0;
  OdeModel ode;

  Rng loop_rng{0};
  std::uint64_t step = 0;
  int start_epoch = 0;
  EvalState ev;

  size_t steps_per_epoch() const {
    const size_t n = ds.train_idx.size();
    const auto b = static_cast<size_t>(cfg.batch_size);
    return (n + b - 1) / b;
  }

  NetworkSpec& active_net() { return use_family ? family.arms[arm] : net; }
  const NetworkSpec& active_net() const {
    return use_family ? family.arms[arm] : net;
  }

  void build() {
    ds = cfg.data.kind == "csv"
             ? load_csv(cfg.data.path, cfg.data.label_column, cfg.seed)
             : make_synthetic(cfg.data.kind, cfg.data.n, cfg.data.noise,
                              cfg.seed);
    loss = ds.regression() ? LossKind::MeanSquaredError
                           : LossKind::SoftmaxCrossEntropy;
    const Activation act = activation_from_string(cfg.activation);
    mode = optimizer_mode_from_string(cfg.mode);
    Rng init_rng(cfg.seed + 1);

    if (cfg.ode.enabled) {
      use_ode = true;
      if (mode != OptimizerMode::OcnIdentity && mode != OptimizerMode::OcnKfac)
        throw parse_error(
            "train: ode runs support mode ocnopt-identity or ocnopt-kfac");
      if (ds.regression())
        throw parse_error("train: the ode path is a classifier");
      if (ds.dim() != ds.n_classes())
        throw dim_error(
            "train: ode classifier needs feature dim == class count");
      ode = build_ode_model(ds.dim(), cfg.hidden, act, loss,
                            cfg.ode.horizon, cfg.ode.steps, init_rng);
    } else if (cfg.game.alignment != "none") {
      use_family = true;
      if (mode != OptimizerMode::OcnIdentity && mode != OptimizerMode::Sgd)
        throw parse_error(
            "train: alignment arms run under the stateless modes "
            "ocnopt-identity or sgd");
      const Index state = cfg.hidden[0];
      const Index hid = cfg.hidden.size() > 1 ? cfg.hidden[1] : cfg.hidden[0];
      family = build_alignment_family(ds.dim(), state, hid, ds.target_dim(),
                                      act, loss, init_rng);
      const int n_arms = static_cast<int>(family.arms.size());
      if (cfg.game.alignment == "bandit") {
        use_bandit = true;
        const auto total =
            steps_per_epoch() * static_cast<size_t>(cfg.epochs);
        const int rounds = std::max<int>(
            1, static_cast<int>(total /
                                static_cast<size_t>(cfg.game.reward_period)));
        bandit = make_bandit(n_arms, rounds);
      } else if (cfg.game.alignment == "random") {
        random_arm = true;
      } else {  // fixed:<i>
        arm = std::atoi(cfg.game.alignment.c_str() + 6);
        if (arm < 0 || arm >= n_arms)
          throw parse_error("train: fixed alignment arm out of range");
      }
      opt = std::make_unique<Optimizer>(family.arms[0],
                                        optimizer_config_from(cfg));
    } else {
      std::vector<Index> dims;
      dims.push_back(ds.dim());
      dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
      dims.push_back(ds.target_dim());
      net = build_mlp(dims, act, loss, init_rng);
      if (cfg.game.players > 1) {
        use_players = true;
        if (!is_ocn(mode))
          throw parse_error(
              "train: game.players requires an ocnopt-* mode");
        Rng split_rng(cfg.seed + 4);
        split = split_players(net, cfg.game.players, split_rng);
        CurvatureOptions copts;
        copts.kind = curvature_kind_for(mode);
        copts.gamma = cfg.gamma / double(cfg.game.players);
        copts.eps = cfg.eps;
        copts.ema_adaptive = cfg.adaptive_ema;
        copts.ema_kfac = cfg.kfac_ema;
        copts.refresh_period = cfg.kfac_refresh;
        copts.gamma_mode = kfac_gamma_mode_from_string(cfg.kfac_gamma_mode);
        coop_curv = std::make_unique<CurvatureModel>(net, copts);
      } else {
        opt = std::make_unique<Optimizer>(net, optimizer_config_from(cfg));
      }
    }
    loop_rng = Rng(cfg.seed + 2);
  }

  double split_accuracy(const std::vector<Index>& idx) const {
    if (use_ode) return ode_dataset_accuracy(ode, ds, idx);
    return dataset_accuracy(active_net(), ds, idx);
  }
  double split_loss(const std::vector<Index>& idx) const {
    if (!use_ode) return dataset_loss(active_net(), ds, idx);
    if (idx.empty()) return 0.0;
    double total = 0.0;
    for (size_t at = 0; at < idx.size(); at += kEvalChunk) {
      const size_t count = std::min<size_t>(kEvalChunk, idx.size() - at);
      const Mat z = ode_predict(ode, gather_features(ds, idx, at, count));
      total += loss_value(ode.loss, z, gather_targets(ds, idx, at, count)) *
               double(count);
    }
    return total / double(idx.size());
  }

  void full_eval() {
    ev.train_loss = split_loss(ds.train_idx);
    ev.train_acc = split_accuracy(ds.train_idx);
    ev.val_acc = split_accuracy(ds.val_idx);
    ev.test_acc = split_accuracy(ds.test_idx);
  }

  std::string encode_extra() const {
    std::ostringstream os;
    os << "evals " << fx(ev.train_loss) << ' ' << fx(ev.train_acc) << ' '
       << fx(ev.val_acc) << ' ' << fx(ev.test_acc) << '\n';
    if (use_family) {
      os << "arm " << arm << '\n';
      if (use_bandit) {
        os << "bandit " << bandit.logw.size() << ' '
           << bandit.clamped_rewards << ' ' << fx(bandit.explore) << ' '
           << fx(bandit.lr);
        for (Index i = 0; i < bandit.logw.size(); ++i)
          os << ' ' << fx(bandit.logw[i]);
        os << '\n';
        os << "bandit_probs " << bandit.last_probs.size();
        for (Index i = 0; i < bandit.last_probs.size(); ++i)
          os << ' ' << fx(bandit.last_probs[i]);
        os << '\n';
      }
    }
    if (use_players) {
      os << "players " << split.players.size() << ' ' << split.n_players
         << '\n';
      for (const auto& layer : split.players)
        for (const Vec& p : layer) {
          os << p.size();
          for (Index i = 0; i < p.size(); ++i) os << ' ' << fx(p[i]);
          os << '\n';
        }
    }
    return os.str();
  }

  void decode_extra(const std::string& text) {
    std::istringstream is(text);
    std::string tag;
    while (is >> tag) {
      if (tag == "evals") {
        std::string a, b, c, d;
        is >> a >> b >> c >> d;
        ev.train_loss = parse_hex(a);
        ev.train_acc = parse_hex(b);
        ev.val_acc = parse_hex(c);
        ev.test_acc = parse_hex(d);
      } else if (tag == "arm") {
        is >> arm;
      } else if (tag == "bandit") {
        Index n_arms = 0;
        std::string e, l, w;
        is >> n_arms >> bandit.clamped_rewards >> e >> l;
        bandit.explore = parse_hex(e);
        bandit.lr = parse_hex(l);
        bandit.logw.resize(n_arms);
        for (Index i = 0; i < n_arms; ++i) {
          is >> w;
          bandit.logw[i] = parse_hex(w);
        }
      } else if (tag == "bandit_probs") {
        Index n = 0;
        std::string v;
        is >> n;
        bandit.last_probs.resize(n);
        for (Index i = 0; i < n; ++i) {
          is >> v;
          bandit.last_probs[i] = parse_hex(v);
        }
      } else if (tag == "players") {
        size_t n_layers = 0;
        int n_players = 0;
        is >> n_layers >> n_players;
        if (n_layers != split.players.size() ||
            n_players != split.n_players)
          throw parse_error("checkpoint: player split shape mismatch");
        for (auto& layer : split.players)
          for (Vec& p : layer) {
            Index len = 0;
            is >> len;
            if (len != p.size())
              throw parse_error("checkpoint: player vector size mismatch");
            std::string v;
            for (Index i = 0; i < len; ++i) {
              is >> v;
              p[i] = parse_hex(v);
            }
          }
      } else {
        throw parse_error("checkpoint: unknown state tag '" + tag + "'");
      }
    }
  }

  Checkpoint snapshot(std::uint64_t at_step, int at_epoch) const {
    Checkpoint ck;
    if (use_family) {
      ck.params.push_back(flat_params(family.arms[static_cast<size_t>(arm)]));
    } else if (use_ode) {
      ck.params = ode.field.params;
    } else {
      ck.params = net.params;
    }
    ck.rng_state = loop_rng.serialize();
    if (opt) {
      std::ostringstream os;
      opt->save_state(os);
      ck.optimizer_state = os.str();
    } else if (coop_curv) {
      std::ostringstream os;
      coop_curv->save_state(os);
      ck.optimizer_state = os.str();
    }
    ck.step = at_step;
    ck.epoch = static_cast<std::uint64_t>(at_epoch);
    ck.ode_horizon = use_ode ? ode.horizon : 0.0;
    ck.extra = encode_extra();
    return ck;
  }

  void restore(const Checkpoint& ck) {
    if (use_family) {
      if (ck.params.size() != 1)
        throw parse_error("checkpoint: expected one flat parameter block");
      // arm index arrives through the extra section; scatter afterwards
      decode_extra(ck.extra);
      for (NetworkSpec& a : family.arms) set_flat_params(a, ck.params[0]);
    } else if (use_ode) {
      if (ck.params.size() != ode.field.params.size())
        throw parse_error("checkpoint: layer count mismatch");
      for (size_t k = 0; k < ck.params.size(); ++k) {
        if (ck.params[k].size() != ode.field.params[k].size())
          throw parse_error("checkpoint: layer shape mismatch");
        ode.field.params[k] = ck.params[k];
      }
      ode.horizon = ck.ode_horizon;
      decode_extra(ck.extra);
    } else {
      if (ck.params.size() != net.params.size())
        throw parse_error("checkpoint: layer count mismatch");
      for (size_t k = 0; k < ck.params.size(); ++k) {
        if (ck.params[k].size() != net.params[k].size())
          throw parse_error("checkpoint: layer shape mismatch");
        net.params[k] = ck.params[k];
      }
      decode_extra(ck.extra);
      if (use_players) collapse_players(net, split);
    }
    if (!ck.optimizer_state.empty()) {
      std::istringstream is(ck.optimizer_state);
      if (opt)
        opt->load_state(is);
      else if (coop_curv)
        coop_curv->load_state(is);
    }
    loop_rng = Rng::deserialize(ck.rng_state);
    step = ck.step;
    start_epoch = static_cast<int>(ck.epoch);
  }

  TrainResult run(bool fresh) {
    const auto wall_start = std::chrono::steady_clock::now();
    MetricsWriter mw(cfg.metrics_path, !fresh);
    if (fresh) full_eval();

    BackwardOptions coop_opts;
    coop_opts.gamma = cfg.gamma;
    coop_opts.beta = cfg.beta;
    coop_opts.feedback = cfg.feedback;

    int epoch = start_epoch;
    try {
      for (; epoch < cfg.epochs; ++epoch) {
        const std::vector<Index>& tr = ds.train_idx;
        const std::vector<int> perm =
            loop_rng.permutation(static_cast<int>(tr.size()));
        std::vector<Index> order(tr.size());
        for (size_t i = 0; i < tr.size(); ++i)
          order[i] = tr[static_cast<size_t>(perm[i])];

        for (size_t b0 = 0; b0 < tr.size();
             b0 += static_cast<size_t>(cfg.batch_size)) {
          const size_t count = std::min<size_t>(
              static_cast<size_t>(cfg.batch_size), tr.size() - b0);

          if (use_family &&
              step % static_cast<std::uint64_t>(cfg.game.reward_period) ==
                  0) {
            if (use_bandit) {
              if (step > 0) {
                const double r = dataset_accuracy(family.arms[arm], ds,
                                                  ds.val_idx);
                ev.val_acc = r;
                bandit_reward(bandit, arm, r);
              }
              const int next = bandit_select(bandit, loop_rng);
              if (next != arm) {
                const Vec flat = flat_params(family.arms[arm]);
                set_flat_params(family.arms[next], flat);
                arm = next;
              }
            } else if (random_arm) {
              const int next = loop_rng.uniform_int(
                  static_cast<int>(family.arms.size()));
              if (next != arm) {
                const Vec flat = flat_params(family.arms[arm]);
                set_flat_params(family.arms[next], flat);
                arm = next;
              }
            }
          }

          const Mat x = gather_features(ds, order, b0, count);
          const Targets t = gather_targets(ds, order, b0, count);

          double batch_loss = 0.0, gain = 0.0;
          int clamps = 0;
          if (use_ode) {
            OdeStepOptions o;
            o.gamma = cfg.gamma;
            o.eta = cfg.eta;
            o.identity_precond = mode == OptimizerMode::OcnIdentity;
            o.horizon_opt = cfg.ode.horizon_opt;
            o.penalty_c = cfg.ode.penalty_c;
            o.eta_horizon = cfg.ode.eta_horizon;
            const OdeStepResult r = ode_train_step(ode, x, t, o);
            batch_loss = r.loss_before;
            gain = r.dtheta_norm;
          } else if (use_players) {
            const CoopStepResult r = cooperative_step(
                net, split, x, t, *coop_curv, coop_opts, cfg.eta);
            batch_loss = r.batch_loss;
            gain = r.dtheta_norm_max;
            clamps = r.radicand_clamps;
          } else {
            const StepDiagnostics d = opt->step(active_net(), x, t);
            batch_loss = d.batch_loss;
            gain = d.dtheta_norm;
            clamps = d.radicand_clamps;
          }
          ++step;

          if (cfg.eval_period > 0 &&
              step % static_cast<std::uint64_t>(cfg.eval_period) == 0)
            full_eval();
          mw.row(step, epoch, batch_loss, ev, gain, clamps,
                 use_ode ? ode.horizon : 0.0, use_family ? arm : -1);
        }

        if (cfg.eval_period == 0) full_eval();
        if (cfg.checkpoint_period > 0 && epoch + 1 < cfg.epochs &&
            (epoch + 1) % cfg.checkpoint_period == 0)
          save_checkpoint(cfg.checkpoint_path, snapshot(step, epoch + 1));
      }
    } catch (const divergence_error& e) {
      throw divergence_error(std::string(e.what()) + " [run: epoch " +
                             std::to_string(epoch) + ", step " +
                             std::to_string(step) + "]");
    }

    full_eval();
    save_checkpoint(cfg.checkpoint_path, snapshot(step, cfg.epochs));

    TrainResult res;
    res.steps = step;
    res.epochs = cfg.epochs;
    res.final_train_loss = ev.train_loss;
    res.train_accuracy = ev.train_acc;
    res.val_accuracy = ev.val_acc;
    res.test_accuracy = ev.test_acc;
    res.final_horizon = use_ode ? ode.horizon : 0.0;
    res.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - wall_start)
                      .count();

    nlohmann::json manifest;
    manifest["config"] = nlohmann::json::parse(config_to_json(cfg));
    manifest["metrics_schema"] = kMetricsHeader;
    manifest["wall_ms"] = res.wall_ms;
    manifest["result"] = {{"steps", res.steps},
                          {"final_train_loss", res.final_train_loss},
                          {"train_accuracy", res.train_accuracy},
                          {"val_accuracy", res.val_accuracy},
                          {"test_accuracy", res.test_accuracy},
                          {"final_horizon", res.final_horizon}};
    std::ofstream mf(cfg.manifest_path, std::ios::trunc);
    if (!mf)
      throw parse_error("train: cannot open manifest '" + cfg.manifest_path +
                        "'");
    mf << manifest.dump(2) << '\n';
    return res;
  }
};

}  // namespace

double dataset_accuracy(const NetworkSpec& net, const Dataset& ds,
                        const std::vector<Index>& idx) {
  if (idx.empty()) return 0.0;
  if (ds.regression()) {
    double sse = 0.0;
    for (size_t at = 0; at < idx.size(); at += kEvalChunk) {
      const size_t count = std::min<size_t>(kEvalChunk, idx.size() - at);
      const Mat z = eval_forward(net, gather_features(ds, idx, at, count));
      const Targets t = gather_targets(ds, idx, at, count);
      sse += (z - t.values).squaredNorm();
    }
    return -sse / double(idx.size());
  }
  double correct = 0.0;
  for (size_t at = 0; at < idx.size(); at += kEvalChunk) {
    const size_t count = std::min<size_t>(kEvalChunk, idx.size() - at);
    const Mat z = eval_forward(net, gather_features(ds, idx, at, count));
    const Targets t = gather_targets(ds, idx, at, count);
    correct += accuracy(z, t.labels) * double(count);
  }
  return correct / double(idx.size());
}

double dataset_loss(const NetworkSpec& net, const Dataset& ds,
                    const std::vector<Index>& idx) {
  if (idx.empty()) return 0.0;
  double total = 0.0;
  for (size_t at = 0; at < idx.size(); at += kEvalChunk) {
    const size_t count = std::min<size_t>(kEvalChunk, idx.size() - at);
    const Mat z = eval_forward(net, gather_features(ds, idx, at, count));
    total += loss_value(net.loss, z, gather_targets(ds, idx, at, count)) *
             double(count);
  }
  return total / double(idx.size());
}

double ode_dataset_accuracy(const OdeModel& model, const Dataset& ds,
                            const std::vector<Index>& idx) {
  if (idx.empty()) return 0.0;
  double correct = 0.0;
  for (size_t at = 0; at < idx.size(); at += kEvalChunk) {
    const size_t count = std::min<size_t>(kEvalChunk, idx.size() - at);
    const Mat z = ode_predict(model, gather_features(ds, idx, at, count));
    const Targets t = gather_targets(ds, idx, at, count);
    correct += accuracy(z, t.labels) * double(count);
  }
  return correct / double(idx.size());
}

TrainResult train(const TrainConfig& cfg) {
  validate_config(cfg);
  Driver d(cfg);
  d.build();
  return d.run(true);
}

TrainResult train_resume(const TrainConfig& cfg,
                         const std::string& checkpoint_path) {
  validate_config(cfg);
  Driver d(cfg);
  d.build();
  d.restore(load_checkpoint(checkpoint_path));
  return d.run(false);
}

std::string metrics_summary_json(const std::string& metrics_path) {
  std::ifstream in(metrics_path);
  if (!in)
    throw parse_error("plot: cannot open metrics file '" + metrics_path +
                      "'");
  std::string line;
  if (!std::getline(in, line))
    throw parse_error("plot: empty metrics file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  std::vector<double> mins(cols.size()), maxs(cols.size()),
      firsts(cols.size()), lasts(cols.size());
  std::uint64_t rows = 0;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    size_t j = 0;
    while (std::getline(ss, cell, ',')) {
      if (j >= cols.size())
        throw parse_error("plot: " + metrics_path + ":" +
                          std::to_string(line_no) + ": too many fields");
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str())
        throw parse_error("plot: " + metrics_path + ":" +
                          std::to_string(line_no) + ": not numeric: '" +
                          cell + "'");
      if (rows == 0) {
        mins[j] = maxs[j] = firsts[j] = v;
      } else {
        mins[j] = std::min(mins[j], v);
        maxs[j] = std::max(maxs[j], v);
      }
      lasts[j] = v;
      ++j;
    }
    if (j != cols.size())
      throw parse_error("plot: " + metrics_path + ":" +
                        std::to_string(line_no) + ": too few fields");
    ++rows;
  }

  nlohmann::json out;
  out["rows"] = rows;
  out["columns"] = nlohmann::json::object();
  for (size_t j = 0; j < cols.size(); ++j) {
    if (rows == 0)
      out["columns"][cols[j]] = nlohmann::json::object();
    else
      out["columns"][cols[j]] = {{"min", mins[j]},
                                 {"max", maxs[j]},
                                 {"first", firsts[j]},
                                 {"last", lasts[j]}};
  }
  return out.dump(2) + "\n";
}

}  // namespace ocnopt
