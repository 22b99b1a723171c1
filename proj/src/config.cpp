#include "ocnopt/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ocnopt/errors.hpp"
#include "ocnopt/optimizer.hpp"

namespace ocnopt {

namespace {

using nlohmann::json;

json to_doc(const TrainConfig& c) {
  json j;
  j["eta"] = c.eta;
  j["gamma"] = c.gamma;
  j["beta"] = c.beta;
  j["eps"] = c.eps;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["mode"] = c.mode;
  j["feedback"] = c.feedback;
  j["hidden"] = c.hidden;
  j["activation"] = c.activation;
  j["data"] = {{"kind", c.data.kind},
               {"path", c.data.path},
               {"label_column", c.data.label_column},
               {"n", c.data.n},
               {"noise", c.data.noise}};
  j["ode"] = {{"enabled", c.ode.enabled},
              {"steps", c.ode.steps},
              {"horizon", c.ode.horizon},
              {"horizon_opt", c.ode.horizon_opt},
              {"penalty_c", c.ode.penalty_c},
              {"eta_horizon", c.ode.eta_horizon}};
  j["game"] = {{"players", c.game.players},
               {"alignment", c.game.alignment},
               {"reward_period", c.game.reward_period}};
  j["metrics_path"] = c.metrics_path;
  j["checkpoint_path"] = c.checkpoint_path;
  j["manifest_path"] = c.manifest_path;
  j["checkpoint_period"] = c.checkpoint_period;
  j["eval_period"] = c.eval_period;
  j["adaptive_ema"] = c.adaptive_ema;
  j["kfac_ema"] = c.kfac_ema;
  j["kfac_refresh"] = c.kfac_refresh;
  j["kfac_gamma_mode"] = c.kfac_gamma_mode;
  return j;
}

void check_known(const json& user, const json& schema,
                 const std::string& prefix) {
  for (const auto& item : user.items()) {
    if (!schema.contains(item.key()))
      throw parse_error("config: unknown key '" + prefix + item.key() + "'");
    if (item.value().is_object()) {
      if (!schema.at(item.key()).is_object())
        throw parse_error("config: key '" + prefix + item.key() +
                          "' does not take a section");
      check_known(item.value(), schema.at(item.key()),
                  prefix + item.key() + ".");
    }
  }
}

void deep_merge(json& base, const json& user) {
  for (const auto& item : user.items()) {
    if (item.value().is_object() && base.contains(item.key()) &&
        base.at(item.key()).is_object())
      deep_merge(base.at(item.key()), item.value());
    else
      base[item.key()] = item.value();
  }
}

template <typename T>
T get_field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw parse_error(std::string("config: bad value for '") + key + "'");
  }
}

TrainConfig from_doc(const json& j) {
  TrainConfig c;
  c.eta = get_field<double>(j, "eta");
  c.gamma = get_field<double>(j, "gamma");
  c.beta = get_field<double>(j, "beta");
  c.eps = get_field<double>(j, "eps");
  c.batch_size = get_field<Index>(j, "batch_size");
  c.epochs = get_field<int>(j, "epochs");
  c.seed = get_field<std::uint64_t>(j, "seed");
  c.mode = get_field<std::string>(j, "mode");
  c.feedback = get_field<bool>(j, "feedback");
  c.hidden = get_field<std::vector<Index>>(j, "hidden");
  c.activation = get_field<std::string>(j, "activation");
  const json& d = j.at("data");
  c.data.kind = get_field<std::string>(d, "kind");
  c.data.path = get_field<std::string>(d, "path");
  c.data.label_column = get_field<std::string>(d, "label_column");
  c.data.n = get_field<Index>(d, "n");
  c.data.noise = get_field<double>(d, "noise");
  const json& o = j.at("ode");
  c.ode.enabled = get_field<bool>(o, "enabled");
  c.ode.steps = get_field<int>(o, "steps");
  c.ode.horizon = get_field<double>(o, "horizon");
  c.ode.horizon_opt = get_field<bool>(o, "horizon_opt");
  c.ode.penalty_c = get_field<double>(o, "penalty_c");
  c.ode.eta_horizon = get_field<double>(o, "eta_horizon");
  const json& g = j.at("game");
  c.game.players = get_field<int>(g, "players");
  c.game.alignment = get_field<std::string>(g, "alignment");
  c.game.reward_period = get_field<int>(g, "reward_period");
  c.metrics_path = get_field<std::string>(j, "metrics_path");
  c.checkpoint_path = get_field<std::string>(j, "checkpoint_path");
  c.manifest_path = get_field<std::string>(j, "manifest_path");
  c.checkpoint_period = get_field<int>(j, "checkpoint_period");
  c.eval_period = get_field<int>(j, "eval_period");
  c.adaptive_ema = get_field<double>(j, "adaptive_ema");
  c.kfac_ema = get_field<double>(j, "kfac_ema");
  c.kfac_refresh = get_field<int>(j, "kfac_refresh");
  c.kfac_gamma_mode = get_field<std::string>(j, "kfac_gamma_mode");
  validate_config(c);
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw parse_error("config: override must look like key.path=value: '" +
                      assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings pass through
  }

  json* cur = &doc;
  std::stringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty())
      throw parse_error("config: empty path segment in override '" +
                        assignment + "'");
    parts.push_back(part);
  }
  for (size_t i = 0; i + 1 < parts.size(); ++i) cur = &((*cur)[parts[i]]);
  (*cur)[parts.back()] = value;
}

}  // namespace

void validate_config(const TrainConfig& c) {
  if (!(c.eta > 0.0)) throw parse_error("config: eta must be positive");
  if (c.gamma < 0.0) throw parse_error("config: gamma must be >= 0");
  if (!(c.beta > 0.0) || c.beta > 1.0)
    throw parse_error("config: beta must lie in (0, 1]");
  if (!(c.eps > 0.0)) throw parse_error("config: eps must be positive");
  if (c.batch_size < 1) throw parse_error("config: batch_size must be >= 1");
  if (c.epochs < 0) throw parse_error("config: epochs must be >= 0");
  optimizer_mode_from_string(c.mode);
  activation_from_string(c.activation);
  kfac_gamma_mode_from_string(c.kfac_gamma_mode);
  if (c.hidden.empty())
    throw parse_error("config: hidden must list at least one layer width");
  for (Index h : c.hidden)
    if (h < 1) throw parse_error("config: hidden widths must be positive");
  if (c.data.kind == "csv") {
    if (c.data.path.empty())
      throw parse_error("config: data.kind=csv requires data.path");
  } else if (c.data.kind != "two-moons" && c.data.kind != "circles" &&
             c.data.kind != "spirals" && c.data.kind != "linear-regression" &&
             c.data.kind != "digits") {
    throw parse_error("config: unknown data.kind '" + c.data.kind + "'");
  }
  if (c.data.n < 10) throw parse_error("config: data.n must be >= 10");
  if (c.data.noise < 0.0)
    throw parse_error("config: data.noise must be >= 0");
  if (c.ode.enabled) {
    if (c.ode.steps < 1) throw parse_error("config: ode.steps must be >= 1");
    if (!(c.ode.horizon > 0.0))
      throw parse_error("config: ode.horizon must be positive");
    if (c.ode.penalty_c < 0.0)
      throw parse_error("config: ode.penalty_c must be >= 0");
    if (!(c.ode.eta_horizon > 0.0))
      throw parse_error("config: ode.eta_horizon must be positive");
  }
  if (c.game.players < 1)
    throw parse_error("config: game.players must be >= 1");
  const std::string& al = c.game.alignment;
  const bool fixed_arm = al.rfind("fixed:", 0) == 0 && al.size() > 6;
  if (al != "none" && al != "random" && al != "bandit" && !fixed_arm)
    throw parse_error("config: game.alignment must be none, fixed:<i>, "
                      "random or bandit");
  if (c.game.reward_period < 1)
    throw parse_error("config: game.reward_period must be >= 1");
  if (c.ode.enabled && (c.game.players > 1 || al != "none"))
    throw parse_error("config: ode training does not compose with game "
                      "settings");
  if (c.game.players > 1 && al != "none")
    throw parse_error("config: fictitious players and alignment arms are "
                      "separate experiments; enable one");
  if (c.checkpoint_period < 0)
    throw parse_error("config: checkpoint_period must be >= 0");
  if (c.eval_period < 0)
    throw parse_error("config: eval_period must be >= 0");
  if (c.adaptive_ema <= 0.0 || c.adaptive_ema >= 1.0)
    throw parse_error("config: adaptive_ema must lie in (0, 1)");
  if (c.kfac_ema <= 0.0 || c.kfac_ema >= 1.0)
    throw parse_error("config: kfac_ema must lie in (0, 1)");
  if (c.kfac_refresh < 1)
    throw parse_error("config: kfac_refresh must be >= 1");
  if (c.metrics_path.empty() || c.checkpoint_path.empty() ||
      c.manifest_path.empty())
    throw parse_error("config: output paths must be non-empty");
}

TrainConfig parse_config_text(const std::string& json_text,
                              const std::vector<std::string>& overrides) {
  json user;
  try {
    user = json::parse(json_text);
  } catch (const json::exception& e) {
    throw parse_error(std::string("config: invalid JSON: ") + e.what());
  }
  if (!user.is_object())
    throw parse_error("config: document must be a JSON object");

  json doc = to_doc(TrainConfig{});
  check_known(user, doc, "");
  deep_merge(doc, user);
  for (const std::string& ov : overrides) apply_override(doc, ov);
  check_known(doc, to_doc(TrainConfig{}), "");
  return from_doc(doc);
}

TrainConfig load_config(const std::string& path,
                        const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw parse_error("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), overrides);
}

std::string config_to_json(const TrainConfig& cfg) {
  return to_doc(cfg).dump(2) + "\n";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "tanh") return Activation::Tanh;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "relu") return Activation::Relu;
  throw parse_error("config: unknown activation '" + s + "'");
}

KfacGammaMode kfac_gamma_mode_from_string(const std::string& s) {
  if (s == "add-inverse") return KfacGammaMode::AddInverse;
  if (s == "folded-damping") return KfacGammaMode::FoldedDamping;
  throw parse_error("config: unknown kfac_gamma_mode '" + s + "'");
}

}  // namespace ocnopt
