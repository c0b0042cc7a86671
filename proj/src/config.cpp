#include "dmftsim/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dmftsim {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (const auto& x : xs) out += (out.empty() ? "" : ", ") + x;
  return out;
}

double parse_double(const std::string& field, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(field, "expected a finite number, got '" + v + "'");
  }
}

long long parse_int(const std::string& field, const std::string& v) {
  try {
    size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return x;
  } catch (const std::exception&) {
    throw ConfigError(field, "expected an integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& field, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(field, "expected true/false, got '" + v + "'");
}

std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

void require_in(const std::string& field, const std::string& v, const std::vector<std::string>& known) {
  if (std::find(known.begin(), known.end(), v) == known.end())
    throw ConfigError(field, "unknown name '" + v + "' (known: " + join(known) + ")");
}

const std::vector<std::string> kLinks = {"phase", "linear"};
const std::vector<std::string> kNoises = {"none", "gaussian"};
const std::vector<std::string> kSignals = {"gaussian", "rademacher"};
const std::vector<std::string> kFormats = {"csv", "json"};

using Setter = std::function<void(ExperimentConfig&, const std::string& field, const std::string& value)>;

template <class T>
Setter int_field(T ExperimentConfig::*member, long long lo) {
  return [member, lo](ExperimentConfig& c, const std::string& f, const std::string& v) {
    const long long x = parse_int(f, v);
    if (x < lo) throw ConfigError(f, "must be >= " + std::to_string(lo));
    c.*member = static_cast<T>(x);
  };
}

Setter real_field(double ExperimentConfig::*member, bool positive = false, bool nonneg = false) {
  return [=](ExperimentConfig& c, const std::string& f, const std::string& v) {
    const double x = parse_double(f, v);
    if (positive && !(x > 0.0)) throw ConfigError(f, "must be > 0");
    if (nonneg && !(x >= 0.0)) throw ConfigError(f, "must be >= 0");
    c.*member = x;
  };
}

Setter name_field(std::string ExperimentConfig::*member, const std::vector<std::string>* known) {
  return [=](ExperimentConfig& c, const std::string& f, const std::string& v) {
    const std::string s = unquote(v);
    if (known) require_in(f, s, *known);
    c.*member = s;
  };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model.n", int_field(&ExperimentConfig::n, 1)},
      {"model.d", int_field(&ExperimentConfig::d, 1)},
      {"model.delta",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) { c.delta = parse_double(f, v); }},
      {"model.link", name_field(&ExperimentConfig::link, &kLinks)},
      {"model.noise", name_field(&ExperimentConfig::noise, &kNoises)},
      {"model.noise_sd", real_field(&ExperimentConfig::noise_sd, false, true)},
      {"model.signal", name_field(&ExperimentConfig::signal, &kSignals)},
      {"model.seed", int_field(&ExperimentConfig::seed, 0)},

      {"loss.name", name_field(&ExperimentConfig::loss, &loss_names())},
      {"loss.L_cut", real_field(&ExperimentConfig::L_cut, false, true)},
      {"loss.U_cut", real_field(&ExperimentConfig::U_cut, true)},
      {"loss.scale", real_field(&ExperimentConfig::scale, true)},
      {"loss.preprocess", name_field(&ExperimentConfig::preprocess, &preprocess_names())},
      {"loss.M_clip", real_field(&ExperimentConfig::M_clip, true)},

      {"algo.gamma", real_field(&ExperimentConfig::gamma, true)},
      {"algo.lambda_ridge", real_field(&ExperimentConfig::lambda_ridge, false, true)},
      {"algo.m", int_field(&ExperimentConfig::m, 0)},
      {"algo.T_stage", int_field(&ExperimentConfig::T_stage, 0)},
      {"algo.hessian_radius", real_field(&ExperimentConfig::hessian_radius, false, true)},

      {"dmft.K", int_field(&ExperimentConfig::dmft_K, 2)},
      {"dmft.seed", int_field(&ExperimentConfig::dmft_seed, 0)},
      {"dmft.jitter", real_field(&ExperimentConfig::jitter, false, true)},
      {"dmft.horizon", int_field(&ExperimentConfig::dmft_horizon, 0)},
      {"dmft.max_lag", int_field(&ExperimentConfig::max_lag, 1)},

      {"fixedpoint.K", int_field(&ExperimentConfig::fp_K, 2)},
      {"fixedpoint.damping", real_field(&ExperimentConfig::damping, true)},
      {"fixedpoint.tol", real_field(&ExperimentConfig::tol, true)},
      {"fixedpoint.max_outer", int_field(&ExperimentConfig::max_outer, 1)},
      {"fixedpoint.seed", int_field(&ExperimentConfig::fp_seed, 0)},
      {"fixedpoint.long_time_m", int_field(&ExperimentConfig::long_time_m, 0)},

      {"outputs.directory", name_field(&ExperimentConfig::directory, nullptr)},
      {"outputs.formats",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.formats = parse_list(unquote(v));
         for (const auto& x : c.formats) require_in(f, x, kFormats);
       }},
      {"outputs.samples",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) { c.write_samples = parse_bool(f, v); }},

      {"pipeline.stages",
       [](ExperimentConfig& c, const std::string& f, const std::string& v) {
         c.stages = parse_list(unquote(v));
         for (const auto& x : c.stages) require_in(f, x, stage_names());
       }},
  };
  return table;
}

void validate(const ExperimentConfig& c) {
  if (c.n <= 0) throw ConfigError("model.n", "required");
  if (c.d <= 0) throw ConfigError("model.d", "required");
  if (c.delta && std::abs(c.n_over_d() - *c.delta) > 1e-12)
    throw ConfigError("model.delta", "n/d = " + std::to_string(c.n_over_d()) + " does not match declared delta " +
                                         std::to_string(*c.delta));
  if (c.noise == "gaussian" && !(c.noise_sd > 0.0)) throw ConfigError("model.noise_sd", "must be > 0 for gaussian noise");
  if (c.loss == "rwf" && !(c.U_cut > c.L_cut)) throw ConfigError("loss.U_cut", "must exceed loss.L_cut");
  if (c.loss == "rwf" && c.link != "phase") throw ConfigError("loss.name", "rwf requires model.link = phase");
  if (c.loss == "linear-pseudo-huber" && c.link != "linear")
    throw ConfigError("loss.name", "linear-pseudo-huber requires model.link = linear");
  if (!(c.damping <= 1.0)) throw ConfigError("fixedpoint.damping", "must be in (0, 1]");
}

}  // namespace

bool ExperimentConfig::wants(const std::string& format) const {
  return std::find(formats.begin(), formats.end(), format) != formats.end();
}

const std::vector<std::string>& loss_names() {
  static const std::vector<std::string> v = {"rwf", "linear-pseudo-huber"};
  return v;
}

const std::vector<std::string>& preprocess_names() {
  static const std::vector<std::string> v = {"phase-clip"};
  return v;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> v = {"spectral",  "simulate",  "dmft",     "compare",
                                             "fixed-point", "long-time", "amp-check"};
  return v;
}

const std::vector<std::string>& check_names() {
  static const std::vector<std::string> v = {
      "spectral.overlap_gap",     "spectral.lam1_rel_gap",  "spectral.lam2_rel_gap",  "dmft.negative_eig",
      "compare.max_w2_theta",     "compare.max_w2_eta",     "compare.max_cov_theta",  "compare.max_overlap_gap",
      "fixed_point.max_residual", "long_time.w2_theta",     "amp.max_equiv_error"};
  return v;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line, section;
  std::map<std::string, int> seen;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno), "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      static const std::vector<std::string> sections = {"model",  "loss",    "algo",     "dmft",
                                                        "fixedpoint", "outputs", "pipeline", "checks"};
      require_in("line " + std::to_string(lineno), section, sections);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno), "expected key = value");
    if (section.empty()) throw ConfigError("line " + std::to_string(lineno), "key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string field = section + "." + key;
    if (seen.count(field)) throw ConfigError(field, "duplicate key (first set on line " + std::to_string(seen[field]) + ")");
    seen[field] = lineno;
    if (section == "checks") {
      require_in(field, key, check_names());
      cfg.checks[key] = parse_double(field, value);
      continue;
    }
    const auto it = setters().find(field);
    if (it == setters().end()) throw ConfigError(field, "unknown key");
    it->second(cfg, field, value);
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

LossModel make_loss(const ExperimentConfig& cfg) {
  if (cfg.loss == "rwf") return rwf_loss(smoothstep_profile(cfg.L_cut, cfg.U_cut));
  if (cfg.loss == "linear-pseudo-huber") return pseudo_huber_loss(cfg.scale);
  throw ConfigError("loss.name", "unknown name '" + cfg.loss + "' (known: " + join(loss_names()) + ")");
}

LinkFunction make_link(const ExperimentConfig& cfg) {
  if (cfg.link == "phase") return abs_link();
  if (cfg.link == "linear") return linear_link();
  throw ConfigError("model.link", "unknown name '" + cfg.link + "'");
}

ScalarDist make_noise(const ExperimentConfig& cfg) {
  if (cfg.noise == "none") return point_mass(0.0);
  if (cfg.noise == "gaussian") return gaussian(cfg.noise_sd);
  throw ConfigError("model.noise", "unknown name '" + cfg.noise + "'");
}

ScalarDist make_signal(const ExperimentConfig& cfg) {
  if (cfg.signal == "gaussian") return gaussian(1.0);
  if (cfg.signal == "rademacher") return rademacher();
  throw ConfigError("model.signal", "unknown name '" + cfg.signal + "'");
}

PreProcess make_preprocess(const ExperimentConfig& cfg) {
  if (cfg.preprocess == "phase-clip") return phase_preprocess(cfg.M_clip);
  throw ConfigError("loss.preprocess", "unknown name '" + cfg.preprocess + "'");
}

DmftProblem make_dmft_problem(const ExperimentConfig& cfg) {
  DmftProblem p;
  p.loss = make_loss(cfg);
  p.link = make_link(cfg);
  p.noise = make_noise(cfg);
  p.signal = make_signal(cfg);
  p.pre = make_preprocess(cfg);
  p.delta = cfg.n_over_d();
  p.gamma = cfg.gamma;
  p.lambda_ridge = cfg.lambda_ridge;
  return p;
}

MonteCarloSpec make_mc_spec(const ExperimentConfig& cfg) {
  return MonteCarloSpec{cfg.dmft_K, cfg.dmft_seed, cfg.jitter};
}

SolverConfig make_solver_config(const ExperimentConfig& cfg) {
  return SolverConfig{cfg.fp_K, cfg.damping, cfg.tol, cfg.max_outer, cfg.fp_seed};
}

}  // namespace dmftsim
