#include "dmftsim/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>

namespace dmftsim {

using nlohmann::json;

std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

}  // namespace

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns) {
  if (header.size() != columns.size()) throw InvalidArgument("write_csv: header/column count mismatch");
  const size_t rows = columns.empty() ? 0 : columns[0].size();
  for (const auto& c : columns)
    if (c.size() != rows) throw InvalidArgument("write_csv: ragged columns");
  auto out = open_out(path);
  for (size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';
  for (size_t i = 0; i < rows; ++i) {
    for (size_t j = 0; j < columns.size(); ++j) out << (j ? "," : "") << format_real(columns[j][i]);
    out << '\n';
  }
}

void write_kernel_csv(const std::filesystem::path& path, const std::function<double(int, int)>& entry, int m) {
  auto out = open_out(path);
  out << "t\\s";
  for (int s = 0; s <= m; ++s) out << ',' << s;
  out << '\n';
  for (int t = 0; t <= m; ++t) {
    out << t;
    for (int s = 0; s <= m; ++s) out << ',' << format_real(entry(t, s));
    out << '\n';
  }
}

void write_samples_csv(const std::filesystem::path& path, const std::vector<std::string>& names,
                       const MatrixXd& samples) {
  if (static_cast<Eigen::Index>(names.size()) != samples.cols())
    throw InvalidArgument("write_samples_csv: name/column count mismatch");
  auto out = open_out(path);
  for (size_t j = 0; j < names.size(); ++j) out << (j ? "," : "") << names[j];
  out << '\n';
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    for (Eigen::Index j = 0; j < samples.cols(); ++j) out << (j ? "," : "") << format_real(samples(i, j));
    out << '\n';
  }
}

struct Session::Cache {
  std::optional<ModelInstance> inst;
  std::optional<LambdaStarSolution> lam;
  std::optional<SpectralResult> spec;
  std::optional<Trajectory> traj;
  std::optional<DmftState> dmft;
  std::optional<DmftLaw> law;
  std::optional<FixedPointState> fp;
};

Session::Session(ExperimentConfig cfg, std::filesystem::path out_dir)
    : cfg_(std::move(cfg)), out_(std::move(out_dir)), cache_(std::make_unique<Cache>()) {
  std::filesystem::create_directories(out_);
}

Session::~Session() = default;

void Session::record(const std::string& name, double value) {
  const auto it = cfg_.checks.find(name);
  if (it == cfg_.checks.end()) return;
  checks_.push_back(CheckResult{name, value, it->second, std::isfinite(value) && value <= it->second});
}

void Session::note_artifact(const std::filesystem::path& p) { artifacts_.push_back(p.filename().string()); }

void Session::write_json(const std::string& file, const std::string& text) {
  if (!cfg_.wants("json")) return;
  auto out = open_out(out_ / file);
  out << text << '\n';
  note_artifact(out_ / file);
}

namespace {

std::vector<double> iota_vec(int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

// Lazy intermediates. Each stage pulls what it needs; results are shared.

void Session::stage_spectral() {
  auto& c = *cache_;
  const auto link = make_link(cfg_);
  const auto pre = make_preprocess(cfg_);
  if (!c.inst) c.inst = make_instance(cfg_.n, cfg_.d, cfg_.seed, link, make_noise(cfg_), make_signal(cfg_));
  if (!c.lam) c.lam = solve_lambda_star(pre, link, make_noise(cfg_), cfg_.n_over_d());
  if (!c.spec) c.spec = spectral_estimator(*c.inst, pre);
}

void Session::stage_simulate() {
  stage_spectral();
  auto& c = *cache_;
  if (!c.traj) {
    GdConfig g{cfg_.gamma, cfg_.lambda_ridge, cfg_.m, true};
    c.traj = run_gd(*c.inst, make_loss(cfg_), g, c.spec->theta0);
    align_sign(*c.traj, c.inst->theta_star);
  }
}

void Session::stage_dmft() {
  stage_spectral();
  auto& c = *cache_;
  if (!c.dmft) {
    c.dmft.emplace(init_dmft(make_dmft_problem(cfg_), *c.lam, make_mc_spec(cfg_)));
    c.law = run_dmft(*c.dmft, cfg_.horizon());
  }
}

void Session::stage_fixed_point() {
  stage_spectral();
  auto& c = *cache_;
  if (!c.fp) {
    c.fp = iterate_fixed_point(make_loss(cfg_), make_link(cfg_), make_noise(cfg_), make_signal(cfg_), cfg_.n_over_d(),
                               cfg_.gamma, cfg_.lambda_ridge, make_solver_config(cfg_),
                               fixed_point_init_spectral(c.lam->overlap_a));
  }
}

namespace {

void emit_spectral(const LambdaStarSolution& lam, const SpectralResult& sp, json& j) {
  j = json{{"lambda_star", lam.lambda_star}, {"lambda_bar", lam.lambda_bar}, {"overlap_a", lam.overlap_a},
           {"lam1_lim", lam.lam1_lim},       {"lam2_lim", lam.lam2_lim},     {"lam1_emp", sp.lam1_emp},
           {"lam2_emp", sp.lam2_emp},         {"overlap_emp", sp.overlap_emp}, {"eig_residual", sp.residual},
           {"admissible", lam.admissible}};
}

}  // namespace

int Session::run(const std::vector<std::string>& requested) {
  std::vector<std::string> stages;
  for (const auto& s : stage_names()) {
    const bool wanted = requested.empty()
                            ? (s != "long-time" || cfg_.long_time_m > 0)
                            : std::find(requested.begin(), requested.end(), s) != requested.end();
    if (wanted) stages.push_back(s);
  }
  for (const auto& s : requested)
    if (std::find(stage_names().begin(), stage_names().end(), s) == stage_names().end())
      throw ConfigError("pipeline.stages", "unknown stage '" + s + "'");

  for (const auto& s : stages) {
    if (s == "spectral") {
      stage_spectral();
      json j;
      emit_spectral(*cache_->lam, *cache_->spec, j);
      write_json("spectral.json", j.dump(2));
      record("spectral.overlap_gap", std::abs(cache_->spec->overlap_emp - cache_->lam->overlap_a));
      record("spectral.lam1_rel_gap", std::abs(cache_->spec->lam1_emp - cache_->lam->lam1_lim) / cache_->lam->lam1_lim);
      record("spectral.lam2_rel_gap", std::abs(cache_->spec->lam2_emp - cache_->lam->lam2_lim) / cache_->lam->lam2_lim);
    } else if (s == "simulate") {
      stage_simulate();
      const auto& traj = *cache_->traj;
      const auto sum = summarize(traj, *cache_->inst, make_loss(cfg_));
      if (cfg_.wants("csv")) {
        write_csv(out_ / "trajectory.csv", {"t", "dist", "overlap", "loss"},
                  {iota_vec(traj.horizon() + 1), sum.dist, sum.overlap, sum.loss});
        note_artifact(out_ / "trajectory.csv");
        if (cfg_.hessian_radius > 0.0) {
          const auto h = hessian_report(*cache_->inst, make_loss(cfg_), cfg_.lambda_ridge, traj, cfg_.hessian_radius);
          std::vector<double> region(h.in_region.begin(), h.in_region.end());
          write_csv(out_ / "hessian.csv", {"t", "lam_min", "lam_max", "in_region"},
                    {iota_vec(static_cast<int>(h.lam_min.size())), h.lam_min, h.lam_max, region});
          note_artifact(out_ / "hessian.csv");
        }
        if (cfg_.T_stage > 0) {
          const auto ts = two_stage_dynamic(*cache_->inst, make_preprocess(cfg_), make_loss(cfg_), cfg_.gamma,
                                            cfg_.lambda_ridge, cfg_.T_stage, cfg_.m);
          write_csv(out_ / "two_stage.csv", {"T", "gap"}, {iota_vec(static_cast<int>(ts.gaps.size())), ts.gaps});
          note_artifact(out_ / "two_stage.csv");
        }
      }
    } else if (s == "dmft") {
      stage_dmft();
      const auto& st = *cache_->dmft;
      const int m = cfg_.horizon();
      if (cfg_.wants("csv")) {
        const auto causal = [](auto f) {
          return [f](int t, int s) { return s < t ? f(t, s) : 0.0; };
        };
        write_kernel_csv(out_ / "C_theta.csv", [&](int t, int s) { return st.C_theta(t, s); }, m);
        write_kernel_csv(out_ / "C_eta.csv", [&](int t, int s) { return st.C_eta(t, s); }, m);
        write_kernel_csv(out_ / "R_theta.csv", causal([&](int t, int s) { return st.R_theta(t, s); }), m);
        write_kernel_csv(out_ / "R_eta.csv", causal([&](int t, int s) { return st.R_eta(t, s); }), m);
        std::vector<std::vector<double>> cols(9);
        for (int t = 0; t <= m; ++t) {
          cols[0].push_back(t);
          cols[1].push_back(st.C_theta_star(t));
          cols[2].push_back(st.R_theta_dia(t));
          cols[3].push_back(st.C_eta_dia(t));
          cols[4].push_back(st.R_eta_star(t));
          cols[5].push_back(st.R_eta_dia(t));
          cols[6].push_back(st.R_eta_dd(t));
          cols[7].push_back(st.Gamma(t));
          cols[8].push_back(st.mean_d1(t));
        }
        write_csv(out_ / "dmft_channels.csv",
                  {"t", "C_theta_star", "R_theta_dia", "C_eta_dia", "R_eta_star", "R_eta_dia", "R_eta_dd", "Gamma",
                   "mean_d1ell"},
                  cols);
        for (const char* f : {"C_theta.csv", "C_eta.csv", "R_theta.csv", "R_eta.csv", "dmft_channels.csv"})
          note_artifact(out_ / f);
        if (cfg_.write_samples) {
          std::vector<std::string> tn, en;
          for (int t = 0; t <= m; ++t) {
            tn.push_back("theta" + std::to_string(t));
            en.push_back("eta" + std::to_string(t));
          }
          tn.push_back("theta_star");
          en.push_back("w_star");
          en.push_back("z");
          write_samples_csv(out_ / "dmft_theta_samples.csv", tn, cache_->law->theta_samples);
          write_samples_csv(out_ / "dmft_eta_samples.csv", en, cache_->law->eta_samples);
          note_artifact(out_ / "dmft_theta_samples.csv");
          note_artifact(out_ / "dmft_eta_samples.csv");
        }
      }
      json j{{"K", st.K()},
             {"seed", cfg_.dmft_seed},
             {"horizon", m},
             {"overlap_a", st.a()},
             {"lambda_star", st.lambda_star()},
             {"min_eig_w", st.min_eig_w()},
             {"min_eig_u", st.min_eig_u()},
             {"max_jitter", st.max_jitter()}};
      if (m >= 10 && m - cfg_.max_lag >= 1) {
        const auto tti = tti_diagnostics(st, cfg_.max_lag, -1, -1, std::min(15, m - cfg_.max_lag));
        j["tti"] = json{{"max_lag", tti.max_lag},
                        {"t_lo", tti.t_lo},
                        {"t_hi", tti.t_hi},
                        {"lag_spread", tti.lag_spread},
                        {"decay_rate", tti.decay_rate},
                        {"decay_r2", tti.decay_r2},
                        {"R_theta_sum", tti.R_theta_sum}};
      }
      write_json("dmft_diagnostics.json", j.dump(2));
      record("dmft.negative_eig", std::max(0.0, -std::min(st.min_eig_w(), st.min_eig_u())));
    } else if (s == "compare") {
      stage_simulate();
      stage_dmft();
      const auto rep = compare_empirical_vs_dmft(empirical_joint(*cache_->traj, *cache_->inst), *cache_->law);
      if (cfg_.wants("csv")) {
        write_csv(out_ / "comparison.csv", {"t", "w2_theta", "w2_eta", "overlap_emp", "overlap_dmft"},
                  {iota_vec(rep.horizon() + 1), rep.w2_theta, rep.w2_eta, rep.overlap_emp, rep.overlap_dmft});
        note_artifact(out_ / "comparison.csv");
      }
      const double w2t = *std::max_element(rep.w2_theta.begin(), rep.w2_theta.end());
      const double w2e = *std::max_element(rep.w2_eta.begin(), rep.w2_eta.end());
      write_json("comparison.json", json{{"max_w2_theta", w2t},
                                         {"max_w2_eta", w2e},
                                         {"cov_theta_discrepancy", rep.cov_theta_discrepancy},
                                         {"cov_eta_discrepancy", rep.cov_eta_discrepancy},
                                         {"max_overlap_gap", rep.max_overlap_gap()}}
                                        .dump(2));
      record("compare.max_w2_theta", w2t);
      record("compare.max_w2_eta", w2e);
      record("compare.max_cov_theta", rep.cov_theta_discrepancy);
      record("compare.max_overlap_gap", rep.max_overlap_gap());
    } else if (s == "fixed-point") {
      stage_fixed_point();
      const auto& fp = *cache_->fp;
      const auto res = fixed_point_residuals(fp, make_loss(cfg_));
      json C = json::array({json::array({fp.C_theta_inf(0, 0), fp.C_theta_inf(0, 1)}),
                            json::array({fp.C_theta_inf(1, 0), fp.C_theta_inf(1, 1)})});
      write_json("fixed_point.json", json{{"R_theta_inf", fp.R_theta_inf},
                                          {"R_eta_inf", fp.R_eta_inf},
                                          {"R_eta_star", fp.R_eta_star},
                                          {"Gamma_inf", fp.Gamma_inf},
                                          {"C_eta_inf", fp.C_eta_inf},
                                          {"C_theta_inf", C},
                                          {"residuals", res},
                                          {"iterations", fp.iterations},
                                          {"converged", fp.converged}}
                                         .dump(2));
      double worst = 0.0;
      for (double r : res) worst = std::max(worst, std::abs(r));
      record("fixed_point.max_residual", fp.converged ? worst : std::numeric_limits<double>::infinity());
    } else if (s == "long-time") {
      stage_long_time();
    } else if (s == "amp-check") {
      stage_amp_check();
    }
  }

  json cj = json::array();
  bool ok = true;
  for (const auto& c : checks_) {
    cj.push_back(json{{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"pass", c.pass}});
    ok = ok && c.pass;
  }
  write_json("checks.json", cj.dump(2));
  return ok ? 0 : 1;
}

void Session::stage_long_time() {
  if (cfg_.long_time_m < 1) throw ConfigError("fixedpoint.long_time_m", "must be > 0 for the long-time stage");
  stage_fixed_point();
  auto& c = *cache_;
  GdConfig g{cfg_.gamma, cfg_.lambda_ridge, cfg_.long_time_m, false};
  auto traj = run_gd(*c.inst, make_loss(cfg_), g, c.spec->theta0);
  align_sign(traj, c.inst->theta_star);
  const auto rep = long_time_compare(traj, c.inst->theta_star, *c.fp);
  write_json("long_time.json", json{{"w2_theta", rep.w2_theta},
                                    {"overlap_emp", rep.overlap_emp},
                                    {"overlap_fp", rep.overlap_fp},
                                    {"sq_norm_emp", rep.sq_norm_emp},
                                    {"sq_norm_fp", rep.sq_norm_fp},
                                    {"last_step", rep.last_step}}
                                   .dump(2));
  record("long_time.w2_theta", rep.w2_theta);
}

void Session::stage_amp_check() {
  stage_simulate();
  stage_dmft();
  auto& c = *cache_;
  if (cfg_.horizon() < cfg_.m) throw ConfigError("dmft.horizon", "must be >= algo.m for amp-check");
  const auto table = onsager_from_dmft(*c.dmft, cfg_.m);
  const auto amp = run_spectral_amp(*c.inst, make_link(cfg_), make_preprocess(cfg_), c.lam->lambda_star,
                                    c.spec->theta0, table, make_loss(cfg_), cfg_.gamma, cfg_.lambda_ridge, cfg_.m);
  const auto err = verify_equivalence(amp, *c.traj);
  const auto se = se_check(amp, *c.dmft);
  json entries = json::array();
  for (const auto& e : se.entries)
    entries.push_back(json{{"name", e.name}, {"amp", e.amp}, {"dmft", e.dmft}, {"diff", e.diff()}});
  write_json("amp_check.json", json{{"equiv_error_theta", err.theta},
                                    {"equiv_error_eta", err.eta},
                                    {"se_report", json{{"max_diff", se.max_diff}, {"entries", entries}}}}
                                   .dump(2));
  record("amp.max_equiv_error", err.max());
}

int run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                 const std::vector<std::string>& stages) {
  Session session(cfg, out_dir);
  return session.run(stages.empty() ? cfg.stages : stages);
}

}  // namespace dmftsim
