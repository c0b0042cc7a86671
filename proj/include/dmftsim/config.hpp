#pragma once

#include "dmftsim/dmft.hpp"
#include "dmftsim/fixed_point.hpp"
#include "dmftsim/model.hpp"

#include <filesystem>
#include <map>

namespace dmftsim {

/// Validation failure; the message starts with the offending field path.
class ConfigError : public InvalidArgument {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : InvalidArgument(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct ExperimentConfig {
  // [model]
  int n = 0;
  int d = 0;
  std::optional<double> delta;
  std::string link = "phase";
  std::string noise = "none";
  double noise_sd = 0.0;
  std::string signal = "gaussian";
  std::uint64_t seed = 1;

  // [loss]
  std::string loss = "rwf";
  double L_cut = 5.0;
  double U_cut = 10.0;
  double scale = 1.0;
  std::string preprocess = "phase-clip";
  double M_clip = 3.0;

  // [algo]
  double gamma = 0.01;
  double lambda_ridge = 0.0;
  int m = 10;
  int T_stage = 0;           // > 0 adds the power-iteration stage to `simulate`
  double hessian_radius = 0.0;  // > 0 adds Hessian extremes along the trajectory

  // [dmft]
  int dmft_K = 100000;
  std::uint64_t dmft_seed = 7;
  double jitter = 1e-10;
  int dmft_horizon = -1;  // -1: use algo.m
  int max_lag = 5;

  // [fixedpoint]
  int fp_K = 100000;
  double damping = 0.5;
  double tol = 1e-8;
  int max_outer = 200;
  std::uint64_t fp_seed = 11;
  int long_time_m = 0;  // GD horizon for the long-time comparison; 0 disables it

  // [outputs]
  std::string directory = ".";
  std::vector<std::string> formats = {"csv", "json"};
  bool write_samples = false;

  // [pipeline]
  std::vector<std::string> stages;  // empty: every stage

  // [checks] acceptance thresholds, keyed by check name
  std::map<std::string, double> checks;

  double n_over_d() const { return static_cast<double>(n) / static_cast<double>(d); }
  int horizon() const { return dmft_horizon >= 0 ? dmft_horizon : m; }
  bool wants(const std::string& format) const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Registry lookups; unknown names raise ConfigError on the given field.
LossModel make_loss(const ExperimentConfig& cfg);
LinkFunction make_link(const ExperimentConfig& cfg);
ScalarDist make_noise(const ExperimentConfig& cfg);
ScalarDist make_signal(const ExperimentConfig& cfg);
PreProcess make_preprocess(const ExperimentConfig& cfg);

const std::vector<std::string>& loss_names();
const std::vector<std::string>& preprocess_names();
const std::vector<std::string>& stage_names();
const std::vector<std::string>& check_names();

DmftProblem make_dmft_problem(const ExperimentConfig& cfg);
MonteCarloSpec make_mc_spec(const ExperimentConfig& cfg);
SolverConfig make_solver_config(const ExperimentConfig& cfg);

}  // namespace dmftsim
