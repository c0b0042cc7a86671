#pragma once

#include "dmftsim/amp.hpp"
#include "dmftsim/config.hpp"
#include "dmftsim/metrics.hpp"

#include <filesystem>
#include <memory>

namespace dmftsim {

/// 17 significant digits, the format used in every CSV artifact.
std::string format_real(double x);

/// Columns of equal length written under `header`.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& columns);

/// Dense (m+1) x (m+1) matrix with header row "t\s"; rows are t, columns s.
void write_kernel_csv(const std::filesystem::path& path, const std::function<double(int, int)>& entry, int m);

/// Sample matrix with one column per name.
void write_samples_csv(const std::filesystem::path& path, const std::vector<std::string>& names, const MatrixXd& samples);

struct CheckResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

/// Runs pipeline stages against one config, caching shared intermediates
/// (instance, spectral estimate, GD trajectory, DMFT state, fixed point).
class Session {
 public:
  Session(ExperimentConfig cfg, std::filesystem::path out_dir);
  ~Session();

  /// Runs the stages in dependency order; an empty list means every stage
  /// (long-time only when fixedpoint.long_time_m > 0). Returns 0 when every
  /// configured check passes, 1 otherwise. Writes checks.json.
  int run(const std::vector<std::string>& stages);

  const std::vector<CheckResult>& checks() const { return checks_; }
  const std::vector<std::string>& artifacts() const { return artifacts_; }

  void stage_spectral();
  void stage_simulate();
  void stage_dmft();
  void stage_compare();
  void stage_fixed_point();
  void stage_long_time();
  void stage_amp_check();

 private:
  struct Cache;

  void record(const std::string& name, double value);
  void note_artifact(const std::filesystem::path& p);
  void write_json(const std::string& file, const std::string& text);

  ExperimentConfig cfg_;
  std::filesystem::path out_;
  std::unique_ptr<Cache> cache_;
  std::vector<CheckResult> checks_;
  std::vector<std::string> artifacts_;
};

/// Entry used by the CLI: loads nothing, just dispatches. Exit codes:
/// 0 success, 1 a configured check failed.
int run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                 const std::vector<std::string>& stages = {});

}  // namespace dmftsim
