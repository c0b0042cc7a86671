#include "dmftsim/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"dmftsim: gradient descent, DMFT and fixed-point experiments for single index models"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"spectral", "spectral estimator vs its asymptotic prediction"},
      {"simulate", "gradient descent from the spectral initialization"},
      {"dmft", "Monte Carlo DMFT kernels and sample pools"},
      {"fixed-point", "long-time fixed point of the DMFT system"},
      {"amp-check", "AMP reproduction of gradient descent and state evolution"},
      {"compare", "simulation vs DMFT law"},
      {"pipeline", "every stage listed in [pipeline] stages (all by default)"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "experiment config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (default: outputs.directory)");
    sub->add_option("--seed", seed, "overrides model.seed");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    auto cfg = dmftsim::load_config(config_path);
    if (seed) cfg.seed = *seed;
    const std::filesystem::path out = out_dir.empty() ? std::filesystem::path(cfg.directory) : std::filesystem::path(out_dir);
    std::vector<std::string> stages;
    if (cmd != "pipeline") stages = {cmd};
    dmftsim::Session session(cfg, out);
    const int rc = session.run(stages.empty() ? cfg.stages : stages);
    for (const auto& c : session.checks())
      std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " = " << dmftsim::format_real(c.value)
                << " (threshold " << dmftsim::format_real(c.threshold) << ")\n";
    for (const auto& a : session.artifacts()) std::cout << "wrote " << (out / a).string() << '\n';
    return rc;
  } catch (const dmftsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
