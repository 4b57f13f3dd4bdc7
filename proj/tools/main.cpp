#include "safehc/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

namespace {

int seed_fixtures(const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [name, body] : safehc::fixture_files()) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    out << body;
    if (!out) {
      std::cerr << "cannot write " << (dir / name).string() << "\n";
      return 1;
    }
    std::cout << (dir / name).string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Viscoelastic guided-wave dispersion curves by material homotopy"};
  std::string config, stage = "all", fixtures_dir = "fixtures";
  int jobs = 0;
  auto* cfg_opt = app.add_option("--config", config, "pipeline configuration (JSON)");
  app.add_option("--stage", stage, "stage to run")
      ->check(CLI::IsMember({"sweep", "filter", "transport", "post", "diagnose", "verify", "all"}));
  app.add_option("--jobs", jobs, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
  auto* seed = app.add_option("--seed-fixtures", fixtures_dir, "write the fixture configurations to DIR")
                   ->expected(0, 1);
  CLI11_PARSE(app, argc, argv);

  if (seed->count() > 0) return seed_fixtures(fixtures_dir);
  if (cfg_opt->count() == 0) {
    std::cerr << "--config is required (or --seed-fixtures)\n";
    return 2;
  }
  try {
    safehc::PipelineConfig cfg = safehc::load_config(config);
    if (jobs > 0) cfg.jobs = cfg.sweep.jobs = jobs;
    safehc::Pipeline pipeline(std::move(cfg));
    const int status = pipeline.run(safehc::stage_from_name(stage), std::cout);
    if (status == 3) std::cerr << "warning: some continuation paths did not converge\n";
    if (status == 4) std::cerr << "verify: at least one check failed\n";
    return status;
  } catch (const safehc::ConfigError& e) {
    std::cerr << "config error in field '" << e.field << "': " << e.what() << "\n";
    return 2;
  } catch (const safehc::StageError& e) {
    std::cerr << "stage '" << e.stage << "' failed: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
