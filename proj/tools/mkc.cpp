// mkc: atlas construction, nested Gaussian sampling and continuity verification runs.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mkc/errors.hpp"
#include "mkc/parallel.hpp"
#include "mkc/pipeline.hpp"

namespace {

std::pair<int, int> parse_levels(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw mkc::InvalidInput("--levels expects k0:k1");
  try {
    return {std::stoi(s.substr(0, colon)), std::stoi(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw mkc::InvalidInput("--levels expects k0:k1");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chart atlases, dyadic grids and Kolmogorov-Chentsov checks for Gaussian fields on manifolds"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> levels;
  unsigned threads = 1;

  for (const auto& [name, help] : {std::pair{"atlas", "build the chart atlas and check it"},
                                   std::pair{"sample", "sample the field on the nested grids"},
                                   std::pair{"verify", "run tail, Hoelder and moment checks on the samples"},
                                   std::pair{"report", "print the tables of a finished run"}}) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "run configuration (JSON)")->required();
    sub->add_option("--out", out, "output directory (overrides the config)");
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--levels", levels, "grid levels k0:k1 (overrides the config)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : mkc::kExitUsage;
  }
  const std::string verb = app.get_subcommands().front()->get_name();

  mkc::RunConfig cfg;
  try {
    cfg = mkc::load_config(config_path);
    if (out) cfg.out = *out;
    if (seed) cfg.seed = *seed;
    if (levels) std::tie(cfg.k0, cfg.k1) = parse_levels(*levels);
    cfg.validate();
  } catch (const mkc::ModelRejection& e) {
    std::cerr << "model rejected: " << e.what() << " (smallest eigenvalue " << e.smallest_eigenvalue() << ")\n";
    return mkc::kExitModelRejected;
  } catch (const mkc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mkc::kExitUsage;
  }
  mkc::set_default_threads(threads);
  return mkc::run_command(verb, cfg, std::cout, std::cerr);
}
