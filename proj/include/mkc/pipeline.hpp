#pragma once

// Configuration-driven runs: atlas construction, nested sampling and verification,
// each writing its artifacts under the run's output directory.
//
// Config (JSON, schema "mkc-config/1"); every key except "manifold" is optional:
//   { "schema": "mkc-config/1",
//     "manifold": {"kind": "sphere", "dim": 2},
//     "atlas": {"n_charts", "chart", "cover_test_points", "sandwich_pairs",
//               "separability_k_max", "summability_k_max"},
//     "levels": [k0, k1],
//     "model": {"family", "C", "eta", "nugget"},
//     "rates": {"variant", "rho", "alpha", "beta", "gamma", "K", "K_gamma"},
//     "replicates", "seed", "bins", "confidence", "moment_orders": [...], "out" }

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mkc/atlas.hpp"
#include "mkc/fields.hpp"
#include "mkc/rates.hpp"

namespace mkc {

inline constexpr const char* kConfigSchema = "mkc-config/1";

enum ExitCode : int { kExitPass = 0, kExitUsage = 1, kExitCheckFailed = 2, kExitModelRejected = 3 };

struct AtlasSettings {
  int n_charts = 1;
  int chart = 0;  // chart whose grids are sampled and verified
  std::size_t cover_test_points = 10000;
  std::size_t sandwich_pairs = 2000;
  int separability_k_max = 5;
  int summability_k_max = 30;
};

struct RunConfig {
  Manifold manifold = Manifold::sphere(2);
  AtlasSettings atlas;
  int k0 = 1;
  int k1 = 4;
  CovarianceModel model;
  RateFunctions rates;  // rates.m always equals the manifold dimension
  std::size_t replicates = 200;
  std::uint64_t seed = 1;
  int bins = 12;
  double confidence = 0.95;
  std::vector<double> moment_orders{2.0, 4.0};
  std::filesystem::path out = "mkc-run";

  /// Re-checks every parameter range; throws InvalidInput or ModelRejection.
  void validate() const;
};

RunConfig config_from_json(const nlohmann::json& j);
/// Full config including defaults, so that manifests are self-describing.
nlohmann::json to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);

/// Seed of the level-k draw of a run.
std::uint64_t level_seed(std::uint64_t seed, int k);

/// Each command writes under cfg.out, prints a short summary to `log` and returns an
/// ExitCode. Library errors propagate; run_command maps them to exit codes.
int cmd_atlas(const RunConfig& cfg, std::ostream& log);
int cmd_sample(const RunConfig& cfg, std::ostream& log);
int cmd_verify(const RunConfig& cfg, std::ostream& log);
int cmd_report(const RunConfig& cfg, std::ostream& log);

/// Dispatches a verb and converts exceptions to exit codes, reporting them on `err`.
int run_command(const std::string& verb, const RunConfig& cfg, std::ostream& log, std::ostream& err);

}  // namespace mkc
