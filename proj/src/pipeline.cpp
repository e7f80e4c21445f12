#include "mkc/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "mkc/errors.hpp"
#include "mkc/io.hpp"
#include "mkc/kc_verify.hpp"
#include "mkc/parallel.hpp"
#include "mkc/rng.hpp"

namespace mkc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw InvalidInput(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw InvalidInput(where + ": unknown key '" + key + "'");
  }
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

json point_json(const Point& p) { return std::vector<double>(p.coords.data(), p.coords.data() + p.coords.size()); }

fs::path sample_path(const RunConfig& cfg, int k, const char* ext) {
  return cfg.out / "samples" / ("level_" + std::to_string(k) + ext);
}

const Chart& selected_chart(const RunConfig& cfg, const Atlas& atlas) {
  if (cfg.atlas.chart < 0 || cfg.atlas.chart >= static_cast<int>(atlas.charts.size())) {
    throw InvalidInput("config: atlas.chart out of range");
  }
  if (!(atlas.manifold == cfg.manifold)) throw InvalidInput("atlas file was built for a different manifold");
  return atlas.charts[static_cast<std::size_t>(cfg.atlas.chart)];
}

Atlas load_run_atlas(const RunConfig& cfg) { return io::load_atlas(cfg.out / "atlas.json"); }

std::optional<Point> pinning_point(const RunConfig& cfg, const DyadicGrid& coarse) {
  if (cfg.model.family != CovarianceFamily::PoweredExponentialVariogram) return std::nullopt;
  return coarse.point(0);
}

std::vector<LevelSample> load_levels(const RunConfig& cfg, const Chart& chart) {
  std::vector<LevelSample> levels;
  const DyadicGrid coarse = dyadic_grid(chart, cfg.k0);
  const auto reference = pinning_point(cfg, coarse);
  for (int k = cfg.k0; k <= cfg.k1; ++k) {
    DyadicGrid g = dyadic_grid(chart, k);
    FieldSample s;
    s.values = io::parse_sample_binary(io::read_file(sample_path(cfg, k, ".mkc")));
    if (static_cast<std::size_t>(s.values.cols()) != g.size()) {
      throw InvalidInput("sample file for level " + std::to_string(k) + " does not match its grid");
    }
    s.points = g.points();
    s.seed = level_seed(cfg.seed, k);
    s.model = cfg.model;
    s.reference = reference;
    levels.push_back({std::move(g), std::move(s)});
  }
  validate_levels(levels);
  return levels;
}

std::string timestamp_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_json(const fs::path& path, const json& j) { io::write_atomic(path, j.dump(2) + "\n"); }

// Tail checks are quadratic in the number of points; verify on the finest level that
// stays under this size.
constexpr std::size_t kTailMaxPoints = 1500;

}  // namespace

void RunConfig::validate() const {
  if (atlas.n_charts < 1) throw InvalidInput("config: atlas.n_charts must be >= 1");
  if (atlas.chart < 0 || atlas.chart >= atlas.n_charts) throw InvalidInput("config: atlas.chart out of range");
  if (atlas.separability_k_max < 1 || atlas.summability_k_max < 1) {
    throw InvalidInput("config: atlas k_max values must be >= 1");
  }
  if (k0 < 0 || k1 < k0) throw InvalidInput("config: levels must satisfy 0 <= k0 <= k1");
  if (k1 > max_grid_level(manifold.dim())) throw ResourceError("config: finest level exceeds the grid size cap");
  if (replicates < 1) throw InvalidInput("config: replicates must be >= 1");
  if (bins < 1) throw InvalidInput("config: bins must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) throw InvalidInput("config: confidence must lie in (0,1)");
  for (double l : moment_orders) {
    if (!(l >= 1.0)) throw InvalidInput("config: moment orders must be >= 1");
  }
  if (rates.m != manifold.dim()) throw InvalidInput("config: rates.m must equal the manifold dimension");
  rates.validate();
  model.validate();
}

RunConfig config_from_json(const json& j) {
  reject_unknown(j, {"schema", "manifold", "atlas", "levels", "model", "rates", "replicates", "seed", "bins",
                     "confidence", "moment_orders", "out"},
                 "config");
  if (j.contains("schema") && j.at("schema") != kConfigSchema) {
    throw InvalidInput("config: unsupported schema " + j.at("schema").dump());
  }
  RunConfig cfg;
  if (!j.contains("manifold")) throw InvalidInput("config: missing 'manifold'");
  cfg.manifold = io::manifold_from_json(j.at("manifold"));

  if (j.contains("atlas")) {
    const json& a = j.at("atlas");
    reject_unknown(a, {"n_charts", "chart", "cover_test_points", "sandwich_pairs", "separability_k_max",
                       "summability_k_max"},
                   "config.atlas");
    read_opt(a, "n_charts", cfg.atlas.n_charts);
    read_opt(a, "chart", cfg.atlas.chart);
    read_opt(a, "cover_test_points", cfg.atlas.cover_test_points);
    read_opt(a, "sandwich_pairs", cfg.atlas.sandwich_pairs);
    read_opt(a, "separability_k_max", cfg.atlas.separability_k_max);
    read_opt(a, "summability_k_max", cfg.atlas.summability_k_max);
  }
  if (j.contains("levels")) {
    const json& l = j.at("levels");
    if (!l.is_array() || l.size() != 2) throw InvalidInput("config: levels must be [k0, k1]");
    cfg.k0 = l.at(0).get<int>();
    cfg.k1 = l.at(1).get<int>();
  }
  if (j.contains("model")) {
    const json& mj = j.at("model");
    reject_unknown(mj, {"family", "C", "eta", "nugget"}, "config.model");
    std::string family = to_string(cfg.model.family);
    read_opt(mj, "family", family);
    cfg.model.family = covariance_family_from_string(family);
    read_opt(mj, "C", cfg.model.C);
    read_opt(mj, "eta", cfg.model.eta);
    read_opt(mj, "nugget", cfg.model.nugget);
  }
  if (j.contains("rates")) {
    const json& rj = j.at("rates");
    reject_unknown(rj, {"variant", "rho", "alpha", "beta", "gamma", "K", "K_gamma"}, "config.rates");
    std::string variant = to_string(cfg.rates.variant);
    read_opt(rj, "variant", variant);
    cfg.rates.variant = rate_variant_from_string(variant);
    read_opt(rj, "rho", cfg.rates.rho);
    read_opt(rj, "alpha", cfg.rates.alpha);
    read_opt(rj, "beta", cfg.rates.beta);
    read_opt(rj, "gamma", cfg.rates.gamma);
    read_opt(rj, "K", cfg.rates.K);
    read_opt(rj, "K_gamma", cfg.rates.K_gamma);
  }
  cfg.rates.m = cfg.manifold.dim();
  read_opt(j, "replicates", cfg.replicates);
  read_opt(j, "seed", cfg.seed);
  read_opt(j, "bins", cfg.bins);
  read_opt(j, "confidence", cfg.confidence);
  read_opt(j, "moment_orders", cfg.moment_orders);
  if (j.contains("out")) cfg.out = j.at("out").get<std::string>();
  cfg.validate();
  return cfg;
}

json to_json(const RunConfig& cfg) {
  return json{
      {"schema", kConfigSchema},
      {"manifold", io::to_json(cfg.manifold)},
      {"atlas",
       {{"n_charts", cfg.atlas.n_charts},
        {"chart", cfg.atlas.chart},
        {"cover_test_points", cfg.atlas.cover_test_points},
        {"sandwich_pairs", cfg.atlas.sandwich_pairs},
        {"separability_k_max", cfg.atlas.separability_k_max},
        {"summability_k_max", cfg.atlas.summability_k_max}}},
      {"levels", {cfg.k0, cfg.k1}},
      {"model",
       {{"family", to_string(cfg.model.family)},
        {"C", cfg.model.C},
        {"eta", cfg.model.eta},
        {"nugget", cfg.model.nugget}}},
      {"rates",
       {{"variant", to_string(cfg.rates.variant)},
        {"rho", cfg.rates.rho},
        {"alpha", cfg.rates.alpha},
        {"beta", cfg.rates.beta},
        {"gamma", cfg.rates.gamma},
        {"K", cfg.rates.K},
        {"K_gamma", cfg.rates.K_gamma}}},
      {"replicates", cfg.replicates},
      {"seed", cfg.seed},
      {"bins", cfg.bins},
      {"confidence", cfg.confidence},
      {"moment_orders", cfg.moment_orders},
      {"out", cfg.out.string()},
  };
}

RunConfig load_config(const fs::path& path) {
  const std::string text = io::read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput("config: " + std::string(e.what()));
  }
  return config_from_json(j);
}

std::uint64_t level_seed(std::uint64_t seed, int k) { return mix64(seed ^ mix64(static_cast<std::uint64_t>(k))); }

int cmd_atlas(const RunConfig& cfg, std::ostream& log) {
  const Atlas atlas = cover_build(cfg.manifold, cfg.atlas.n_charts, cfg.seed);
  fs::create_directories(cfg.out / "reports");
  io::save_atlas(cfg.out / "atlas.json", atlas);

  const CoverReport cover = cover_check(atlas, cfg.atlas.cover_test_points, mix64(cfg.seed + 1));
  json uncovered = json::array();
  for (const Point& p : cover.uncovered) uncovered.push_back(point_json(p));

  bool sandwich_ok = true;
  json charts = json::array();
  for (const Chart& c : atlas.charts) {
    const auto seed = mix64(cfg.seed ^ mix64(1000 + static_cast<std::uint64_t>(c.index)));
    const SandwichReport s = sandwich_check(c, cfg.atlas.sandwich_pairs, seed);
    const DistortionReport d = distortion_check(cfg.manifold, c.center, c.radius, cfg.atlas.sandwich_pairs, seed);
    sandwich_ok = sandwich_ok && s.passed && d.passed;
    charts.push_back({{"index", c.index}, {"radius", c.radius}, {"sandwich", io::to_json(s)}, {"distortion", io::to_json(d)}});
  }

  const Chart& chart = selected_chart(cfg, atlas);
  const SeparabilityReport sep = separability_check(chart, cfg.atlas.separability_k_max);
  const SummabilityReport sum = summability_report(chart, cfg.rates, cfg.atlas.summability_k_max);

  const bool passed = cover.passed() && sandwich_ok && sep.passed && sum.passed();
  const json report{
      {"passed", passed},
      {"cover", {{"tested", cover.tested}, {"uncovered_count", cover.uncovered.size()}, {"uncovered", uncovered}}},
      {"charts", charts},
      {"selected_chart", chart.index},
      {"separability", io::to_json(sep)},
      {"summability", io::to_json(sum)},
  };
  write_json(cfg.out / "reports" / "atlas_report.json", report);

  log << "atlas: " << atlas.charts.size() << " charts, R = " << chart.radius << "\n";
  log << "  cover:        " << (cover.passed() ? "pass" : "FAIL") << " (" << cover.uncovered.size() << " of "
      << cover.tested << " test points uncovered)\n";
  for (std::size_t i = 0; i < cover.uncovered.size() && i < 10; ++i) {
    log << "    uncovered: " << point_json(cover.uncovered[i]).dump() << "\n";
  }
  log << "  sandwich:     " << (sandwich_ok ? "pass" : "FAIL") << "\n";
  log << "  separability: " << (sep.passed ? "pass" : "FAIL") << " (k < " << sep.k_max << ")\n";
  log << "  summability:  " << (sum.passed() ? "pass" : "FAIL") << "\n";
  return passed ? kExitPass : kExitCheckFailed;
}

int cmd_sample(const RunConfig& cfg, std::ostream& log) {
  const Atlas atlas = load_run_atlas(cfg);
  const Chart& chart = selected_chart(cfg, atlas);
  fs::create_directories(cfg.out / "samples");
  fs::create_directories(cfg.out / "grids");

  json files = json::array();
  json seeds = json::object();
  auto emit = [&](const fs::path& path, const std::string& bytes) {
    io::write_atomic(path, bytes);
    files.push_back({{"path", fs::relative(path, cfg.out).generic_string()}, {"sha256", io::sha256_hex(bytes)}});
  };

  std::optional<FieldSample> previous;
  for (int k = cfg.k0; k <= cfg.k1; ++k) {
    const DyadicGrid g = dyadic_grid(chart, k);
    const std::uint64_t seed = level_seed(cfg.seed, k);
    seeds[std::to_string(k)] = seed;
    FieldSample s = previous ? conditional_refine(*previous, g.points(), cfg.manifold, seed)
                             : sample_gaussian(cfg.model, g.points(), cfg.manifold, cfg.replicates, seed,
                                               pinning_point(cfg, g));
    emit(cfg.out / "grids" / ("level_" + std::to_string(k) + ".csv"), io::grid_csv(g));
    emit(sample_path(cfg, k, ".mkc"), io::sample_binary(s.values));
    emit(sample_path(cfg, k, ".csv"), io::sample_csv(s.values));
    log << "sample: level " << k << ", " << g.size() << " points x " << s.replicates() << " replicates\n";
    previous = std::move(s);
  }

  const json manifest{{"config", to_json(cfg)}, {"seeds", seeds}, {"files", files}, {"created_at", timestamp_utc()}};
  write_json(cfg.out / "manifest.json", manifest);
  return kExitPass;
}

int cmd_verify(const RunConfig& cfg, std::ostream& log) {
  const Atlas atlas = load_run_atlas(cfg);
  const Chart& chart = selected_chart(cfg, atlas);
  const std::vector<LevelSample> levels = load_levels(cfg, chart);
  fs::create_directories(cfg.out / "reports");
  const fs::path rep = cfg.out / "reports";

  std::size_t tail_level = 0;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i].grid.size() <= kTailMaxPoints) tail_level = i;
  }
  const FieldSample& tail_sample = levels[tail_level].sample;
  const TailReport tail = tail_check(tail_sample, cfg.manifold, cfg.rates, cfg.bins, cfg.confidence);

  std::vector<double> h_grid;
  for (int e = 1; e <= 20; ++e) {
    const double h = std::ldexp(1.0, -e);
    if (h < cfg.rates.rho) h_grid.push_back(h);
  }
  const auto predicate = gaussian_tail_predicate(cfg.model, cfg.rates, h_grid);
  bool predicate_ok = true;
  for (const auto& row : predicate) predicate_ok = predicate_ok && row.holds;

  const SummabilityReport sum = summability_report(chart, cfg.rates, cfg.atlas.summability_k_max);

  const HolderConstants hc = chart_holder_constants(chart, cfg.rates.gamma, cfg.rates.K_gamma);
  const double alpha_gamma = holder_constant(hc);

  std::optional<HolderEstimate> holder;
  std::vector<std::string> warnings;
  if (levels.size() >= 3) {
    holder = holder_estimate(levels);
    if (holder->gamma_hat < cfg.rates.gamma) {
      std::ostringstream w;
      w << "Hoelder consistency: estimated exponent " << holder->gamma_hat << " is below the requested gamma "
        << cfg.rates.gamma;
      warnings.push_back(w.str());
    }
  } else {
    throw InsufficientData("verify: the Hoelder estimate needs at least 3 levels (k1 - k0 >= 2)");
  }

  const FieldSample& finest = levels[tail_level].sample;
  const auto variogram = variogram_empirical(finest, cfg.manifold, cfg.bins);
  io::write_atomic(rep / "variogram.csv", io::binned_csv(variogram, "variogram"));
  json moments = json::object();
  for (double l : cfg.moment_orders) {
    const auto table = moment_estimate(finest, cfg.manifold, l, cfg.bins);
    std::ostringstream name;
    name << l;
    io::write_atomic(rep / ("moment_l" + name.str() + ".csv"), io::binned_csv(table, "moment"));
    moments[name.str()] = io::to_json(table);
  }
  io::write_atomic(rep / "tail.csv", io::tail_csv(tail));

  const bool passed = tail.passed() && predicate_ok && sum.passed();
  const json report{
      {"passed", passed},
      {"tail", io::to_json(tail)},
      {"tail_level", levels[tail_level].grid.level()},
      {"tail_predicate", {{"passed", predicate_ok}, {"rows", io::to_json(predicate)}}},
      {"summability", io::to_json(sum)},
      {"holder", io::to_json(*holder)},
      {"holder_constant",
       {{"eta_n", hc.eta_n}, {"C_n", hc.C_n}, {"gamma", hc.gamma}, {"K_gamma", hc.K_gamma}, {"alpha", alpha_gamma}}},
      {"variogram", io::to_json(variogram)},
      {"moments", moments},
      {"warnings", warnings},
  };
  write_json(rep / "verify.json", report);

  std::size_t tail_failed = 0;
  for (const auto& b : tail.bins) tail_failed += b.pass ? 0 : 1;
  log << "verify: levels " << cfg.k0 << ".." << cfg.k1 << ", " << finest.replicates() << " replicates\n";
  log << "  tail check (level " << levels[tail_level].grid.level() << "): " << (tail.passed() ? "pass" : "FAIL")
      << " (" << tail_failed << " of " << tail.bins.size() << " bins failed)\n";
  log << "  tail predicate:  " << (predicate_ok ? "pass" : "FAIL") << "\n";
  log << "  summability:     " << (sum.passed() ? "pass" : "FAIL") << "\n";
  log << "  gamma_hat:       " << holder->gamma_hat << " +- " << holder->std_error
      << " (log-corrected diagnostic " << holder->gamma_hat_log_corrected << ")\n";
  log << "  alpha_gamma:     " << alpha_gamma << "\n";
  for (const auto& w : warnings) log << "  warning: " << w << "\n";
  return passed ? kExitPass : kExitCheckFailed;
}

int cmd_report(const RunConfig& cfg, std::ostream& log) {
  const fs::path rep = cfg.out / "reports";
  bool any = false;
  bool passed = true;
  if (fs::exists(rep / "atlas_report.json")) {
    any = true;
    const json a = json::parse(io::read_file(rep / "atlas_report.json"));
    passed = passed && a.at("passed").get<bool>();
    log << "atlas report\n";
    log << "  cover: " << a.at("cover").at("uncovered_count") << " of " << a.at("cover").at("tested")
        << " uncovered\n";
    log << "  chart  radius        sandwich  distortion[min,max]\n";
    for (const auto& c : a.at("charts")) {
      log << "  " << std::setw(5) << c.at("index").get<int>() << "  " << std::setw(12) << c.at("radius").get<double>()
          << "  " << std::setw(8) << (c.at("sandwich").at("passed").get<bool>() ? "pass" : "FAIL") << "  ["
          << c.at("distortion").at("min_ratio").get<double>() << ", "
          << c.at("distortion").at("max_ratio").get<double>() << "]\n";
    }
    log << "  separability: " << (a.at("separability").at("passed").get<bool>() ? "pass" : "FAIL") << "\n";
  }
  if (fs::exists(rep / "verify.json")) {
    any = true;
    const json v = json::parse(io::read_file(rep / "verify.json"));
    passed = passed && v.at("passed").get<bool>();
    log << "tail report\n";
    log << "        h_lo         h_hi       freq      ci_hi      bound  pass\n";
    for (const auto& b : v.at("tail").at("bins")) {
      log << std::setw(12) << b.at("h_lo").get<double>() << " " << std::setw(12) << b.at("h_hi").get<double>() << " "
          << std::setw(10) << b.at("freq").get<double>() << " " << std::setw(10) << b.at("ci_hi").get<double>() << " "
          << std::setw(10) << b.at("bound").get<double>() << "  " << (b.at("pass").get<bool>() ? "yes" : "NO") << "\n";
    }
    log << "Hoelder levels\n";
    log << "   k        delta    median max |dphi|\n";
    for (const auto& l : v.at("holder").at("levels")) {
      log << std::setw(4) << l.at("k").get<int>() << " " << std::setw(12) << l.at("delta").get<double>() << " "
          << std::setw(20) << l.at("median_max_increment").get<double>() << "\n";
    }
    log << "gamma_hat = " << v.at("holder").at("gamma_hat").get<double>() << ", alpha_gamma = "
        << v.at("holder_constant").at("alpha").get<double>() << "\n";
    for (const auto& w : v.at("warnings")) log << "warning: " << w.get<std::string>() << "\n";
  }
  if (!any) throw InvalidInput("report: no reports found under " + rep.string());
  log << (passed ? "overall: pass\n" : "overall: FAIL\n");
  return passed ? kExitPass : kExitCheckFailed;
}

int run_command(const std::string& verb, const RunConfig& cfg, std::ostream& log, std::ostream& err) {
  try {
    if (verb == "atlas") return cmd_atlas(cfg, log);
    if (verb == "sample") return cmd_sample(cfg, log);
    if (verb == "verify") return cmd_verify(cfg, log);
    if (verb == "report") return cmd_report(cfg, log);
    err << "error: unknown command '" << verb << "'\n";
    return kExitUsage;
  } catch (const ModelRejection& e) {
    err << "model rejected: " << e.what() << " (smallest eigenvalue " << e.smallest_eigenvalue() << ")\n";
    return kExitModelRejected;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const json::exception& e) {
    err << "error: malformed JSON: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace mkc
