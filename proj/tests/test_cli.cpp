#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "mkc/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string output;
};

const fs::path& root() {
  static const fs::path p = [] {
    fs::path d = fs::temp_directory_path() / "mkc_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

Run run_cli(const std::string& args) {
  const std::string cmd = std::string(MKC_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, pipe)) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path write_config(const std::string& name, json cfg) {
  cfg["out"] = (root() / name).string();
  const fs::path p = root() / (name + ".json");
  std::ofstream(p) << cfg.dump(2);
  return p;
}

json sphere_config() {
  return json{{"schema", "mkc-config/1"},
              {"manifold", {{"kind", "sphere"}, {"dim", 2}}},
              {"atlas", {{"n_charts", 120}, {"cover_test_points", 3000}, {"separability_k_max", 4}}},
              {"levels", {1, 3}},
              {"model", {{"C", 1.0}, {"eta", 1.0}}},
              {"rates", {{"variant", "power"}, {"gamma", 0.3}, {"K", 50000.0}}},
              {"replicates", 200},
              {"seed", 5}};
}

std::string slurp(const fs::path& p) { return mkc::io::read_file(p); }

}  // namespace

TEST_CASE("box atlas passes with unit distortion") {
  const auto cfg = write_config(
      "box", json{{"manifold", {{"kind", "box"}, {"lower", {0.0, 0.0}}, {"upper", {1.0, 1.0}}}},
                  {"atlas", {{"n_charts", 40}}}});
  const Run r = run_cli("atlas --config " + cfg.string());
  CHECK(r.code == 0);
  const json rep = json::parse(slurp(root() / "box" / "reports" / "atlas_report.json"));
  CHECK(rep.at("passed") == true);
  for (const auto& c : rep.at("charts")) {
    CHECK(c.at("distortion").at("min_ratio").get<double>() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.at("distortion").at("max_ratio").get<double>() == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(fs::exists(root() / "box" / "atlas.json"));
}

TEST_CASE("two charts cannot cover the sphere") {
  json j = sphere_config();
  j["atlas"]["n_charts"] = 2;
  const Run r = run_cli("atlas --config " + write_config("two", j).string());
  CHECK(r.code == 2);
  CHECK(r.output.find("uncovered:") != std::string::npos);
  const json rep = json::parse(slurp(root() / "two" / "reports" / "atlas_report.json"));
  CHECK(rep.at("cover").at("uncovered").size() > 0);
}

TEST_CASE("full run: atlas, sample, verify, report") {
  const auto cfg = write_config("run", sphere_config()).string();
  REQUIRE(run_cli("atlas --config " + cfg).code == 0);
  REQUIRE(run_cli("sample --config " + cfg).code == 0);
  const fs::path out = root() / "run";
  for (int k = 1; k <= 3; ++k) {
    CHECK(fs::exists(out / "samples" / ("level_" + std::to_string(k) + ".mkc")));
    CHECK(fs::exists(out / "samples" / ("level_" + std::to_string(k) + ".csv")));
    CHECK(fs::exists(out / "grids" / ("level_" + std::to_string(k) + ".csv")));
  }
  const json manifest = json::parse(slurp(out / "manifest.json"));
  CHECK(manifest.contains("created_at"));
  CHECK(manifest.at("config").at("bins") == 12);  // defaults written back
  for (const auto& f : manifest.at("files")) {
    CHECK(mkc::io::sha256_hex(slurp(out / f.at("path").get<std::string>())) == f.at("sha256"));
  }

  const Run v = run_cli("verify --config " + cfg);
  CHECK(v.code == 0);
  CHECK(v.output.find("tail predicate:  pass") != std::string::npos);
  const json rep = json::parse(slurp(out / "reports" / "verify.json"));
  CHECK(rep.at("passed") == true);
  CHECK(fs::exists(out / "reports" / "variogram.csv"));
  CHECK(fs::exists(out / "reports" / "moment_l4.csv"));

  const Run p = run_cli("report --config " + cfg);
  CHECK(p.code == 0);
  CHECK(p.output.find("gamma_hat") != std::string::npos);

  // Rerun: identical sample bytes and report JSON; only the manifest timestamp may move.
  const std::string s3 = slurp(out / "samples" / "level_3.mkc");
  const std::string v1 = slurp(out / "reports" / "verify.json");
  REQUIRE(run_cli("sample --config " + cfg).code == 0);
  REQUIRE(run_cli("verify --config " + cfg).code == 0);
  CHECK(slurp(out / "samples" / "level_3.mkc") == s3);
  CHECK(slurp(out / "reports" / "verify.json") == v1);
  json m2 = json::parse(slurp(out / "manifest.json"));
  json m1 = manifest;
  m1.erase("created_at");
  m2.erase("created_at");
  CHECK(m1 == m2);

  REQUIRE(run_cli("sample --config " + cfg + " --seed 6").code == 0);
  CHECK(slurp(out / "samples" / "level_3.mkc") != s3);

  fs::remove(out / "samples" / "level_2.mkc");
  const Run missing = run_cli("verify --config " + cfg);
  CHECK(missing.code == 1);
  CHECK(missing.output.find("file not found") != std::string::npos);
}

TEST_CASE("gamma above eta / 2 triggers the Hoelder warning") {
  json j = sphere_config();
  j["rates"]["gamma"] = 0.6;
  const auto cfg = write_config("g06", j).string();
  REQUIRE(run_cli("atlas --config " + cfg).code == 0);
  REQUIRE(run_cli("sample --config " + cfg).code == 0);
  const Run v = run_cli("verify --config " + cfg);
  CHECK(v.output.find("warning: Hoelder consistency") != std::string::npos);
  const json rep = json::parse(slurp(root() / "g06" / "reports" / "verify.json"));
  CHECK(rep.at("warnings").size() == 1);
}

TEST_CASE("model rejection, single replicate, usage errors") {
  json j = sphere_config();
  j["model"]["eta"] = 1.5;
  const Run rej = run_cli("sample --config " + write_config("eta15", j).string());
  CHECK(rej.code == 3);
  CHECK(rej.output.find("smallest eigenvalue -") != std::string::npos);

  json one = sphere_config();
  one["replicates"] = 1;
  one["atlas"]["n_charts"] = 1;
  one["atlas"]["cover_test_points"] = 10;
  const auto cfg = write_config("single", one).string();
  run_cli("atlas --config " + cfg);
  REQUIRE(run_cli("sample --config " + cfg + " --levels 1:2").code == 0);
  const auto values = mkc::io::parse_sample_binary(slurp(root() / "single" / "samples" / "level_2.mkc"));
  CHECK(values.rows() == 1);
  CHECK(values.cols() == 49);

  json unknown = sphere_config();
  unknown["colour"] = "blue";
  CHECK(run_cli("atlas --config " + write_config("unknown", unknown).string()).code == 1);
  CHECK(run_cli("atlas --config " + (root() / "nope.json").string()).code == 1);
  CHECK(run_cli("sample").code == 1);
  CHECK(run_cli("verify --config " + cfg + " --levels 1:2").code == 1);  // fewer than 3 levels
}
