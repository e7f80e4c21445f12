#include "mkc/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "mkc/errors.hpp"

namespace mkc::io {

namespace {

json vec(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}


template <class T>
void put_le(std::string& out, T value) {
  auto bits = std::bit_cast<std::array<char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  out.append(bits.data(), bits.size());
}

template <class T>
T get_le(std::string_view bytes, std::size_t offset) {
  std::array<char, sizeof(T)> bits;
  std::memcpy(bits.data(), bytes.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  return std::bit_cast<T>(bits);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InvalidInput("malformed number '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

json to_json(const Manifold& M) {
  json j{{"kind", to_string(M.kind())}, {"dim", M.dim()}};
  if (M.kind() == ManifoldKind::FlatTorus) j["periods"] = vec(M.periods());
  if (M.kind() == ManifoldKind::Box) {
    j["lower"] = vec(M.lower());
    j["upper"] = vec(M.upper());
  }
  return j;
}

Manifold manifold_from_json(const json& j) {
  static const std::set<std::string> allowed{"kind", "dim", "periods", "lower", "upper"};
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw InvalidInput("manifold: unknown key '" + key + "'");
  }
  const auto kind = manifold_kind_from_string(j.at("kind").get<std::string>());
  Manifold M = [&] {
    switch (kind) {
      case ManifoldKind::Sphere: return Manifold::sphere(j.at("dim").get<int>());
      case ManifoldKind::FlatTorus: return Manifold::flat_torus(vec_from(j.at("periods")));
      case ManifoldKind::Box: return Manifold::box(vec_from(j.at("lower")), vec_from(j.at("upper")));
    }
    throw InvalidInput("unreachable manifold kind");
  }();
  if (j.contains("dim") && j.at("dim").get<int>() != M.dim()) throw InvalidInput("manifold: dim disagrees with extents");
  return M;
}

json to_json(const Atlas& atlas) {
  json charts = json::array();
  for (const auto& c : atlas.charts) {
    json frame = json::array();
    for (int i = 0; i < c.frame.dim(); ++i) frame.push_back(vec(c.frame.vectors.col(i)));
    charts.push_back({{"index", c.index},
                      {"center", vec(c.center.coords)},
                      {"radius", c.radius},
                      {"alpha", c.alpha},
                      {"frame", frame}});
  }
  return {{"schema", kAtlasSchema}, {"manifold", to_json(atlas.manifold)}, {"charts", charts}};
}

Atlas atlas_from_json(const json& j) {
  if (j.value("schema", "") != kAtlasSchema) throw InvalidInput("atlas: unsupported schema");
  Atlas atlas{manifold_from_json(j.at("manifold")), {}};
  for (const auto& jc : j.at("charts")) {
    Chart c = make_chart(atlas.manifold, atlas.manifold.point(vec_from(jc.at("center"))), jc.at("index").get<int>(),
                         jc.at("radius").get<double>());
    // The frame is recomputed deterministically; a stored frame that disagrees means
    // the file came from an incompatible build.
    const auto& jf = jc.at("frame");
    if (static_cast<int>(jf.size()) != c.frame.dim()) throw InvalidInput("atlas: frame size mismatch");
    for (int i = 0; i < c.frame.dim(); ++i) {
      if ((vec_from(jf.at(i)) - c.frame.vectors.col(i)).cwiseAbs().maxCoeff() > 1e-12) {
        throw InvalidInput("atlas: stored frame differs from the recomputed frame");
      }
    }
    atlas.charts.push_back(std::move(c));
  }
  return atlas;
}

void write_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw InvalidInput("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("file not found: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_atlas(const std::filesystem::path& path, const Atlas& atlas) {
  write_atomic(path, to_json(atlas).dump(2) + "\n");
}

Atlas load_atlas(const std::filesystem::path& path) {
  try {
    return atlas_from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw InvalidInput("atlas " + path.string() + ": " + e.what());
  }
}

std::string grid_csv(const DyadicGrid& g) {
  std::string out = "point_index";
  for (int i = 0; i < g.dim(); ++i) out += ",c" + std::to_string(i);
  for (Eigen::Index i = 0; i < g.ambient().rows(); ++i) out += ",x" + std::to_string(i);
  out += "\n";
  for (std::size_t p = 0; p < g.size(); ++p) {
    const auto col = static_cast<Eigen::Index>(p);
    out += std::to_string(p);
    for (Eigen::Index i = 0; i < g.coords().rows(); ++i) out += "," + fmt(g.coords()(i, col));
    for (Eigen::Index i = 0; i < g.ambient().rows(); ++i) out += "," + fmt(g.ambient()(i, col));
    out += "\n";
  }
  return out;
}

std::string sample_csv(const SampleMatrix& values) {
  std::string out = "point_id";
  for (Eigen::Index r = 0; r < values.rows(); ++r) out += ",rep_" + std::to_string(r);
  out += "\n";
  for (Eigen::Index p = 0; p < values.cols(); ++p) {
    out += std::to_string(p);
    for (Eigen::Index r = 0; r < values.rows(); ++r) out += "," + fmt(values(r, p));
    out += "\n";
  }
  return out;
}

SampleMatrix parse_sample_csv(std::string_view text) {
  auto lines = split(text, '\n');
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw InvalidInput("sample csv: missing header");
  const auto header = split(lines.front(), ',');
  if (header.empty() || header.front() != "point_id") throw InvalidInput("sample csv: bad header");
  const auto reps = static_cast<Eigen::Index>(header.size() - 1);
  const auto points = static_cast<Eigen::Index>(lines.size() - 1);
  SampleMatrix values(reps, points);
  for (Eigen::Index p = 0; p < points; ++p) {
    const auto cells = split(lines[static_cast<std::size_t>(p) + 1], ',');
    if (static_cast<Eigen::Index>(cells.size()) != reps + 1) throw InvalidInput("sample csv: ragged row");
    if (parse_double(cells[0]) != static_cast<double>(p)) throw InvalidInput("sample csv: point ids out of order");
    for (Eigen::Index r = 0; r < reps; ++r) values(r, p) = parse_double(cells[static_cast<std::size_t>(r) + 1]);
  }
  return values;
}

std::string sample_binary(const SampleMatrix& values) {
  std::string out(kSampleMagic);
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(values.rows()));
  put_le<std::uint64_t>(out, static_cast<std::uint64_t>(values.cols()));
  out.reserve(out.size() + 8 * static_cast<std::size_t>(values.size()));
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c) put_le<double>(out, values(r, c));
  return out;
}

SampleMatrix parse_sample_binary(std::string_view bytes) {
  if (bytes.size() < 20 || bytes.substr(0, 4) != kSampleMagic) throw InvalidInput("sample binary: bad magic");
  const auto rows = get_le<std::uint64_t>(bytes, 4);
  const auto cols = get_le<std::uint64_t>(bytes, 12);
  if (cols != 0 && rows > (bytes.size() - 20) / 8 / cols) throw InvalidInput("sample binary: truncated");
  if (bytes.size() != 20 + 8 * rows * cols) throw InvalidInput("sample binary: size mismatch");
  SampleMatrix values(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t off = 20;
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c, off += 8) values(r, c) = get_le<double>(bytes, off);
  }
  return values;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

json to_json(const DistortionReport& r) {
  return {{"passed", r.passed}, {"pairs", r.pairs}, {"min_ratio", r.min_ratio}, {"max_ratio", r.max_ratio}};
}

json to_json(const SandwichReport& r) {
  return {{"passed", r.passed},
          {"pairs", r.pairs},
          {"failures", r.failures},
          {"max_d_over_dn", r.max_upper_ratio},
          {"max_alpha_dn_over_d", r.max_lower_ratio}};
}

json to_json(const SeparabilityReport& r) {
  json j{{"passed", r.passed}, {"k_max", r.k_max}, {"pairs_checked", r.pairs_checked}};
  if (r.counterexample) {
    j["counterexample"] = {{"level", r.counterexample->level}, {"x", r.counterexample->x}, {"y", r.counterexample->y}};
  }
  return j;
}

json to_json(const SummabilityReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"k", row.k},
                    {"delta", row.delta},
                    {"pairs", static_cast<double>(row.pairs)},
                    {"q_term", row.q_term},
                    {"r_term", row.r_term},
                    {"partial_q", row.partial_q},
                    {"partial_r", row.partial_r},
                    {"ratio_q", row.ratio_q},
                    {"ratio_r", row.ratio_r}});
  }
  auto cert = [](const SeriesCertificate& c) {
    return json{{"exponent", c.exponent},
                {"constant", c.constant},
                {"comparison", c.comparison},
                {"ratio", c.ratio},
                {"summable", c.summable()}};
  };
  return {{"passed", r.passed()},
          {"k_start", r.k_start},
          {"partial_sums_monotone", r.partial_sums_monotone},
          {"pair_constant_empirical", r.pair_constant_empirical},
          {"pair_constant_analytic", r.pair_constant_analytic},
          {"q_series", cert(r.q_series)},
          {"r_series", cert(r.r_series)},
          {"warnings", r.warnings},
          {"rows", rows}};
}

json to_json(const TailReport& r) {
  json bins = json::array();
  for (const auto& b : r.bins) {
    bins.push_back({{"h_lo", b.h_lo},
                    {"h_hi", b.h_hi},
                    {"pairs", b.pairs},
                    {"trials", b.trials},
                    {"exceedances", b.exceedances},
                    {"freq", b.freq},
                    {"ci_lo", b.ci_lo},
                    {"ci_hi", b.ci_hi},
                    {"bound", b.bound},
                    {"p_value", b.p_value},
                    {"pass", b.pass}});
  }
  return {{"passed", r.passed()}, {"confidence", r.confidence}, {"bins", bins}};
}

json to_json(const std::vector<TailPredicateRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"h", r.h},
                   {"sigma", r.sigma},
                   {"r", r.r},
                   {"q", r.q},
                   {"log_tail", r.log_tail},
                   {"log_margin", r.log_margin},
                   {"holds", r.holds}});
  }
  return out;
}

json to_json(const HolderEstimate& e) {
  json levels = json::array();
  for (const auto& l : e.levels) {
    levels.push_back({{"k", l.k},
                      {"delta", l.delta},
                      {"median_max_increment", l.median_max_increment},
                      {"residual", l.residual},
                      {"pairs", l.pairs}});
  }
  return {{"gamma_hat", e.gamma_hat},
          {"std_error", std::isfinite(e.std_error) ? json(e.std_error) : json(nullptr)},
          {"gamma_hat_log_corrected",
           std::isfinite(e.gamma_hat_log_corrected) ? json(e.gamma_hat_log_corrected) : json(nullptr)},
          {"intercept", e.intercept},
          {"degenerate", e.degenerate},
          {"in_unit_interval", e.in_unit_interval},
          {"levels", levels}};
}

json to_json(const std::vector<BinnedStatistic>& table) {
  json out = json::array();
  for (const auto& b : table) {
    out.push_back({{"h_lo", b.h_lo},
                   {"h_hi", b.h_hi},
                   {"h_mid", b.h_mid},
                   {"value", b.value},
                   {"pairs", b.pairs},
                   {"std_error", std::isfinite(b.std_error) ? json(b.std_error) : json(nullptr)}});
  }
  return out;
}

json to_json(const ChainingResult& c) {
  json levels = json::array();
  for (std::size_t i = 0; i < c.levels.size(); ++i) {
    const auto& l = c.levels[i];
    json row{{"k", l.k}, {"delta", l.delta}, {"nearest", l.nearest}};
    if (i + 1 < c.levels.size() && c.diffs.rows() > 0) {
      row["mean_abs_step"] = c.diffs.col(static_cast<Eigen::Index>(i)).mean();
      if (i < c.exceed_fraction.size()) row["exceed_fraction"] = c.exceed_fraction[i];
    }
    levels.push_back(row);
  }
  return {{"levels", levels}, {"decay_ratio", std::isfinite(c.decay_ratio) ? json(c.decay_ratio) : json(nullptr)}};
}

std::string binned_csv(const std::vector<BinnedStatistic>& table, std::string_view value_name) {
  std::string out = "h_lo,h_hi,h_mid," + std::string(value_name) + ",pairs,std_error\n";
  for (const auto& b : table) {
    out += fmt(b.h_lo) + "," + fmt(b.h_hi) + "," + fmt(b.h_mid) + "," + fmt(b.value) + "," +
           std::to_string(b.pairs) + "," + fmt(b.std_error) + "\n";
  }
  return out;
}

std::string tail_csv(const TailReport& r) {
  std::string out = "h_lo,h_hi,pairs,freq,ci_lo,ci_hi,bound,p_value,pass\n";
  for (const auto& b : r.bins) {
    out += fmt(b.h_lo) + "," + fmt(b.h_hi) + "," + std::to_string(b.pairs) + "," + fmt(b.freq) + "," +
           fmt(b.ci_lo) + "," + fmt(b.ci_hi) + "," + fmt(b.bound) + "," + fmt(b.p_value) + "," +
           (b.pass ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace mkc::io
