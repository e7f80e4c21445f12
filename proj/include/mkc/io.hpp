#pragma once

// File formats.
//
// Atlas (JSON, schema "mkc-atlas/1"):
//   { "schema", "manifold": {kind, dim, periods?, lower?, upper?},
//     "charts": [{ "index", "center": [...], "radius", "alpha", "frame": [[column 0], ...] }] }
//
// Grid CSV: header "point_index,c0..c{m-1},x0..x{n-1}" (chart coordinates, then ambient).
//
// Sample CSV: header "point_id,rep_0,...,rep_{R-1}", one row per point.
//
// Sample binary "MKC1": 4 magic bytes "MKC1", uint64 rows (replicates), uint64 cols
// (points), then rows * cols float64 in row-major order; all little-endian.

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "mkc/atlas.hpp"
#include "mkc/fields.hpp"
#include "mkc/kc_verify.hpp"

namespace mkc::io {

using json = nlohmann::json;

inline constexpr std::string_view kAtlasSchema = "mkc-atlas/1";
inline constexpr std::string_view kSampleMagic = "MKC1";

json to_json(const Manifold& M);
Manifold manifold_from_json(const json& j);

json to_json(const Atlas& atlas);
Atlas atlas_from_json(const json& j);

/// Writes `contents` to a temporary sibling and renames it over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

void save_atlas(const std::filesystem::path& path, const Atlas& atlas);
Atlas load_atlas(const std::filesystem::path& path);

std::string grid_csv(const DyadicGrid& g);

std::string sample_csv(const SampleMatrix& values);
SampleMatrix parse_sample_csv(std::string_view text);

std::string sample_binary(const SampleMatrix& values);
SampleMatrix parse_sample_binary(std::string_view bytes);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);

json to_json(const DistortionReport& r);
json to_json(const SandwichReport& r);
json to_json(const SeparabilityReport& r);
json to_json(const SummabilityReport& r);
json to_json(const TailReport& r);
json to_json(const std::vector<TailPredicateRow>& rows);
json to_json(const HolderEstimate& e);
json to_json(const std::vector<BinnedStatistic>& table);
json to_json(const ChainingResult& c);

std::string binned_csv(const std::vector<BinnedStatistic>& table, std::string_view value_name);
std::string tail_csv(const TailReport& r);

}  // namespace mkc::io
