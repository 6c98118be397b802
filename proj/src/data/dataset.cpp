#include "fainr/data/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "json.hpp"

namespace fainr::data {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "dataset I/O assumes a little-endian host");

std::vector<std::size_t> EnsembleDataset::split_indices(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < members.size(); ++j)
    if (members[j].split == split) out.push_back(j);
  return out;
}

void EnsembleDataset::validate() const {
  FAINR_REQUIRE(coord_dim >= 1, DataError, "dataset: coordinate dimension must be >= 1");
  FAINR_REQUIRE(param_dim >= 1, DataError, "dataset: parameter dimension must be >= 1");
  FAINR_REQUIRE(!coords.empty() && coords.size() % coord_dim == 0, DataError,
                "dataset: coordinate array is empty or not a multiple of d");
  const std::size_t n = size();
  if (!lattice.empty()) {
    FAINR_REQUIRE(static_cast<int>(lattice.size()) == coord_dim, DataError,
                  "dataset: lattice rank differs from d");
    std::size_t prod = 1;
    for (int e : lattice) {
      FAINR_REQUIRE(e >= 1, DataError, "dataset: lattice extents must be >= 1");
      prod *= static_cast<std::size_t>(e);
    }
    FAINR_REQUIRE(prod == n, DataError, "dataset: lattice product differs from N");
  }
  FAINR_REQUIRE(param_names.empty() || static_cast<int>(param_names.size()) == param_dim,
                DataError, "dataset: parameter name count differs from m");
  FAINR_REQUIRE(param_ranges.empty() || static_cast<int>(param_ranges.size()) == param_dim,
                DataError, "dataset: parameter range count differs from m");
  for (const auto& m : members) {
    FAINR_REQUIRE(static_cast<int>(m.params.size()) == param_dim, DataError,
                  "dataset: member '" + m.id + "' has " + std::to_string(m.params.size()) +
                      " parameters, expected " + std::to_string(param_dim));
    FAINR_REQUIRE(m.values.size() == n, DataError,
                  "dataset: member '" + m.id + "' has " + std::to_string(m.values.size()) +
                      " values, expected N=" + std::to_string(n));
    FAINR_REQUIRE(m.split == "train" || m.split == "test", DataError,
                  "dataset: member '" + m.id + "' has unknown split '" + m.split + "'");
    for (int s = 0; s < param_dim && !param_ranges.empty(); ++s) {
      const auto [lo, hi] = param_ranges[s];
      FAINR_REQUIRE(m.params[s] >= lo && m.params[s] <= hi, DataError,
                    "dataset: member '" + m.id + "' parameter " + std::to_string(s) +
                        " outside its declared range");
    }
  }
}

namespace {

double to_unit(double v, const Range& r, double lo_out, double hi_out) {
  const double span = r.second - r.first;
  if (span <= 0) return 0.0;
  return lo_out + (v - r.first) / span * (hi_out - lo_out);
}

double from_unit(double u, const Range& r, double lo_out, double hi_out) {
  const double span = r.second - r.first;
  if (span <= 0) return r.first;
  return r.first + (u - lo_out) / (hi_out - lo_out) * span;
}

Range min_max(const float* data, std::size_t count, std::size_t stride) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < count; ++i) {
    lo = std::min(lo, double(data[i * stride]));
    hi = std::max(hi, double(data[i * stride]));
  }
  return {lo, hi};
}

}  // namespace

double NormalizationStats::coord_to_unit(int a, double v) const { return to_unit(v, coord[a], -1, 1); }
double NormalizationStats::coord_from_unit(int a, double v) const { return from_unit(v, coord[a], -1, 1); }
double NormalizationStats::param_to_unit(int a, double v) const { return to_unit(v, param[a], 0, 1); }
double NormalizationStats::param_from_unit(int a, double v) const { return from_unit(v, param[a], 0, 1); }
double NormalizationStats::field_to_unit(double v) const { return to_unit(v, field, 0, 1); }
double NormalizationStats::field_from_unit(double v) const { return from_unit(v, field, 0, 1); }

NormalizationStats compute_stats(const EnsembleDataset& ds, std::vector<std::string>* warnings) {
  ds.validate();
  FAINR_REQUIRE(!ds.members.empty(), DataError, "dataset has no members");
  NormalizationStats s;
  const std::size_t n = ds.size();
  for (int a = 0; a < ds.coord_dim; ++a) {
    s.coord.push_back(min_max(ds.coords.data() + a, n, ds.coord_dim));
    if (warnings && s.coord.back().second <= s.coord.back().first)
      warnings->push_back("coordinate axis " + std::to_string(a) + " is degenerate; mapped to 0");
  }
  for (int a = 0; a < ds.param_dim; ++a) {
    Range r;
    if (!ds.param_ranges.empty()) {
      r = ds.param_ranges[a];
    } else {
      r = {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
      for (const auto& m : ds.members) {
        r.first = std::min(r.first, m.params[a]);
        r.second = std::max(r.second, m.params[a]);
      }
    }
    if (warnings && r.second <= r.first)
      warnings->push_back("parameter axis " + std::to_string(a) + " is degenerate; mapped to 0");
    s.param.push_back(r);
  }
  auto train = ds.split_indices("train");
  if (train.empty()) {
    train.resize(ds.members.size());
    std::iota(train.begin(), train.end(), std::size_t{0});
  }
  s.field = {std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (std::size_t j : train) {
    const Range r = min_max(ds.members[j].values.data(), n, 1);
    s.field.first = std::min(s.field.first, r.first);
    s.field.second = std::max(s.field.second, r.second);
  }
  if (warnings && s.field.second <= s.field.first)
    warnings->push_back("field is constant over the training members; mapped to 0");
  return s;
}

nlohmann::json stats_to_json(const NormalizationStats& s) {
  auto ranges = [](const std::vector<Range>& r) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& [lo, hi] : r) j.push_back({lo, hi});
    return j;
  };
  return {{"coord", ranges(s.coord)},
          {"param", ranges(s.param)},
          {"field", {s.field.first, s.field.second}}};
}

NormalizationStats stats_from_json(const nlohmann::json& j) {
  auto ranges = [](const nlohmann::json& a) {
    std::vector<Range> r;
    for (const auto& e : a) r.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());
    return r;
  };
  try {
    NormalizationStats s;
    s.coord = ranges(j.at("coord"));
    s.param = ranges(j.at("param"));
    s.field = {j.at("field").at(0).get<double>(), j.at("field").at(1).get<double>()};
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("normalization stats: ") + e.what());
  }
}

NormalizedEnsemble normalize(const EnsembleDataset& ds) {
  std::vector<std::string> warnings;
  NormalizationStats stats = compute_stats(ds, &warnings);
  NormalizedEnsemble out = normalize(ds, stats);
  out.warnings = std::move(warnings);
  return out;
}

NormalizedEnsemble normalize(const EnsembleDataset& ds, const NormalizationStats& stats) {
  ds.validate();
  FAINR_REQUIRE(static_cast<int>(stats.coord.size()) == ds.coord_dim &&
                    static_cast<int>(stats.param.size()) == ds.param_dim,
                DataError, "normalization stats do not match the dataset dimensions");
  NormalizedEnsemble out;
  out.stats = stats;
  const auto n = static_cast<Eigen::Index>(ds.size());
  out.coords.resize(n, ds.coord_dim);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int a = 0; a < ds.coord_dim; ++a)
      out.coords(i, a) = static_cast<float>(stats.coord_to_unit(a, ds.coords[i * ds.coord_dim + a]));
  out.params.resize(static_cast<Eigen::Index>(ds.members.size()), ds.param_dim);
  for (std::size_t j = 0; j < ds.members.size(); ++j) {
    const Member& m = ds.members[j];
    for (int a = 0; a < ds.param_dim; ++a)
      out.params(static_cast<Eigen::Index>(j), a) = static_cast<float>(stats.param_to_unit(a, m.params[a]));
    std::vector<float> v(m.values.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(stats.field_to_unit(m.values[i]));
    out.values.push_back(std::move(v));
    (m.split == "test" ? out.test_members : out.train_members).push_back(j);
  }
  return out;
}

ad::Tensor<float> denormalize_coords(const ad::Tensor<float>& unit, const NormalizationStats& s) {
  ad::Tensor<float> out(unit.rows(), unit.cols());
  for (Eigen::Index i = 0; i < unit.rows(); ++i)
    for (Eigen::Index a = 0; a < unit.cols(); ++a)
      out(i, a) = static_cast<float>(s.coord_from_unit(static_cast<int>(a), unit(i, a)));
  return out;
}

std::vector<float> denormalize_field(const std::vector<float>& unit, const NormalizationStats& s) {
  std::vector<float> out(unit.size());
  for (std::size_t i = 0; i < unit.size(); ++i) out[i] = static_cast<float>(s.field_from_unit(unit[i]));
  return out;
}

std::vector<float> lattice_coords(const std::vector<int>& dims, const std::vector<Range>& bounds) {
  FAINR_REQUIRE(!dims.empty() && dims.size() == bounds.size(), ContractError,
                "lattice: dims and bounds must have equal nonzero length");
  std::size_t n = 1;
  for (int e : dims) {
    FAINR_REQUIRE(e >= 1, ContractError, "lattice extents must be >= 1");
    n *= static_cast<std::size_t>(e);
  }
  const std::size_t d = dims.size();
  std::vector<float> out(n * d);
  std::vector<int> idx(d, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      const double t = dims[a] > 1 ? double(idx[a]) / (dims[a] - 1) : 0.5;
      out[i * d + a] = static_cast<float>(bounds[a].first + t * (bounds[a].second - bounds[a].first));
    }
    for (std::size_t a = d; a-- > 0;) {
      if (++idx[a] < dims[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

SpatialSplit spatial_split(std::size_t n, double ratio, std::uint64_t seed) {
  FAINR_REQUIRE(ratio > 0.0 && ratio < 1.0, ContractError, "split ratio must lie in (0,1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
  SpatialSplit s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

namespace {

void write_f32(const fs::path& path, const std::vector<float>& v) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  FAINR_REQUIRE(out.good(), DataError, "cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 4));
  FAINR_REQUIRE(out.good(), DataError, "write to '" + path.string() + "' failed");
}

std::vector<float> read_f32(const fs::path& path, std::size_t expected, const std::string& what) {
  std::error_code ec;
  FAINR_REQUIRE(fs::exists(path, ec), DataError, what + ": missing file '" + path.string() + "'");
  const auto bytes = fs::file_size(path, ec);
  FAINR_REQUIRE(!ec, DataError, what + ": cannot stat '" + path.string() + "'");
  FAINR_REQUIRE(bytes % 4 == 0, DataError,
                what + ": '" + path.string() + "' is not a whole number of float32 values");
  FAINR_REQUIRE(bytes / 4 == expected, DataError,
                what + ": '" + path.string() + "' holds " + std::to_string(bytes / 4) +
                    " values, manifest implies " + std::to_string(expected));
  std::vector<float> v(expected);
  std::ifstream in(path, std::ios::binary);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
  FAINR_REQUIRE(in.gcount() == static_cast<std::streamsize>(bytes), DataError,
                what + ": short read on '" + path.string() + "'");
  return v;
}

nlohmann::json ranges_json(const std::vector<Range>& r) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& [lo, hi] : r) j.push_back({lo, hi});
  return j;
}

std::vector<Range> ranges_from(const nlohmann::json& j) {
  std::vector<Range> out;
  for (const auto& e : j) out.emplace_back(e.at(0).get<double>(), e.at(1).get<double>());
  return out;
}

bool same_float(double a, double b) { return static_cast<float>(a) == static_cast<float>(b); }

}  // namespace

void save(const EnsembleDataset& ds, const std::string& dir) {
  ds.validate();
  fs::create_directories(dir);
  const std::size_t n = ds.size();
  std::vector<Range> coord_ranges;
  for (int a = 0; a < ds.coord_dim; ++a) coord_ranges.push_back(min_max(ds.coords.data() + a, n, ds.coord_dim));
  Range field{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : ds.members) {
    const std::string file = "member_" + m.id + ".f32";
    write_f32(fs::path(dir) / file, m.values);
    const Range r = min_max(m.values.data(), n, 1);
    field = {std::min(field.first, r.first), std::max(field.second, r.second)};
    members.push_back({{"id", m.id}, {"params", m.params}, {"file", file}, {"split", m.split}});
  }
  write_f32(fs::path(dir) / "coords.f32", ds.coords);
  nlohmann::json manifest = {{"format", "fainr-ensemble"},
                             {"version", 1},
                             {"endianness", "little"},
                             {"d", ds.coord_dim},
                             {"m", ds.param_dim},
                             {"N", n},
                             {"coords_file", "coords.f32"},
                             {"coord_ranges", ranges_json(coord_ranges)},
                             {"members", members}};
  if (!ds.members.empty()) manifest["field_range"] = {field.first, field.second};
  if (ds.gridded()) manifest["lattice"] = ds.lattice;
  if (!ds.param_names.empty()) manifest["param_names"] = ds.param_names;
  if (!ds.param_ranges.empty()) manifest["param_ranges"] = ranges_json(ds.param_ranges);
  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
  FAINR_REQUIRE(out.good(), DataError, "cannot write manifest in '" + dir + "'");
  out << manifest.dump(2) << '\n';
}

EnsembleDataset load(const std::string& dir) {
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path);
  FAINR_REQUIRE(in.good(), DataError, "missing manifest '" + manifest_path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt manifest '" + manifest_path.string() + "': " + e.what());
  }
  EnsembleDataset ds;
  std::size_t n = 0;
  try {
    FAINR_REQUIRE(j.value("format", "") == "fainr-ensemble", DataError,
                  "manifest: unknown format tag");
    FAINR_REQUIRE(j.value("version", 0) == 1, DataError, "manifest: unsupported version");
    FAINR_REQUIRE(j.value("endianness", "") == "little", DataError,
                  "manifest: endianness must be 'little'");
    ds.coord_dim = j.at("d").get<int>();
    ds.param_dim = j.at("m").get<int>();
    n = j.at("N").get<std::size_t>();
    FAINR_REQUIRE(ds.coord_dim >= 1 && ds.param_dim >= 1 && n >= 1, DataError,
                  "manifest: d, m and N must be positive");
    if (j.contains("lattice")) ds.lattice = j.at("lattice").get<std::vector<int>>();
    if (j.contains("param_names")) ds.param_names = j.at("param_names").get<std::vector<std::string>>();
    if (j.contains("param_ranges")) ds.param_ranges = ranges_from(j.at("param_ranges"));
    ds.coords = read_f32(fs::path(dir) / j.value("coords_file", "coords.f32"),
                         n * static_cast<std::size_t>(ds.coord_dim), "coordinates");
    for (const auto& mj : j.at("members")) {
      Member m;
      m.id = mj.at("id").get<std::string>();
      m.params = mj.at("params").get<std::vector<double>>();
      m.split = mj.value("split", "train");
      m.values = read_f32(fs::path(dir) / mj.at("file").get<std::string>(), n, "member '" + m.id + "'");
      ds.members.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt manifest '" + manifest_path.string() + "': " + e.what());
  }
  ds.validate();
  if (j.contains("coord_ranges")) {
    const auto declared = ranges_from(j.at("coord_ranges"));
    FAINR_REQUIRE(static_cast<int>(declared.size()) == ds.coord_dim, DataError,
                  "manifest: coord_ranges has wrong length");
    for (int a = 0; a < ds.coord_dim; ++a) {
      const Range r = min_max(ds.coords.data() + a, n, ds.coord_dim);
      FAINR_REQUIRE(same_float(r.first, declared[a].first) && same_float(r.second, declared[a].second),
                    DataError, "manifest: coord_ranges disagree with coords on axis " + std::to_string(a));
    }
  }
  if (j.contains("field_range") && !ds.members.empty()) {
    Range field{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& m : ds.members) {
      const Range r = min_max(m.values.data(), n, 1);
      field = {std::min(field.first, r.first), std::max(field.second, r.second)};
    }
    FAINR_REQUIRE(same_float(field.first, j["field_range"][0].get<double>()) &&
                      same_float(field.second, j["field_range"][1].get<double>()),
                  DataError, "manifest: field_range disagrees with member files");
  }
  return ds;
}

}  // namespace fainr::data
