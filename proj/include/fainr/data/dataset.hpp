#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fainr/autodiff/tensor.hpp"

namespace fainr::data {

using Range = std::pair<double, double>;

struct Member {
  std::string id;
  std::vector<double> params;  // m raw values
  std::vector<float> values;   // N raw field values
  std::string split = "train"; // "train" or "test"
};

// Fixed coordinates shared by every member plus the members themselves.
struct EnsembleDataset {
  int coord_dim = 0;
  int param_dim = 0;
  std::vector<float> coords;   // N×d, row-major
  std::vector<int> lattice;    // per-axis extents when gridded (C order, axis 0 slowest)
  std::vector<std::string> param_names;
  std::vector<Range> param_ranges;  // declared parameter space; empty = from members
  std::vector<Member> members;

  std::size_t size() const { return coord_dim ? coords.size() / coord_dim : 0; }
  bool gridded() const { return !lattice.empty(); }
  std::vector<std::size_t> split_indices(const std::string& split) const;
  // Throws DataError on any inconsistency.
  void validate() const;
};

struct NormalizationStats {
  std::vector<Range> coord;  // raw min/max per axis
  std::vector<Range> param;  // raw min/max per axis
  Range field{0.0, 1.0};     // raw min/max over training members

  double coord_to_unit(int axis, double v) const;    // -> [-1,1]
  double coord_from_unit(int axis, double v) const;
  double param_to_unit(int axis, double v) const;    // -> [0,1]
  double param_from_unit(int axis, double v) const;
  double field_to_unit(double v) const;              // -> [0,1]
  double field_from_unit(double v) const;
  double param_span(int axis) const { return param[axis].second - param[axis].first; }
  double field_span() const { return field.second - field.first; }
};

// Coordinate ranges from the data, parameter ranges from the declaration
// (or the members), field range from the training members.
NormalizationStats compute_stats(const EnsembleDataset& ds, std::vector<std::string>* warnings = nullptr);

struct NormalizedEnsemble {
  NormalizationStats stats;
  ad::Tensor<float> coords;                // N×d in [-1,1]
  ad::Tensor<float> params;                // J×m in [0,1], all members
  std::vector<std::vector<float>> values;  // per member, in [0,1] for training members
  std::vector<std::size_t> train_members;
  std::vector<std::size_t> test_members;
  std::vector<std::string> warnings;
};

nlohmann::json stats_to_json(const NormalizationStats& s);
NormalizationStats stats_from_json(const nlohmann::json& j);

NormalizedEnsemble normalize(const EnsembleDataset& ds);
NormalizedEnsemble normalize(const EnsembleDataset& ds, const NormalizationStats& stats);

// Raw (physical) coordinates and parameters from their normalized forms.
ad::Tensor<float> denormalize_coords(const ad::Tensor<float>& unit, const NormalizationStats& s);
std::vector<float> denormalize_field(const std::vector<float>& unit, const NormalizationStats& s);

// Lattice node coordinates spanning [lo, hi] per axis.
std::vector<float> lattice_coords(const std::vector<int>& dims, const std::vector<Range>& bounds);

struct SpatialSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Uniform random partition of [0, n); train size is round(ratio * n).
SpatialSplit spatial_split(std::size_t n, double ratio, std::uint64_t seed);

void save(const EnsembleDataset& ds, const std::string& dir);
EnsembleDataset load(const std::string& dir);

}  // namespace fainr::data
