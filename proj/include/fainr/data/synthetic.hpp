#pragma once

#include <cstdint>
#include <vector>

#include "fainr/data/dataset.hpp"

namespace fainr::data {

// Coefficients below act on the unit parameter u_s = (p_s - lo_s) / (hi_s - lo_s).
struct SyntheticBlob {
  double amplitude = 1.0;
  std::vector<double> amplitude_slope;            // m
  std::vector<double> center;                     // d
  std::vector<std::vector<double>> center_slope;  // m × d
  double sigma = 0.25;
};

// Field on the [-1,1]^d lattice:
//   Y(x; p) = sum_k a_k(u) exp(-|x - c_k(u)|^2 / sigma_k^2) + b(u) cos(w·x + phase)
// with a_k, c_k and b affine in u.
struct SyntheticSpec {
  std::vector<int> resolution{32, 32, 32};
  int param_dim = 2;
  std::uint64_t seed = 7;
  std::vector<Range> param_ranges;
  std::vector<SyntheticBlob> blobs;
  double background = 0.0;
  std::vector<double> background_slope;  // m
  std::vector<double> wave;              // d
  double phase = 0.0;

  int coord_dim() const { return static_cast<int>(resolution.size()); }
  std::size_t size() const;
  void validate() const;
};

// Seeded coefficient tables: blob_count Gaussian bumps over a smooth wave.
SyntheticSpec make_synthetic_spec(std::vector<int> resolution = {32, 32, 32}, int param_dim = 2,
                                  int blob_count = 6, std::uint64_t seed = 7);

std::vector<Range> default_param_ranges(int param_dim);

// Field value at one coordinate; p in raw units and inside the spec's ranges.
double synthetic_value(const SyntheticSpec& spec, const double* x, const double* p);
// Closed-form dY/dp_s in raw parameter units.
std::vector<double> synthetic_gradient(const SyntheticSpec& spec, const double* x, const double* p);

// Same formula without the range check; scalar type S may be ad::Dual.
template <class S>
S synthetic_value_unchecked(const SyntheticSpec& spec, const double* x, const S* p);

std::vector<float> synthetic_coords(const SyntheticSpec& spec);
std::vector<float> generate_synthetic(const SyntheticSpec& spec, const std::vector<double>& p);

// One member per parameter tuple; `splits` (optional) tags each as train/test.
EnsembleDataset make_ensemble(const SyntheticSpec& spec,
                              const std::vector<std::vector<double>>& param_grid,
                              const std::vector<std::string>& splits = {});

// Uniform draws inside the spec's parameter ranges, shrunk by `margin`
// (fraction of each range) at both ends.
std::vector<std::vector<double>> sample_parameters(const SyntheticSpec& spec, std::size_t count,
                                                   std::uint64_t seed, double margin = 0.0);

}  // namespace fainr::data
