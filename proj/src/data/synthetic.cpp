#include "fainr/data/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "fainr/autodiff/dual.hpp"

namespace fainr::data {

std::size_t SyntheticSpec::size() const {
  std::size_t n = 1;
  for (int r : resolution) n *= static_cast<std::size_t>(r);
  return n;
}

void SyntheticSpec::validate() const {
  FAINR_REQUIRE(!resolution.empty(), ContractError, "synthetic: resolution must be nonempty");
  for (int r : resolution)
    FAINR_REQUIRE(r >= 2, ContractError, "synthetic: grid size must be >= 2 per axis");
  FAINR_REQUIRE(param_dim >= 1, ContractError, "synthetic: param_dim must be >= 1");
  const auto m = static_cast<std::size_t>(param_dim);
  const auto d = resolution.size();
  FAINR_REQUIRE(param_ranges.size() == m, ContractError, "synthetic: param_ranges size != m");
  for (const auto& [lo, hi] : param_ranges)
    FAINR_REQUIRE(hi > lo, ContractError, "synthetic: empty parameter range");
  FAINR_REQUIRE(background_slope.size() == m && wave.size() == d, ContractError,
                "synthetic: background tables have the wrong size");
  for (const auto& b : blobs) {
    FAINR_REQUIRE(b.amplitude_slope.size() == m && b.center.size() == d &&
                      b.center_slope.size() == m && b.sigma > 0,
                  ContractError, "synthetic: malformed blob table");
    for (const auto& row : b.center_slope)
      FAINR_REQUIRE(row.size() == d, ContractError, "synthetic: malformed blob center slope");
  }
}

std::vector<Range> default_param_ranges(int param_dim) {
  std::vector<Range> r;
  for (int s = 0; s < param_dim; ++s) {
    if (s == 0) r.emplace_back(0.5, 2.0);
    else if (s == 1) r.emplace_back(-1.0, 1.0);
    else r.emplace_back(0.0, 1.0);
  }
  return r;
}

SyntheticSpec make_synthetic_spec(std::vector<int> resolution, int param_dim, int blob_count,
                                  std::uint64_t seed) {
  FAINR_REQUIRE(blob_count >= 0, ContractError, "synthetic: blob count must be >= 0");
  SyntheticSpec spec;
  spec.resolution = std::move(resolution);
  spec.param_dim = param_dim;
  spec.seed = seed;
  spec.param_ranges = default_param_ranges(param_dim);
  const auto d = spec.resolution.size();
  const auto m = static_cast<std::size_t>(param_dim);
  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  for (int k = 0; k < blob_count; ++k) {
    SyntheticBlob b;
    b.amplitude = (k % 3 == 2 ? -1.0 : 1.0) * uniform(0.5, 1.0);
    for (std::size_t s = 0; s < m; ++s) b.amplitude_slope.push_back(uniform(-0.5, 0.5));
    for (std::size_t a = 0; a < d; ++a) b.center.push_back(uniform(-0.6, 0.6));
    for (std::size_t s = 0; s < m; ++s) {
      std::vector<double> row;
      for (std::size_t a = 0; a < d; ++a) row.push_back(uniform(-0.15, 0.15));
      b.center_slope.push_back(std::move(row));
    }
    b.sigma = uniform(0.08, 0.2);
    spec.blobs.push_back(std::move(b));
  }
  spec.background = 0.3;
  for (std::size_t s = 0; s < m; ++s) spec.background_slope.push_back(uniform(-0.2, 0.2));
  for (std::size_t a = 0; a < d; ++a) spec.wave.push_back(std::numbers::pi * uniform(0.3, 0.8));
  spec.phase = uniform(0.0, 2.0 * std::numbers::pi);
  spec.validate();
  return spec;
}

template <class S>
S synthetic_value_unchecked(const SyntheticSpec& spec, const double* x, const S* p) {
  using std::cos;
  using std::exp;
  using ad::cos;
  using ad::exp;
  const auto d = spec.resolution.size();
  const auto m = static_cast<std::size_t>(spec.param_dim);
  std::vector<S> u(m);
  for (std::size_t s = 0; s < m; ++s) {
    const auto [lo, hi] = spec.param_ranges[s];
    u[s] = (p[s] - S(lo)) / S(hi - lo);
  }
  S y = S(0);
  for (const auto& b : spec.blobs) {
    S amp = S(b.amplitude);
    for (std::size_t s = 0; s < m; ++s) amp += S(b.amplitude_slope[s]) * u[s];
    S r2 = S(0);
    for (std::size_t a = 0; a < d; ++a) {
      S c = S(b.center[a]);
      for (std::size_t s = 0; s < m; ++s) c += S(b.center_slope[s][a]) * u[s];
      const S diff = S(x[a]) - c;
      r2 += diff * diff;
    }
    y += amp * exp(-r2 / S(b.sigma * b.sigma));
  }
  S bg = S(spec.background);
  for (std::size_t s = 0; s < m; ++s) bg += S(spec.background_slope[s]) * u[s];
  double arg = spec.phase;
  for (std::size_t a = 0; a < d; ++a) arg += spec.wave[a] * x[a];
  return y + bg * S(std::cos(arg));
}

template double synthetic_value_unchecked<double>(const SyntheticSpec&, const double*, const double*);
template ad::Dual<double> synthetic_value_unchecked<ad::Dual<double>>(const SyntheticSpec&,
                                                                      const double*,
                                                                      const ad::Dual<double>*);

namespace {

void check_params(const SyntheticSpec& spec, const double* p) {
  for (int s = 0; s < spec.param_dim; ++s) {
    const auto [lo, hi] = spec.param_ranges[static_cast<std::size_t>(s)];
    FAINR_REQUIRE(p[s] >= lo && p[s] <= hi, ContractError,
                  "synthetic: parameter " + std::to_string(s) + " = " + std::to_string(p[s]) +
                      " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

}  // namespace

double synthetic_value(const SyntheticSpec& spec, const double* x, const double* p) {
  check_params(spec, p);
  return synthetic_value_unchecked(spec, x, p);
}

std::vector<double> synthetic_gradient(const SyntheticSpec& spec, const double* x, const double* p) {
  check_params(spec, p);
  const auto d = spec.resolution.size();
  const auto m = static_cast<std::size_t>(spec.param_dim);
  std::vector<double> u(m), inv_span(m);
  for (std::size_t s = 0; s < m; ++s) {
    const auto [lo, hi] = spec.param_ranges[s];
    inv_span[s] = 1.0 / (hi - lo);
    u[s] = (p[s] - lo) * inv_span[s];
  }
  std::vector<double> grad(m, 0.0);
  std::vector<double> diff(d);
  for (const auto& b : spec.blobs) {
    double amp = b.amplitude;
    for (std::size_t s = 0; s < m; ++s) amp += b.amplitude_slope[s] * u[s];
    double r2 = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      double c = b.center[a];
      for (std::size_t s = 0; s < m; ++s) c += b.center_slope[s][a] * u[s];
      diff[a] = x[a] - c;
      r2 += diff[a] * diff[a];
    }
    const double inv_s2 = 1.0 / (b.sigma * b.sigma);
    const double g = std::exp(-r2 * inv_s2);
    for (std::size_t s = 0; s < m; ++s) {
      // d/du_s of a·g = a'·g + a·g·(2/σ²)·Σ_a diff_a·dc_a/du_s
      double dot = 0.0;
      for (std::size_t a = 0; a < d; ++a) dot += diff[a] * b.center_slope[s][a];
      grad[s] += (b.amplitude_slope[s] * g + amp * g * 2.0 * inv_s2 * dot) * inv_span[s];
    }
  }
  double arg = spec.phase;
  for (std::size_t a = 0; a < d; ++a) arg += spec.wave[a] * x[a];
  for (std::size_t s = 0; s < m; ++s) grad[s] += spec.background_slope[s] * std::cos(arg) * inv_span[s];
  return grad;
}

std::vector<float> synthetic_coords(const SyntheticSpec& spec) {
  return lattice_coords(spec.resolution, std::vector<Range>(spec.resolution.size(), Range{-1.0, 1.0}));
}

std::vector<float> generate_synthetic(const SyntheticSpec& spec, const std::vector<double>& p) {
  spec.validate();
  FAINR_REQUIRE(static_cast<int>(p.size()) == spec.param_dim, ContractError,
                "synthetic: expected " + std::to_string(spec.param_dim) + " parameters");
  check_params(spec, p.data());
  const auto coords = synthetic_coords(spec);
  const std::size_t d = spec.resolution.size();
  const std::size_t n = spec.size();
  std::vector<float> out(n);
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) x[a] = coords[i * d + a];
    out[i] = static_cast<float>(synthetic_value_unchecked(spec, x.data(), p.data()));
  }
  return out;
}

EnsembleDataset make_ensemble(const SyntheticSpec& spec,
                              const std::vector<std::vector<double>>& param_grid,
                              const std::vector<std::string>& splits) {
  spec.validate();
  FAINR_REQUIRE(splits.empty() || splits.size() == param_grid.size(), ContractError,
                "make_ensemble: one split tag per parameter tuple");
  EnsembleDataset ds;
  ds.coord_dim = spec.coord_dim();
  ds.param_dim = spec.param_dim;
  ds.coords = synthetic_coords(spec);
  ds.lattice = spec.resolution;
  ds.param_ranges = spec.param_ranges;
  for (int s = 0; s < spec.param_dim; ++s) ds.param_names.push_back("p" + std::to_string(s));
  for (std::size_t j = 0; j < param_grid.size(); ++j) {
    Member m;
    m.id = std::to_string(j);
    m.params = param_grid[j];
    m.values = generate_synthetic(spec, m.params);
    if (!splits.empty()) m.split = splits[j];
    ds.members.push_back(std::move(m));
  }
  ds.validate();
  return ds;
}

std::vector<std::vector<double>> sample_parameters(const SyntheticSpec& spec, std::size_t count,
                                                   std::uint64_t seed, double margin) {
  FAINR_REQUIRE(margin >= 0.0 && margin < 0.5, ContractError, "sample margin must lie in [0, 0.5)");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(margin, 1.0 - margin);
  std::vector<std::vector<double>> out;
  for (std::size_t j = 0; j < count; ++j) {
    std::vector<double> p;
    for (const auto& [lo, hi] : spec.param_ranges) p.push_back(lo + unit(rng) * (hi - lo));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace fainr::data
