#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fainr/data/dataset.hpp"
#include "fainr/data/synthetic.hpp"
#include "fainr/model/fa_inr.hpp"

namespace fainr::analysis {

struct ExpertMap {
  int experts = 1;
  std::vector<int> top1;          // per coordinate
  ad::Tensor<double> probs;       // N×E, filled only on request
  std::vector<std::size_t> members_of(int expert) const;
  std::vector<std::size_t> counts() const;
};

// Top-1 expert per coordinate, lower index on ties. Reads coordinates only.
template <class T>
ExpertMap expert_map(const model::FaInrModel<T>& model, const ad::Tensor<T>& coords,
                     bool keep_probs = false, std::size_t chunk = 16384);

// Undirected graph with unit edge weights, as sorted adjacency lists.
struct Graph {
  std::vector<std::vector<std::size_t>> adj;
  std::size_t size() const { return adj.size(); }
  std::size_t edge_count() const;
};

// 6-neighbourhood (2d-neighbourhood in d dimensions) on a C-ordered lattice.
Graph lattice_graph(const std::vector<int>& dims);
// k nearest neighbours per node, symmetrized. Coordinates are N×d row-major.
Graph knn_graph(std::span<const float> coords, int dim, int k = 6);
// Subgraph induced by `nodes`; node i of the result is nodes[i].
Graph induced(const Graph& g, std::span<const std::size_t> nodes);
Graph spatial_graph(const data::EnsembleDataset& ds);

// y^T L y / y^T y with y centered within each connected component; 0 for a
// constant signal.
double laplacian_energy(const Graph& g, std::span<const double> y);
double laplacian_energy(const Graph& g, std::span<const float> y);

struct FrequencyReport {
  std::vector<std::optional<double>> per_expert;  // empty entries for subsets < 2 nodes
  std::vector<std::size_t> counts;
  double global = 0;
};

FrequencyReport per_expert_frequency(const Graph& g, const ExpertMap& map,
                                     std::span<const float> values);

// Something whose region-averaged L1 magnitude can be differentiated with
// respect to one raw simulation parameter.
class FieldSource {
 public:
  virtual ~FieldSource() = default;
  virtual int param_dim() const = 0;
  virtual data::Range param_range(int s) const = 0;
  // (1/|R|) sum_{x in R} |y(x, p)| in physical units.
  virtual double region_l1(std::span<const std::size_t> region, std::span<const double> p) const = 0;
  // Its derivative with respect to raw p_s.
  virtual double region_l1_derivative(std::span<const std::size_t> region,
                                      std::span<const double> p, int s) const = 0;
};

// Trained surrogate; derivatives come from the tape with respect to the
// normalized parameter and are rescaled by the parameter span.
template <class T>
class ModelSource final : public FieldSource {
 public:
  ModelSource(const model::Surrogate<T>& model, data::NormalizationStats stats,
              ad::Tensor<T> coords);
  int param_dim() const override { return model_.param_dim(); }
  data::Range param_range(int s) const override;
  double region_l1(std::span<const std::size_t> region, std::span<const double> p) const override;
  double region_l1_derivative(std::span<const std::size_t> region, std::span<const double> p,
                              int s) const override;

 private:
  ad::Tensor<T> unit_params(std::span<const double> p) const;
  ad::Tensor<T> region_coords(std::span<const std::size_t> region) const;

  const model::Surrogate<T>& model_;
  data::NormalizationStats stats_;
  ad::Tensor<T> coords_;  // normalized
};

// The synthetic generator itself, differentiated in forward mode.
class SyntheticSource final : public FieldSource {
 public:
  explicit SyntheticSource(data::SyntheticSpec spec);
  int param_dim() const override { return spec_.param_dim; }
  data::Range param_range(int s) const override;
  double region_l1(std::span<const std::size_t> region, std::span<const double> p) const override;
  double region_l1_derivative(std::span<const std::size_t> region, std::span<const double> p,
                              int s) const override;

 private:
  data::SyntheticSpec spec_;
  std::vector<float> coords_;
};

struct Region {
  std::optional<int> expert;         // set when the region is an expert's Top-1 set
  std::vector<std::size_t> indices;  // coordinate indices
  std::string describe() const;
};

Region expert_region(const ExpertMap& map, int expert);
Region mask_region(std::vector<std::size_t> indices, std::size_t n);
Region full_region(std::size_t n);

struct SensitivityCurve {
  int param = 0;
  Region region;
  std::vector<double> sweep;        // raw parameter values, strictly increasing
  std::vector<double> sensitivity;  // |dS/dp_s| from the tape
  std::vector<double> derivative;   // signed dS/dp_s from the tape
  std::vector<double> fd_derivative;
  double max_rel_discrepancy = 0;   // tape vs central difference
};

struct SweepOptions {
  double fd_fraction = 1e-3;   // central-difference step as a fraction of the parameter range
  double rel_floor = 1e-8;     // denominator floor for the discrepancy
};

// Sweeps p_s over `steps` evenly spaced values of [lo, hi] with the remaining
// parameters taken from `base` (raw units).
SensitivityCurve sensitivity_sweep(const FieldSource& source, const Region& region, int s,
                                   data::Range sweep_range, int steps, std::vector<double> base,
                                   const SweepOptions& opts = {});

// One full-domain curve per parameter, the others held at their range midpoints.
std::vector<SensitivityCurve> global_sensitivity(const FieldSource& source, std::size_t n_coords,
                                                 int steps, const SweepOptions& opts = {});

std::string curves_csv(const std::vector<SensitivityCurve>& curves);
std::string expert_map_csv(const ExpertMap& map, std::span<const float> raw_coords, int dim);
// One byte per lattice node in C order (expert index).
std::vector<std::uint8_t> expert_volume(const ExpertMap& map);

}  // namespace fainr::analysis
