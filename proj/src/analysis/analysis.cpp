#include "fainr/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fainr/autodiff/dual.hpp"

namespace fainr::analysis {

std::vector<std::size_t> ExpertMap::members_of(int expert) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < top1.size(); ++i)
    if (top1[i] == expert) out.push_back(i);
  return out;
}

std::vector<std::size_t> ExpertMap::counts() const {
  std::vector<std::size_t> c(static_cast<std::size_t>(experts), 0);
  for (int e : top1) ++c[static_cast<std::size_t>(e)];
  return c;
}

template <class T>
ExpertMap expert_map(const model::FaInrModel<T>& model, const ad::Tensor<T>& coords,
                     bool keep_probs, std::size_t chunk) {
  ExpertMap map;
  map.experts = model.config().experts;
  const auto n = static_cast<std::size_t>(coords.rows());
  map.top1.resize(n);
  if (keep_probs) map.probs.resize(coords.rows(), map.experts);
  for (std::size_t start = 0; start < n; start += chunk) {
    const auto len = static_cast<Eigen::Index>(std::min(chunk, n - start));
    const auto first = static_cast<Eigen::Index>(start);
    const ad::Tensor<T> probs = model.gate(coords.middleRows(first, len));
    for (Eigen::Index r = 0; r < len; ++r) {
      int best = 0;
      for (int e = 1; e < map.experts; ++e)
        if (probs(r, e) > probs(r, best)) best = e;
      map.top1[start + static_cast<std::size_t>(r)] = best;
    }
    if (keep_probs) map.probs.middleRows(first, len) = probs.template cast<double>();
  }
  return map;
}

std::size_t Graph::edge_count() const {
  std::size_t n = 0;
  for (const auto& a : adj) n += a.size();
  return n / 2;
}

Graph lattice_graph(const std::vector<int>& dims) {
  FAINR_REQUIRE(!dims.empty(), ContractError, "lattice graph needs at least one axis");
  std::size_t n = 1;
  for (int e : dims) {
    FAINR_REQUIRE(e >= 1, ContractError, "lattice extents must be positive");
    n *= static_cast<std::size_t>(e);
  }
  const std::size_t d = dims.size();
  std::vector<std::size_t> stride(d, 1);
  for (std::size_t a = d - 1; a-- > 0;) stride[a] = stride[a + 1] * static_cast<std::size_t>(dims[a + 1]);
  Graph g;
  g.adj.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      const std::size_t pos = (i / stride[a]) % static_cast<std::size_t>(dims[a]);
      if (pos > 0) g.adj[i].push_back(i - stride[a]);
      if (pos + 1 < static_cast<std::size_t>(dims[a])) g.adj[i].push_back(i + stride[a]);
    }
    std::sort(g.adj[i].begin(), g.adj[i].end());
  }
  return g;
}

Graph knn_graph(std::span<const float> coords, int dim, int k) {
  FAINR_REQUIRE(dim >= 1 && k >= 1, ContractError, "knn graph: dim and k must be positive");
  FAINR_REQUIRE(coords.size() % static_cast<std::size_t>(dim) == 0, ContractError,
                "knn graph: coordinate array is not N×d");
  const std::size_t n = coords.size() / static_cast<std::size_t>(dim);
  const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), n ? n - 1 : 0);
  Graph g;
  g.adj.resize(n);
  std::vector<std::pair<double, std::size_t>> dist;
  for (std::size_t i = 0; i < n; ++i) {
    dist.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double s = 0;
      for (int a = 0; a < dim; ++a) {
        const double diff = static_cast<double>(coords[i * dim + a]) - coords[j * dim + a];
        s += diff * diff;
      }
      dist.emplace_back(s, j);
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
    for (std::size_t q = 0; q < kk; ++q) {
      g.adj[i].push_back(dist[q].second);
      g.adj[dist[q].second].push_back(i);
    }
  }
  for (auto& a : g.adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return g;
}

Graph induced(const Graph& g, std::span<const std::size_t> nodes) {
  std::vector<std::ptrdiff_t> local(g.size(), -1);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    FAINR_REQUIRE(nodes[i] < g.size(), ContractError, "induced: node index out of range");
    local[nodes[i]] = static_cast<std::ptrdiff_t>(i);
  }
  Graph sub;
  sub.adj.resize(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t nb : g.adj[nodes[i]])
      if (local[nb] >= 0) sub.adj[i].push_back(static_cast<std::size_t>(local[nb]));
    std::sort(sub.adj[i].begin(), sub.adj[i].end());
  }
  return sub;
}

Graph spatial_graph(const data::EnsembleDataset& ds) {
  if (ds.gridded()) return lattice_graph(ds.lattice);
  return knn_graph(ds.coords, ds.coord_dim, 6);
}

double laplacian_energy(const Graph& g, std::span<const double> y) {
  FAINR_REQUIRE(g.size() >= 2, ContractError, "laplacian energy needs at least 2 nodes");
  FAINR_REQUIRE(y.size() == g.size(), ContractError,
                "laplacian energy: " + std::to_string(y.size()) + " values for " +
                    std::to_string(g.size()) + " nodes");
  const std::size_t n = g.size();
  std::vector<std::ptrdiff_t> comp(n, -1);
  std::vector<std::size_t> stack;
  double num = 0.0, den = 0.0;
  for (std::size_t root = 0; root < n; ++root) {
    if (comp[root] >= 0) continue;
    std::vector<std::size_t> members;
    stack.push_back(root);
    comp[root] = static_cast<std::ptrdiff_t>(root);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      members.push_back(v);
      for (std::size_t w : g.adj[v])
        if (comp[w] < 0) {
          comp[w] = static_cast<std::ptrdiff_t>(root);
          stack.push_back(w);
        }
    }
    double mean = 0.0;
    for (std::size_t v : members) mean += y[v];
    mean /= static_cast<double>(members.size());
    for (std::size_t v : members) {
      den += (y[v] - mean) * (y[v] - mean);
      for (std::size_t w : g.adj[v])
        if (w > v) num += (y[v] - y[w]) * (y[v] - y[w]);
    }
  }
  return den > 0.0 ? num / den : 0.0;
}

double laplacian_energy(const Graph& g, std::span<const float> y) {
  std::vector<double> v(y.begin(), y.end());
  return laplacian_energy(g, std::span<const double>(v));
}

FrequencyReport per_expert_frequency(const Graph& g, const ExpertMap& map,
                                     std::span<const float> values) {
  FAINR_REQUIRE(map.top1.size() == g.size() && values.size() == g.size(), ContractError,
                "per_expert_frequency: map, values and graph sizes differ");
  FrequencyReport r;
  r.global = laplacian_energy(g, values);
  for (int e = 0; e < map.experts; ++e) {
    const auto nodes = map.members_of(e);
    r.counts.push_back(nodes.size());
    if (nodes.size() < 2) {
      r.per_expert.emplace_back();
      continue;
    }
    std::vector<double> sub;
    sub.reserve(nodes.size());
    for (std::size_t i : nodes) sub.push_back(values[i]);
    r.per_expert.emplace_back(laplacian_energy(induced(g, nodes), std::span<const double>(sub)));
  }
  return r;
}

namespace {

void require_params(const FieldSource& src, std::span<const double> p) {
  FAINR_REQUIRE(static_cast<int>(p.size()) == src.param_dim(), ContractError,
                "expected " + std::to_string(src.param_dim()) + " parameter values");
}

void require_region(std::span<const std::size_t> region, std::size_t n) {
  FAINR_REQUIRE(!region.empty(), ContractError, "sensitivity region is empty");
  for (std::size_t i : region)
    FAINR_REQUIRE(i < n, ContractError, "region index " + std::to_string(i) + " out of range");
}

constexpr std::size_t kChunk = 8192;

}  // namespace

template <class T>
ModelSource<T>::ModelSource(const model::Surrogate<T>& model, data::NormalizationStats stats,
                            ad::Tensor<T> coords)
    : model_(model), stats_(std::move(stats)), coords_(std::move(coords)) {
  FAINR_REQUIRE(static_cast<int>(stats_.param.size()) == model_.param_dim(), ContractError,
                "model source: normalization stats do not match the model");
  for (int s = 0; s < model_.param_dim(); ++s)
    FAINR_REQUIRE(stats_.param_span(s) > 0, ContractError,
                  "model source: parameter " + std::to_string(s) + " has an empty range");
}

template <class T>
data::Range ModelSource<T>::param_range(int s) const {
  return stats_.param.at(static_cast<std::size_t>(s));
}

template <class T>
ad::Tensor<T> ModelSource<T>::unit_params(std::span<const double> p) const {
  require_params(*this, p);
  ad::Tensor<T> u(1, static_cast<Eigen::Index>(p.size()));
  for (std::size_t s = 0; s < p.size(); ++s)
    u(0, static_cast<Eigen::Index>(s)) = static_cast<T>(stats_.param_to_unit(static_cast<int>(s), p[s]));
  return u;
}

template <class T>
ad::Tensor<T> ModelSource<T>::region_coords(std::span<const std::size_t> region) const {
  ad::Tensor<T> out(static_cast<Eigen::Index>(region.size()), coords_.cols());
  for (std::size_t i = 0; i < region.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = coords_.row(static_cast<Eigen::Index>(region[i]));
  return out;
}

template <class T>
double ModelSource<T>::region_l1(std::span<const std::size_t> region, std::span<const double> p) const {
  require_region(region, static_cast<std::size_t>(coords_.rows()));
  const ad::Tensor<T> u = unit_params(p);
  double total = 0.0;
  for (std::size_t start = 0; start < region.size(); start += kChunk) {
    const auto part = region.subspan(start, std::min(kChunk, region.size() - start));
    const ad::Tensor<T> y = model_.predict(region_coords(part), u);
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      total += std::abs(stats_.field_from_unit(static_cast<double>(y(i, 0))));
  }
  return total / static_cast<double>(region.size());
}

template <class T>
double ModelSource<T>::region_l1_derivative(std::span<const std::size_t> region,
                                            std::span<const double> p, int s) const {
  require_region(region, static_cast<std::size_t>(coords_.rows()));
  FAINR_REQUIRE(s >= 0 && s < param_dim(), ContractError,
                "parameter index " + std::to_string(s) + " out of range");
  const ad::Tensor<T> u = unit_params(p);
  const T span_f = static_cast<T>(stats_.field_span());
  const T lo_f = static_cast<T>(stats_.field.first);
  double grad = 0.0;
  for (std::size_t start = 0; start < region.size(); start += kChunk) {
    const auto part = region.subspan(start, std::min(kChunk, region.size() - start));
    ad::Tape<T> tape;
    auto bound = tape.bind(model_.parameters(), false);
    ad::Var<T> pin = tape.input(u);
    std::vector<int> member(part.size(), 0);
    auto out = model_.build(tape, bound, region_coords(part), member, pin);
    ad::Var<T> phys = ad::add_scalar(ad::scale(out.prediction, span_f), lo_f);
    ad::Var<T> l1 = ad::sum(ad::abs(phys));
    tape.backward(l1);
    grad += static_cast<double>(tape.grad(pin)(0, s));
  }
  return grad / static_cast<double>(region.size()) / stats_.param_span(s);
}

SyntheticSource::SyntheticSource(data::SyntheticSpec spec)
    : spec_(std::move(spec)), coords_(data::synthetic_coords(spec_)) {
  spec_.validate();
}

data::Range SyntheticSource::param_range(int s) const {
  return spec_.param_ranges.at(static_cast<std::size_t>(s));
}

double SyntheticSource::region_l1(std::span<const std::size_t> region, std::span<const double> p) const {
  require_params(*this, p);
  require_region(region, spec_.size());
  const std::size_t d = spec_.resolution.size();
  std::vector<double> x(d);
  double total = 0.0;
  for (std::size_t i : region) {
    for (std::size_t a = 0; a < d; ++a) x[a] = coords_[i * d + a];
    total += std::abs(data::synthetic_value_unchecked(spec_, x.data(), p.data()));
  }
  return total / static_cast<double>(region.size());
}

double SyntheticSource::region_l1_derivative(std::span<const std::size_t> region,
                                             std::span<const double> p, int s) const {
  require_params(*this, p);
  require_region(region, spec_.size());
  FAINR_REQUIRE(s >= 0 && s < param_dim(), ContractError,
                "parameter index " + std::to_string(s) + " out of range");
  const std::size_t d = spec_.resolution.size();
  std::vector<ad::Dual<double>> pd;
  for (std::size_t k = 0; k < p.size(); ++k)
    pd.emplace_back(p[k], static_cast<int>(k) == s ? 1.0 : 0.0);
  std::vector<double> x(d);
  double total = 0.0;
  for (std::size_t i : region) {
    for (std::size_t a = 0; a < d; ++a) x[a] = coords_[i * d + a];
    total += ad::abs(data::synthetic_value_unchecked(spec_, x.data(), pd.data())).d;
  }
  return total / static_cast<double>(region.size());
}

std::string Region::describe() const {
  if (expert) return "expert:" + std::to_string(*expert);
  return "mask:" + std::to_string(indices.size());
}

Region expert_region(const ExpertMap& map, int expert) {
  FAINR_REQUIRE(expert >= 0 && expert < map.experts, ContractError,
                "expert " + std::to_string(expert) + " out of range");
  Region r;
  r.expert = expert;
  r.indices = map.members_of(expert);
  return r;
}

Region mask_region(std::vector<std::size_t> indices, std::size_t n) {
  std::sort(indices.begin(), indices.end());
  indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
  require_region(indices, n);
  Region r;
  r.indices = std::move(indices);
  return r;
}

Region full_region(std::size_t n) {
  Region r;
  r.indices.resize(n);
  std::iota(r.indices.begin(), r.indices.end(), std::size_t{0});
  return r;
}

SensitivityCurve sensitivity_sweep(const FieldSource& source, const Region& region, int s,
                                   data::Range sweep_range, int steps, std::vector<double> base,
                                   const SweepOptions& opts) {
  FAINR_REQUIRE(s >= 0 && s < source.param_dim(), ContractError,
                "parameter index " + std::to_string(s) + " is not below m = " +
                    std::to_string(source.param_dim()));
  FAINR_REQUIRE(steps >= 1, ContractError, "sweep needs at least one step");
  FAINR_REQUIRE(!region.indices.empty(), ContractError, "sensitivity region is empty");
  require_params(source, base);
  const auto [lo, hi] = sweep_range;
  const auto [plo, phi] = source.param_range(s);
  const double tol = 1e-9 * (phi - plo);
  FAINR_REQUIRE(lo >= plo - tol && hi <= phi + tol, ContractError,
                "sweep range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                    "] leaves the trained range [" + std::to_string(plo) + ", " +
                    std::to_string(phi) + "] of parameter " + std::to_string(s));
  FAINR_REQUIRE(steps == 1 ? hi >= lo : hi > lo, ContractError,
                "sweep range must be increasing");
  const double h = opts.fd_fraction * (phi - plo);

  SensitivityCurve c;
  c.param = s;
  c.region = region;
  for (int k = 0; k < steps; ++k) {
    const double v = steps == 1 ? lo : lo + (hi - lo) * k / (steps - 1);
    base[static_cast<std::size_t>(s)] = v;
    const double g = source.region_l1_derivative(region.indices, base, s);
    base[static_cast<std::size_t>(s)] = v + h;
    const double up = source.region_l1(region.indices, base);
    base[static_cast<std::size_t>(s)] = v - h;
    const double down = source.region_l1(region.indices, base);
    const double fd = (up - down) / (2 * h);
    c.sweep.push_back(v);
    c.derivative.push_back(g);
    c.sensitivity.push_back(std::abs(g));
    c.fd_derivative.push_back(fd);
    const double denom = std::max({std::abs(g), std::abs(fd), opts.rel_floor});
    c.max_rel_discrepancy = std::max(c.max_rel_discrepancy, std::abs(g - fd) / denom);
  }
  return c;
}

std::vector<SensitivityCurve> global_sensitivity(const FieldSource& source, std::size_t n_coords,
                                                 int steps, const SweepOptions& opts) {
  const Region all = full_region(n_coords);
  std::vector<double> mid;
  for (int s = 0; s < source.param_dim(); ++s) {
    const auto [lo, hi] = source.param_range(s);
    mid.push_back(0.5 * (lo + hi));
  }
  std::vector<SensitivityCurve> out;
  for (int s = 0; s < source.param_dim(); ++s)
    out.push_back(sensitivity_sweep(source, all, s, source.param_range(s), steps, mid, opts));
  return out;
}

std::string curves_csv(const std::vector<SensitivityCurve>& curves) {
  std::ostringstream os;
  os.precision(12);
  os << "param,region,value,sensitivity,derivative,fd_derivative\n";
  for (const auto& c : curves)
    for (std::size_t k = 0; k < c.sweep.size(); ++k)
      os << c.param << ',' << c.region.describe() << ',' << c.sweep[k] << ',' << c.sensitivity[k]
         << ',' << c.derivative[k] << ',' << c.fd_derivative[k] << '\n';
  return os.str();
}

std::string expert_map_csv(const ExpertMap& map, std::span<const float> raw_coords, int dim) {
  FAINR_REQUIRE(raw_coords.size() == map.top1.size() * static_cast<std::size_t>(dim), ContractError,
                "expert map csv: coordinate count differs from map size");
  std::ostringstream os;
  os << "index";
  for (int a = 0; a < dim; ++a) os << ",x" << a;
  os << ",expert\n";
  for (std::size_t i = 0; i < map.top1.size(); ++i) {
    os << i;
    for (int a = 0; a < dim; ++a) os << ',' << raw_coords[i * dim + a];
    os << ',' << map.top1[i] << '\n';
  }
  return os.str();
}

std::vector<std::uint8_t> expert_volume(const ExpertMap& map) {
  FAINR_REQUIRE(map.experts <= 256, ContractError, "expert volume holds at most 256 experts");
  return {map.top1.begin(), map.top1.end()};
}

template ExpertMap expert_map<float>(const model::FaInrModel<float>&, const ad::Tensor<float>&, bool,
                                     std::size_t);
template ExpertMap expert_map<double>(const model::FaInrModel<double>&, const ad::Tensor<double>&,
                                      bool, std::size_t);
template class ModelSource<float>;
template class ModelSource<double>;

}  // namespace fainr::analysis
