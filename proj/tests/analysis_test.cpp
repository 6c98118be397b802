#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "fainr/analysis/analysis.hpp"
#include "fainr/data/synthetic.hpp"
#include "helpers.hpp"

using namespace fainr;
using namespace fainr::analysis;
using ad::Tensor;

namespace {

Graph path_graph(std::size_t n) { return lattice_graph({static_cast<int>(n)}); }

data::NormalizationStats unit_stats() {
  data::NormalizationStats s;
  s.coord = {{-1, 1}, {-1, 1}, {-1, 1}};
  s.param = {{0.0, 2.0}, {-1.0, 1.0}};
  s.field = {-3.0, 5.0};
  return s;
}

// Gate whose logits are (+x0, -x0): expert 0 owns x0 > 0, expert 1 owns x0 < 0.
void split_on_first_axis(model::FaInrModel<double>& m) {
  auto& p = m.parameters();
  auto& grid = p.value(p.index_of("gate.grid"));
  const int res = m.config().gate_grid_res;
  grid.setZero();
  for (Eigen::Index v = 0; v < grid.rows(); ++v) {
    const auto i0 = v / (res * res);
    grid(v, 0) = -1.0 + 2.0 * static_cast<double>(i0) / (res - 1);
  }
  auto& w = p.value(p.index_of("gate.mlp.l0.weight"));
  w.setZero();
  w(0, 0) = 1.0;
  w(0, 1) = -1.0;
  p.value(p.index_of("gate.mlp.l0.bias")).setZero();
}

}  // namespace

TEST_CASE("a single expert owns every coordinate") {
  model::FaInrModel<double> m(test::toy_config(1, 8, 1));
  std::mt19937_64 rng(1);
  const auto map = expert_map(m, test::random_tensor<double>(200, 3, rng));
  CHECK(std::all_of(map.top1.begin(), map.top1.end(), [](int e) { return e == 0; }));
  CHECK(map.counts() == std::vector<std::size_t>{200});
}

TEST_CASE("constructed gating grid splits the cube at x0 = 0") {
  model::FaInrModel<double> m(test::toy_config(2, 8, 1));
  split_on_first_axis(m);
  std::mt19937_64 rng(2);
  auto coords = test::random_tensor<double>(500, 3, rng);
  coords(0, 0) = 0.0;  // tie goes to the lower index
  const auto map = expert_map(m, coords, true);
  for (Eigen::Index i = 0; i < coords.rows(); ++i) CHECK(map.top1[i] == (coords(i, 0) >= 0 ? 0 : 1));
  CHECK(map.probs.rows() == 500);

  // Adding the same constant to every logit changes nothing.
  auto& b = m.parameters().value(m.parameters().index_of("gate.mlp.l0.bias"));
  b.setConstant(3.7);
  CHECK(expert_map(m, coords).top1 == map.top1);
}

TEST_CASE("lattice and neighbour graphs") {
  const auto g = lattice_graph({2, 3});
  CHECK(g.size() == 6);
  CHECK(g.edge_count() == 7);
  CHECK(g.adj[0] == std::vector<std::size_t>{1, 3});
  CHECK(lattice_graph({4, 4, 4}).edge_count() == 3 * 4 * 4 * 3);

  std::vector<float> coords;
  for (int i = 0; i < 10; ++i) {
    coords.push_back(static_cast<float>(i * i));
    coords.push_back(0.0f);
  }
  const auto k = knn_graph(coords, 2, 2);
  for (std::size_t i = 0; i < k.size(); ++i)
    for (auto j : k.adj[i]) CHECK(std::binary_search(k.adj[j].begin(), k.adj[j].end(), i));
  CHECK(k.adj[0] == std::vector<std::size_t>{1, 2});

  const std::vector<std::size_t> nodes{0, 1, 2, 5};
  const auto sub = induced(path_graph(6), nodes);
  CHECK(sub.edge_count() == 2);
  CHECK(sub.adj[3].empty());
}

TEST_CASE("laplacian energy reference values") {
  const auto p3 = path_graph(3);
  const std::vector<double> y{-1, 0, 1};
  CHECK(laplacian_energy(p3, y) == 1.0);
  CHECK(laplacian_energy(p3, std::vector<double>{2, 2, 2}) == 0.0);

  const auto p8 = path_graph(8);
  std::vector<double> alt, ramp;
  for (int i = 0; i < 8; ++i) {
    alt.push_back(i % 2 ? 1.0 : -1.0);
    ramp.push_back(i);
  }
  CHECK(laplacian_energy(p8, alt) > laplacian_energy(p8, ramp));
  CHECK_THROWS_AS(laplacian_energy(path_graph(1), std::vector<double>{1}), ContractError);
  CHECK_THROWS_AS(laplacian_energy(p8, y), ContractError);
}

TEST_CASE("laplacian energy ignores offsets and scale") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  const auto g = lattice_graph({5, 4, 3});
  for (int t = 0; t < 20; ++t) {
    std::vector<double> y(g.size()), z(g.size());
    const double a = u(rng) * 5 + 6, c = u(rng) * 100;
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = u(rng);
      z[i] = (t % 2 ? -a : a) * y[i] + c;
    }
    CHECK(laplacian_energy(g, z) == doctest::Approx(laplacian_energy(g, y)).epsilon(1e-10));
  }
}

TEST_CASE("per-expert frequency on a smooth half and an oscillating half") {
  const auto g = path_graph(40);
  std::vector<float> values(40);
  ExpertMap map;
  map.experts = 2;
  for (int i = 0; i < 40; ++i) {
    values[i] = i < 20 ? 0.05f * static_cast<float>(i) : (i % 2 ? 1.0f : -1.0f);
    map.top1.push_back(i < 20 ? 0 : 1);
  }
  const auto r = per_expert_frequency(g, map, values);
  REQUIRE(r.per_expert[0].has_value());
  CHECK(*r.per_expert[1] > *r.per_expert[0]);
  CHECK(r.counts == std::vector<std::size_t>{20, 20});

  ExpertMap swapped = map;
  for (auto& e : swapped.top1) e = 1 - e;
  const auto s = per_expert_frequency(g, swapped, values);
  CHECK(*s.per_expert[0] == *r.per_expert[1]);
  CHECK(*s.per_expert[1] == *r.per_expert[0]);

  ExpertMap one;
  one.top1.assign(40, 0);
  const auto single = per_expert_frequency(g, one, values);
  CHECK(*single.per_expert[0] == single.global);

  ExpertMap lonely = map;
  lonely.experts = 3;
  lonely.top1[0] = 2;
  CHECK_FALSE(per_expert_frequency(g, lonely, values).per_expert[2].has_value());
}

TEST_CASE("sensitivity is zero while the adapter output is zero") {
  model::FaInrModel<double> m(test::toy_config());
  std::mt19937_64 rng(4);
  ModelSource<double> src(m, unit_stats(), test::random_tensor<double>(50, 3, rng));
  const auto c = sensitivity_sweep(src, full_region(50), 0, {0.2, 1.8}, 6, {1.0, 0.0});
  for (double v : c.sensitivity) CHECK(v == 0.0);
  for (double v : c.fd_derivative) CHECK(v == 0.0);
}

TEST_CASE("sensitivity of the synthetic generator matches its closed-form gradient") {
  const auto spec = data::make_synthetic_spec({8, 8, 8}, 2, 5, 12);
  SyntheticSource src(spec);
  const auto coords = data::synthetic_coords(spec);
  Region region = mask_region({3, 40, 77, 100, 260, 300, 511, 450}, spec.size());
  for (int s = 0; s < 2; ++s) {
    const auto c = sensitivity_sweep(src, region, s, spec.param_ranges[s], 7, {1.2, 0.1});
    for (std::size_t k = 0; k < c.sweep.size(); ++k) {
      std::vector<double> p{1.2, 0.1};
      p[s] = c.sweep[k];
      double ref = 0;
      for (auto i : region.indices) {
        const double x[3] = {coords[i * 3], coords[i * 3 + 1], coords[i * 3 + 2]};
        const double y = data::synthetic_value(spec, x, p.data());
        ref += (y > 0 ? 1.0 : -1.0) * data::synthetic_gradient(spec, x, p.data())[s];
      }
      ref /= static_cast<double>(region.indices.size());
      CHECK(std::abs(c.derivative[k] - ref) < 1e-6);
      CHECK(c.sensitivity[k] == std::abs(c.derivative[k]));
    }
  }
}

TEST_CASE("tape and central-difference sensitivities agree on a random model") {
  auto cfg = test::toy_config(3, 8, 2);
  model::FaInrModel<double> m(cfg);
  test::randomize(m.parameters(), 5);
  std::mt19937_64 rng(6);
  ModelSource<double> src(m, unit_stats(), test::random_tensor<double>(200, 3, rng));
  for (int s = 0; s < 2; ++s) {
    const auto c = sensitivity_sweep(src, full_region(200), s, unit_stats().param[s], 9, {1.0, 0.0});
    CHECK(c.max_rel_discrepancy < 1e-3);
    CHECK(std::is_sorted(c.sweep.begin(), c.sweep.end()));
  }
  CHECK_THROWS_AS(sensitivity_sweep(src, full_region(200), 2, {0, 1}, 3, {1.0, 0.0}), ContractError);
  CHECK_THROWS_AS(sensitivity_sweep(src, full_region(200), 0, {-1, 1}, 3, {1.0, 0.0}), ContractError);
}

TEST_CASE("sensitivity does not depend on the order of region coordinates") {
  model::FaInrModel<double> m(test::toy_config());
  test::randomize(m.parameters(), 7);
  std::mt19937_64 rng(8);
  ModelSource<double> src(m, unit_stats(), test::random_tensor<double>(60, 3, rng));
  std::vector<std::size_t> idx{1, 5, 9, 20, 33, 47, 59};
  const auto a = sensitivity_sweep(src, mask_region(idx, 60), 1, {-1, 1}, 4, {0.5, 0.0});
  std::reverse(idx.begin(), idx.end());
  const auto b = sensitivity_sweep(src, mask_region(idx, 60), 1, {-1, 1}, 4, {0.5, 0.0});
  for (std::size_t k = 0; k < 4; ++k)
    CHECK(a.sensitivity[k] == doctest::Approx(b.sensitivity[k]).epsilon(1e-12));
}

TEST_CASE("global sensitivity of affine amplitudes is constant") {
  auto spec = data::make_synthetic_spec({6, 6, 6}, 2, 4, 13);
  for (auto& b : spec.blobs) {
    b.amplitude = 1.0;
    for (auto& row : b.center_slope) std::fill(row.begin(), row.end(), 0.0);
  }
  spec.background = 0.0;
  std::fill(spec.background_slope.begin(), spec.background_slope.end(), 0.0);
  SyntheticSource src(spec);
  const auto curves = global_sensitivity(src, spec.size(), 8);
  REQUIRE(curves.size() == 2);
  for (const auto& c : curves) {
    const auto [lo, hi] = std::minmax_element(c.sensitivity.begin(), c.sensitivity.end());
    CHECK(*hi - *lo <= 0.02 * *hi);
    CHECK(*hi > 0);
  }
  const auto again = global_sensitivity(src, spec.size(), 8);
  CHECK(again[1].sensitivity == curves[1].sensitivity);
  const auto direct = sensitivity_sweep(src, full_region(spec.size()), 0, spec.param_ranges[0], 8,
                                        {1.25, 0.0});
  CHECK(direct.sensitivity == curves[0].sensitivity);

  const auto csv = curves_csv(curves);
  CHECK(csv.rfind("param,region,value,sensitivity,derivative,fd_derivative\n", 0) == 0);
}

TEST_CASE("expert map exports") {
  ExpertMap map;
  map.experts = 3;
  map.top1 = {0, 2, 1, 2};
  CHECK(expert_volume(map) == std::vector<std::uint8_t>{0, 2, 1, 2});
  CHECK(map.members_of(2) == std::vector<std::size_t>{1, 3});
  CHECK(expert_region(map, 2).describe() == "expert:2");
  CHECK(mask_region({0, 3}, 4).describe() == "mask:2");
  CHECK_THROWS_AS(mask_region({4}, 4), ContractError);
}
