#pragma once

#include <random>

#include "fainr/autodiff/tensor.hpp"
#include "fainr/model/config.hpp"

namespace fainr::test {

template <class T>
ad::Tensor<T> random_tensor(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ad::Tensor<T> t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(u(rng));
  return t;
}

// Small architecture used wherever a whole model must be evaluated many times.
inline model::ModelConfig toy_config(int experts = 2, int slots = 8, int top_k = 2) {
  model::ModelConfig c;
  c.coord_dim = 3;
  c.param_dim = 2;
  c.experts = experts;
  c.memory_slots = slots;
  c.query_dim = 6;
  c.key_dim = 4;
  c.value_dim = 5;
  c.param_embed_dim = 3;
  c.top_k = top_k;
  c.gate_grid_res = 3;
  c.gate_feat_dim = 3;
  c.encoder = {6, 1};
  c.embed = {4, 1};
  c.adapter = {6, 1};
  c.gate = {0, 0};
  c.decoder = {6, 1};
  c.seed = 3;
  return c;
}

// Replaces every parameter with random values so no path is inactive.
template <class T>
void randomize(ad::ParameterSet<T>& params, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = params.value(i);
    v = random_tensor<T>(v.rows(), v.cols(), rng, -scale, scale);
  }
}

}  // namespace fainr::test
