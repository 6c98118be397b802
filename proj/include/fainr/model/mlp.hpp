#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "fainr/autodiff/ops.hpp"
#include "fainr/model/config.hpp"

namespace fainr::model {

// Parameter indices of one MLP inside a ParameterSet.
struct MlpRef {
  std::vector<std::size_t> weights;
  std::vector<std::size_t> biases;
};

// Weight of shape in×out drawn from U(-b, b), b = sqrt(3 / in): unit gain
// variance-preserving init.
template <class T>
ad::Tensor<T> uniform_weight(int in, int out, std::mt19937_64& rng) {
  const double bound = std::sqrt(3.0 / in);
  std::uniform_real_distribution<double> dist(-bound, bound);
  ad::Tensor<T> w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(dist(rng));
  return w;
}

template <class T>
ad::Tensor<T> normal_tensor(int rows, int cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  ad::Tensor<T> w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(dist(rng));
  return w;
}

// Registers "<prefix>.l<i>.weight" / ".bias" for every layer. With
// zero_output the last layer starts at zero.
template <class T>
MlpRef add_mlp(ad::ParameterSet<T>& params, const std::string& prefix, int in,
               const MlpShape& shape, int out, std::mt19937_64& rng, bool zero_output = false) {
  MlpRef ref;
  int prev = in;
  for (int l = 0; l <= shape.hidden_layers; ++l) {
    const bool last = l == shape.hidden_layers;
    const int width = last ? out : shape.width;
    const std::string base = prefix + ".l" + std::to_string(l);
    ad::Tensor<T> w = (last && zero_output) ? ad::Tensor<T>::Zero(prev, width)
                                            : uniform_weight<T>(prev, width, rng);
    ref.weights.push_back(params.add(base + ".weight", std::move(w)));
    ref.biases.push_back(params.add(base + ".bias", ad::Tensor<T>::Zero(1, width)));
    prev = width;
  }
  return ref;
}

// Resolves an MLP registered by add_mlp.
template <class T>
MlpRef find_mlp(const ad::ParameterSet<T>& params, const std::string& prefix,
                const MlpShape& shape) {
  MlpRef ref;
  for (int l = 0; l <= shape.hidden_layers; ++l) {
    const std::string base = prefix + ".l" + std::to_string(l);
    ref.weights.push_back(params.index_of(base + ".weight"));
    ref.biases.push_back(params.index_of(base + ".bias"));
  }
  return ref;
}

// GELU on hidden layers, linear output layer.
template <class T>
ad::Var<T> mlp_forward(const MlpRef& ref, const std::vector<ad::Var<T>>& bound, ad::Var<T> x) {
  const std::size_t layers = ref.weights.size();
  for (std::size_t l = 0; l < layers; ++l) {
    x = ad::add_row(ad::matmul(x, bound[ref.weights[l]]), bound[ref.biases[l]]);
    if (l + 1 < layers) x = ad::gelu(x);
  }
  return x;
}

}  // namespace fainr::model
