#pragma once

#include <cmath>
#include <string>

#include "fainr/autodiff/ops.hpp"

namespace fainr::train {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class T>
struct AdamState {
  std::vector<ad::Tensor<T>> first;
  std::vector<ad::Tensor<T>> second;
  long step = 0;
};

template <class T>
AdamState<T> make_adam_state(const ad::ParameterSet<T>& params) {
  AdamState<T> s;
  for (const auto& e : params) {
    s.first.push_back(ad::Tensor<T>::Zero(e.value.rows(), e.value.cols()));
    s.second.push_back(ad::Tensor<T>::Zero(e.value.rows(), e.value.cols()));
  }
  return s;
}

// One bias-corrected Adam update. A non-finite gradient aborts the whole step
// before anything is modified.
template <class T>
void adam_step(ad::ParameterSet<T>& params, const ad::GradientMap<T>& grads, AdamState<T>& state,
               double lr, const AdamConfig& cfg = {}) {
  FAINR_REQUIRE(grads.size() == params.size() && state.first.size() == params.size() &&
                    state.second.size() == params.size(),
                DimensionError, "adam: gradient/state count differs from parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) {
    FAINR_REQUIRE(grads[i].rows() == params.value(i).rows() &&
                      grads[i].cols() == params.value(i).cols() &&
                      state.first[i].size() == params.value(i).size(),
                  DimensionError, "adam: shape mismatch for '" + params.name(i) + "'");
    FAINR_REQUIRE(ad::all_finite(grads[i]), NumericError,
                  "adam: non-finite gradient for '" + params.name(i) + "'");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(cfg.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = state.first[i].array();
    auto v = state.second[i].array();
    const auto g = grads[i].array();
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.square();
    if (lr != 0.0)
      params.value(i).array() -= step_size * m / (v.sqrt() * inv_sqrt_bc2 + eps);
  }
}

// Mean of squared differences as a scalar node.
template <class T>
ad::Var<T> mse_loss(ad::Var<T> pred, ad::Var<T> target) {
  FAINR_REQUIRE(pred.value().size() >= 1, ContractError, "mse_loss: empty batch");
  return ad::mean(ad::square(ad::sub(pred, target)));
}

}  // namespace fainr::train
