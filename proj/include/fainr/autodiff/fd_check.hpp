#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "fainr/autodiff/tape.hpp"

namespace fainr::ad {

// Builds a scalar root on `tape` from the parameter leaves in `bound`.
template <class T>
using ScalarGraph = std::function<Var<T>(Tape<T>& tape, const std::vector<Var<T>>& bound)>;

struct FdReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  long worst_index = -1;
  std::size_t checked = 0;
};

template <class T>
GradientMap<T> tape_gradient(const ScalarGraph<T>& f, const ParameterSet<T>& params) {
  Tape<T> tape;
  auto bound = tape.bind(params);
  return backward(f(tape, bound), bound);
}

template <class T>
T evaluate_scalar(const ScalarGraph<T>& f, const ParameterSet<T>& params) {
  Tape<T> tape;
  auto bound = tape.bind(params, false);
  return f(tape, bound).value()(0, 0);
}

// Central differences, one scalar at a time.
template <class T>
GradientMap<T> fd_gradient(const ScalarGraph<T>& f, ParameterSet<T>& params, T epsilon) {
  FAINR_REQUIRE(epsilon > T(0), ContractError, "fd epsilon must be positive");
  GradientMap<T> out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<T>& w = params.value(p);
    Tensor<T> g(w.rows(), w.cols());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const T saved = w.data()[i];
      w.data()[i] = saved + epsilon;
      const T up = evaluate_scalar(f, params);
      w.data()[i] = saved - epsilon;
      const T down = evaluate_scalar(f, params);
      w.data()[i] = saved;
      g.data()[i] = (up - down) / (T(2) * epsilon);
    }
    out.push_back(std::move(g));
  }
  return out;
}

// Worst |a - b| / max(|a|, |b|, 1e-12) across all entries.
template <class T>
FdReport compare_gradients(const GradientMap<T>& tape_grads, const GradientMap<T>& fd_grads,
                           const ParameterSet<T>& params) {
  FAINR_REQUIRE(tape_grads.size() == fd_grads.size() && tape_grads.size() == params.size(),
                DimensionError, "gradient maps do not align with the parameter set");
  FdReport r;
  for (std::size_t p = 0; p < params.size(); ++p) {
    const Tensor<T>& a = tape_grads[p];
    const Tensor<T>& b = fd_grads[p];
    FAINR_REQUIRE(a.size() == b.size(), DimensionError,
                  "gradient shape mismatch for '" + params.name(p) + "'");
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      const double ga = static_cast<double>(a.data()[i]);
      const double gf = static_cast<double>(b.data()[i]);
      const double denom = std::max({std::abs(ga), std::abs(gf), 1e-12});
      const double err = std::abs(ga - gf) / denom;
      ++r.checked;
      if (err > r.max_rel_error) {
        r.max_rel_error = err;
        r.worst_parameter = params.name(p);
        r.worst_index = static_cast<long>(i);
      }
    }
  }
  return r;
}

template <class T>
FdReport fd_check(const ScalarGraph<T>& f, ParameterSet<T>& params, T epsilon) {
  FAINR_REQUIRE(epsilon > T(0), ContractError, "fd epsilon must be positive");
  auto tape_grads = tape_gradient(f, params);
  auto fd_grads = fd_gradient(f, params, epsilon);
  return compare_gradients(tape_grads, fd_grads, params);
}

}  // namespace fainr::ad
