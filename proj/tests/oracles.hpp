#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "fainr/model/fa_inr.hpp"

namespace fainr::test {

// Decoder evaluated straight from the stored weights: GELU between layers,
// linear last layer.
inline double decode_reference(const ad::ParameterSet<double>& p, const Eigen::RowVectorXd& z) {
  auto name = [](int l, const char* what) { return "decoder.l" + std::to_string(l) + "." + what; };
  Eigen::RowVectorXd h = z;
  for (int l = 0; p.contains(name(l, "weight")); ++l) {
    h = h * p.value(p.index_of(name(l, "weight"))) + p.value(p.index_of(name(l, "bias")));
    if (p.contains(name(l + 1, "weight")))
      h = h.unaryExpr([](double x) { return 0.5 * x * (1 + std::erf(x / std::numbers::sqrt2)); });
  }
  return h(0);
}

// z_e for one query, assembled from the per-expert entry points.
inline Eigen::RowVectorXd expert_feature(const model::FaInrModel<double>& m, int e,
                                         const ad::Tensor<double>& x, const ad::Tensor<double>& p) {
  return m.attend(e, m.encode_query(e, x), m.condition_values(e, p));
}

// Reference output when the experts in `chosen` are mixed with `weights`.
inline double mixture_reference(const model::FaInrModel<double>& m, const ad::Tensor<double>& x,
                                const ad::Tensor<double>& p, const std::vector<int>& chosen,
                                const std::vector<double>& weights) {
  Eigen::RowVectorXd z = Eigen::RowVectorXd::Zero(m.config().value_dim);
  for (std::size_t r = 0; r < chosen.size(); ++r) z += weights[r] * expert_feature(m, chosen[r], x, p);
  return decode_reference(m.parameters(), z);
}

}  // namespace fainr::test
