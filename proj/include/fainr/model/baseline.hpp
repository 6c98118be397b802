#pragma once

#include <cstdint>

#include "fainr/model/mlp.hpp"
#include "fainr/model/surrogate.hpp"

namespace fainr::model {

struct MlpBaselineConfig {
  int coord_dim = 3;
  int param_dim = 2;
  MlpShape body{128, 4};
  std::uint64_t seed = 0;
};

// Plain coordinate network: (x ⊕ p) -> GELU MLP -> y. Reference point for
// the memory-bank encoder at equal parameter count.
template <class T>
class CoordinateMlp final : public Surrogate<T> {
 public:
  explicit CoordinateMlp(MlpBaselineConfig config);

  const MlpBaselineConfig& config() const { return config_; }
  const ad::ParameterSet<T>& parameters() const override { return params_; }
  ad::ParameterSet<T>& parameters() override { return params_; }
  int coord_dim() const override { return config_.coord_dim; }
  int param_dim() const override { return config_.param_dim; }
  std::string kind() const override { return "coordinate-mlp"; }

  GraphOutput<T> build(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& bound,
                       const ad::Tensor<T>& coords, std::span<const int> member,
                       ad::Var<T> params) const override;

 private:
  MlpBaselineConfig config_;
  ad::ParameterSet<T> params_;
  MlpRef body_;
};

// Widest hidden layer whose parameter count does not exceed `budget`.
int matched_width(int coord_dim, int param_dim, int hidden_layers, std::size_t budget);

}  // namespace fainr::model
