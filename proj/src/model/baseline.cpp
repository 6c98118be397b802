#include "fainr/model/baseline.hpp"

#include <random>

namespace fainr::model {

template <class T>
CoordinateMlp<T>::CoordinateMlp(MlpBaselineConfig config) : config_(config) {
  FAINR_REQUIRE(config_.coord_dim >= 1 && config_.param_dim >= 1 && config_.body.width >= 1,
                ContractError, "invalid baseline config");
  std::mt19937_64 rng(config_.seed);
  body_ = add_mlp(params_, "mlp", config_.coord_dim + config_.param_dim, config_.body, 1, rng);
}

template <class T>
GraphOutput<T> CoordinateMlp<T>::build(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& bound,
                                       const ad::Tensor<T>& coords, std::span<const int> member,
                                       ad::Var<T> params) const {
  FAINR_REQUIRE(coords.cols() == config_.coord_dim && params.cols() == config_.param_dim,
                DimensionError, "baseline input dimensions do not match its config");
  FAINR_REQUIRE(static_cast<Eigen::Index>(member.size()) == coords.rows(), DimensionError,
                "member index count differs from batch size");
  ad::Var<T> p = ad::gather_rows(params, std::vector<int>(member.begin(), member.end()));
  ad::Var<T> in = ad::concat_cols(tape.constant(coords), p);
  return {mlp_forward(body_, bound, in), {}};
}

int matched_width(int coord_dim, int param_dim, int hidden_layers, std::size_t budget) {
  int width = 1;
  while (mlp_parameter_count(coord_dim + param_dim, {width + 1, hidden_layers}, 1) <= budget)
    ++width;
  return width;
}

template class CoordinateMlp<float>;
template class CoordinateMlp<double>;

}  // namespace fainr::model
