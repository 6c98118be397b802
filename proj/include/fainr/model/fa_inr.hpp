#pragma once

#include <span>
#include <vector>

#include "fainr/autodiff/ops.hpp"
#include "fainr/model/config.hpp"
#include "fainr/model/mlp.hpp"
#include "fainr/model/surrogate.hpp"

namespace fainr::model {

// Expert probabilities for one coordinate and the Top-K choice derived from
// them. Weights are the selected probabilities renormalized to sum to one.
template <class T>
struct GateDecision {
  std::vector<T> probs;
  std::vector<int> selected;
  std::vector<T> weights;
};

// Picks the k largest entries, lower index first on ties.
template <class T>
GateDecision<T> route_topk(std::span<const T> probs, int k);

// Multilinear interpolation stencil into a grid of res^d vertices covering
// [-1,1]^d. Vertex (i_0..i_{d-1}) has row index sum_a i_a * res^(d-1-a).
template <class T>
struct GridStencil {
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> index;  // B×2^d
  ad::Tensor<T> weight;                                                       // B×2^d
};

template <class T>
GridStencil<T> grid_stencil(const ad::Tensor<T>& coords, int res);

template <class T>
struct ForwardDiagnostics {
  ad::Tensor<T> gate_probs;                   // B×E
  std::vector<GateDecision<T>> decisions;     // per query
  std::vector<std::vector<int>> expert_rows;  // query indices routed to each expert
  std::vector<ad::Tensor<T>> attention;       // per expert, rows aligned with expert_rows
};

template <class T>
struct Prediction {
  T value{};
  GateDecision<T> decision;
  std::vector<ad::Tensor<T>> attention;  // 1×M per selected expert, in decision order
};

template <class T>
class FaInrModel final : public Surrogate<T> {
 public:
  struct ExpertRef {
    MlpRef encoder;
    std::size_t w_q, w_k, w_v, keys, values;
  };

  // Freshly initialized from config.seed.
  explicit FaInrModel(ModelConfig config);
  // Adopts existing parameters; names and shapes must match the config.
  FaInrModel(ModelConfig config, ad::ParameterSet<T> params);

  const ModelConfig& config() const { return config_; }
  const ad::ParameterSet<T>& parameters() const override { return params_; }
  ad::ParameterSet<T>& parameters() override { return params_; }
  int coord_dim() const override { return config_.coord_dim; }
  int param_dim() const override { return config_.param_dim; }
  std::string kind() const override { return "fa-inr"; }
  const ExpertRef& expert(int e) const { return experts_.at(static_cast<std::size_t>(e)); }

  template <class U>
  FaInrModel<U> cast() const {
    return FaInrModel<U>(config_, params_.template cast<U>());
  }

  GraphOutput<T> build(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& bound,
                       const ad::Tensor<T>& coords, std::span<const int> member,
                       ad::Var<T> params) const override;
  GraphOutput<T> build(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& bound,
                       const ad::Tensor<T>& coords, std::span<const int> member,
                       ad::Var<T> params, ForwardDiagnostics<T>* diag) const;

  // Per-operation entry points; each evaluates on a private tape.
  ad::Tensor<T> encode_query(int expert, const ad::Tensor<T>& coords) const;
  ad::Tensor<T> condition_values(int expert, const ad::Tensor<T>& p) const;
  ad::Tensor<T> attend(int expert, const ad::Tensor<T>& queries, const ad::Tensor<T>& values,
                       ad::Tensor<T>* attention = nullptr) const;
  ad::Tensor<T> gate(const ad::Tensor<T>& coords) const;
  Prediction<T> forward(const ad::Tensor<T>& x, const ad::Tensor<T>& p) const;
  ad::Tensor<T> forward_batch(const ad::Tensor<T>& coords, const ad::Tensor<T>& p,
                              ForwardDiagnostics<T>* diag = nullptr) const;

  // Graph pieces, exposed for tests and analysis.
  ad::Tensor<T> encoder_input(const ad::Tensor<T>& coords) const;
  ad::Var<T> query_graph(int expert, const std::vector<ad::Var<T>>& bound,
                         ad::Var<T> encoder_in) const;
  ad::Var<T> param_embedding_graph(const std::vector<ad::Var<T>>& bound,
                                   ad::Var<T> params) const;
  // Conditioned values for every row of z_p, stacked (J*M)×D_v.
  ad::Var<T> condition_graph(int expert, const std::vector<ad::Var<T>>& bound,
                             ad::Var<T> param_embedding) const;
  ad::Var<T> gate_graph(const std::vector<ad::Var<T>>& bound, const ad::Tensor<T>& coords) const;

 private:
  void resolve();
  void check_coords(const ad::Tensor<T>& coords) const;

  ModelConfig config_;
  ad::ParameterSet<T> params_;
  std::vector<ExpertRef> experts_;
  std::vector<MlpRef> embeds_;
  MlpRef adapter_;
  std::size_t grid_ = 0;
  MlpRef gate_mlp_;
  MlpRef decoder_;
};

}  // namespace fainr::model
