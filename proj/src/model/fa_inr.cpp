#include "fainr/model/fa_inr.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace fainr::model {

namespace {

template <class T>
ad::ParameterSet<T> initial_parameters(const ModelConfig& c) {
  std::mt19937_64 rng(c.seed);
  ad::ParameterSet<T> p;
  for (int e = 0; e < c.experts; ++e) {
    const std::string base = "expert" + std::to_string(e);
    add_mlp(p, base + ".encoder", c.encoder_input_dim(), c.encoder, c.query_dim, rng);
    p.add(base + ".w_q", uniform_weight<T>(c.query_dim, c.key_dim, rng));
    p.add(base + ".w_k", uniform_weight<T>(c.key_dim, c.key_dim, rng));
    p.add(base + ".w_v", uniform_weight<T>(c.value_dim, c.value_dim, rng));
    p.add(base + ".keys", normal_tensor<T>(c.memory_slots, c.key_dim,
                                           1.0 / std::sqrt(double(c.key_dim)), rng));
    p.add(base + ".values", normal_tensor<T>(c.memory_slots, c.value_dim,
                                             1.0 / std::sqrt(double(c.value_dim)), rng));
  }
  for (int s = 0; s < c.param_dim; ++s)
    add_mlp(p, "embed" + std::to_string(s), 1, c.embed, c.param_embed_dim, rng);
  add_mlp(p, "adapter", c.value_dim + c.param_embed_dim, c.adapter, c.value_dim, rng, true);
  p.add("gate.grid",
        normal_tensor<T>(static_cast<int>(c.gate_vertices()), c.gate_feat_dim, 0.1, rng));
  add_mlp(p, "gate.mlp", c.gate_feat_dim, c.gate, c.experts, rng);
  add_mlp(p, "decoder", c.value_dim, c.decoder, 1, rng);
  return p;
}

}  // namespace

template <class T>
GateDecision<T> route_topk(std::span<const T> probs, int k) {
  const int n = static_cast<int>(probs.size());
  FAINR_REQUIRE(k >= 1 && k <= n, ContractError,
                "route_topk: k=" + std::to_string(k) + " with " + std::to_string(n) + " experts");
  GateDecision<T> d;
  d.probs.assign(probs.begin(), probs.end());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return probs[a] > probs[b]; });
  d.selected.assign(order.begin(), order.begin() + k);
  if (k == n) {
    // Dense routing uses the probabilities as they are.
    for (int e : d.selected) d.weights.push_back(probs[e]);
    return d;
  }
  T total = 0;
  for (int e : d.selected) total += probs[e];
  FAINR_REQUIRE(total > T(0), ContractError, "route_topk: selected probabilities sum to zero");
  for (int e : d.selected) d.weights.push_back(probs[e] / total);
  return d;
}

template <class T>
GridStencil<T> grid_stencil(const ad::Tensor<T>& coords, int res) {
  FAINR_REQUIRE(res >= 2, ContractError, "grid resolution must be >= 2");
  const Eigen::Index b_count = coords.rows();
  const int d = static_cast<int>(coords.cols());
  const int corners = 1 << d;
  GridStencil<T> s;
  s.index.resize(b_count, corners);
  s.weight.resize(b_count, corners);
  std::vector<int> base(static_cast<std::size_t>(d));
  std::vector<T> frac(static_cast<std::size_t>(d));
  for (Eigen::Index b = 0; b < b_count; ++b) {
    for (int a = 0; a < d; ++a) {
      const T t = (coords(b, a) + T(1)) * T(0.5) * T(res - 1);
      int i0 = static_cast<int>(std::floor(t));
      i0 = std::clamp(i0, 0, res - 2);
      base[a] = i0;
      frac[a] = std::clamp(t - T(i0), T(0), T(1));
    }
    for (int c = 0; c < corners; ++c) {
      int idx = 0;
      T w = 1;
      for (int a = 0; a < d; ++a) {
        const int bit = (c >> a) & 1;
        idx = idx * res + base[a] + bit;
        w *= bit ? frac[a] : T(1) - frac[a];
      }
      s.index(b, c) = idx;
      s.weight(b, c) = w;
    }
  }
  return s;
}

template <class T>
FaInrModel<T>::FaInrModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  params_ = initial_parameters<T>(config_);
  resolve();
}

template <class T>
FaInrModel<T>::FaInrModel(ModelConfig config, ad::ParameterSet<T> params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  const auto expected = initial_parameters<T>(config_);
  FAINR_REQUIRE(expected.size() == params_.size(), ContractError,
                "model has " + std::to_string(params_.size()) + " tensors, config implies " +
                    std::to_string(expected.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    FAINR_REQUIRE(expected.name(i) == params_.name(i), ContractError,
                  "tensor " + std::to_string(i) + " is '" + params_.name(i) + "', expected '" +
                      expected.name(i) + "'");
    FAINR_REQUIRE(expected.value(i).rows() == params_.value(i).rows() &&
                      expected.value(i).cols() == params_.value(i).cols(),
                  ContractError,
                  "tensor '" + expected.name(i) + "' has shape " +
                      ad::shape_string(params_.value(i)) + ", config implies " +
                      ad::shape_string(expected.value(i)));
  }
  resolve();
}

template <class T>
void FaInrModel<T>::resolve() {
  const ModelConfig& c = config_;
  experts_.clear();
  for (int e = 0; e < c.experts; ++e) {
    const std::string base = "expert" + std::to_string(e);
    experts_.push_back({find_mlp(params_, base + ".encoder", c.encoder),
                        params_.index_of(base + ".w_q"), params_.index_of(base + ".w_k"),
                        params_.index_of(base + ".w_v"), params_.index_of(base + ".keys"),
                        params_.index_of(base + ".values")});
  }
  embeds_.clear();
  for (int s = 0; s < c.param_dim; ++s)
    embeds_.push_back(find_mlp(params_, "embed" + std::to_string(s), c.embed));
  adapter_ = find_mlp(params_, "adapter", c.adapter);
  grid_ = params_.index_of("gate.grid");
  gate_mlp_ = find_mlp(params_, "gate.mlp", c.gate);
  decoder_ = find_mlp(params_, "decoder", c.decoder);
}

template <class T>
void FaInrModel<T>::check_coords(const ad::Tensor<T>& coords) const {
  FAINR_REQUIRE(coords.cols() == config_.coord_dim, DimensionError,
                "coordinates have " + std::to_string(coords.cols()) + " columns, model expects " +
                    std::to_string(config_.coord_dim));
  const T limit = T(1) + T(1e-6);
  for (Eigen::Index i = 0; i < coords.size(); ++i) {
    const T v = coords.data()[i];
    FAINR_REQUIRE(std::isfinite(static_cast<double>(v)) && std::abs(v) <= limit, ContractError,
                  "coordinate " + std::to_string(static_cast<double>(v)) +
                      " outside the normalized cube [-1,1]");
  }
}

template <class T>
ad::Tensor<T> FaInrModel<T>::encoder_input(const ad::Tensor<T>& coords) const {
  const int bands = config_.fourier_bands;
  if (bands == 0) return coords;
  const Eigen::Index d = coords.cols();
  ad::Tensor<T> out(coords.rows(), d * (1 + 2 * bands));
  out.leftCols(d) = coords;
  for (int l = 0; l < bands; ++l) {
    const T freq = std::numbers::pi_v<T> * static_cast<T>(1 << l);
    out.middleCols(d * (1 + 2 * l), d) = (coords.array() * freq).sin().matrix();
    out.middleCols(d * (2 + 2 * l), d) = (coords.array() * freq).cos().matrix();
  }
  return out;
}

template <class T>
ad::Var<T> FaInrModel<T>::query_graph(int expert, const std::vector<ad::Var<T>>& bound,
                                      ad::Var<T> encoder_in) const {
  const ExpertRef& ex = experts_.at(static_cast<std::size_t>(expert));
  return ad::matmul(mlp_forward(ex.encoder, bound, encoder_in), bound[ex.w_q]);
}

template <class T>
ad::Var<T> FaInrModel<T>::param_embedding_graph(const std::vector<ad::Var<T>>& bound,
                                                ad::Var<T> params) const {
  FAINR_REQUIRE(params.cols() == config_.param_dim, ContractError,
                "parameter vector has " + std::to_string(params.cols()) +
                    " entries, model expects " + std::to_string(config_.param_dim));
  ad::Var<T> z = mlp_forward(embeds_[0], bound, ad::column(params, 0));
  for (int s = 1; s < config_.param_dim; ++s)
    z = ad::mul(z, mlp_forward(embeds_[static_cast<std::size_t>(s)], bound, ad::column(params, s)));
  return z;
}

template <class T>
ad::Var<T> FaInrModel<T>::condition_graph(int expert, const std::vector<ad::Var<T>>& bound,
                                          ad::Var<T> param_embedding) const {
  const ExpertRef& ex = experts_.at(static_cast<std::size_t>(expert));
  const int m_slots = config_.memory_slots;
  const int members = static_cast<int>(param_embedding.rows());
  std::vector<int> tile, repeat;
  tile.reserve(static_cast<std::size_t>(members * m_slots));
  repeat.reserve(tile.capacity());
  for (int j = 0; j < members; ++j)
    for (int i = 0; i < m_slots; ++i) {
      tile.push_back(i);
      repeat.push_back(j);
    }
  ad::Var<T> v = members == 1 ? bound[ex.values] : ad::gather_rows(bound[ex.values], tile);
  ad::Var<T> z = ad::gather_rows(param_embedding, std::move(repeat));
  ad::Var<T> delta = mlp_forward(adapter_, bound, ad::concat_cols(v, z));
  return ad::add(v, delta);
}

template <class T>
ad::Var<T> FaInrModel<T>::gate_graph(const std::vector<ad::Var<T>>& bound,
                                     const ad::Tensor<T>& coords) const {
  auto stencil = grid_stencil(coords, config_.gate_grid_res);
  ad::Var<T> feat =
      ad::weighted_gather(bound[grid_], std::move(stencil.index), std::move(stencil.weight));
  return ad::softmax_rows(mlp_forward(gate_mlp_, bound, feat));
}

template <class T>
GraphOutput<T> FaInrModel<T>::build(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& bound,
                                    const ad::Tensor<T>& coords, std::span<const int> member,
                                    ad::Var<T> params) const {
  return build(tape, bound, coords, member, params, nullptr);
}

template <class T>
GraphOutput<T> FaInrModel<T>::build(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& bound,
                                    const ad::Tensor<T>& coords, std::span<const int> member,
                                    ad::Var<T> params, ForwardDiagnostics<T>* diag) const {
  check_coords(coords);
  const Eigen::Index batch = coords.rows();
  FAINR_REQUIRE(batch >= 1, ContractError, "empty query batch");
  FAINR_REQUIRE(static_cast<Eigen::Index>(member.size()) == batch, DimensionError,
                "member index count differs from batch size");
  const int members = static_cast<int>(params.rows());
  for (int j : member)
    FAINR_REQUIRE(j >= 0 && j < members, DimensionError, "member index out of range");
  const int experts = config_.experts, k = config_.top_k, m_slots = config_.memory_slots;

  ad::Var<T> phi = gate_graph(bound, coords);
  const ad::Tensor<T>& probs = phi.value();
  ad::Tensor<T> mask = ad::Tensor<T>::Zero(batch, experts);
  std::vector<std::vector<int>> rows(static_cast<std::size_t>(experts));
  if (diag) diag->decisions.clear();
  for (Eigen::Index b = 0; b < batch; ++b) {
    auto decision = route_topk<T>(std::span<const T>(probs.row(b).data(), experts), k);
    for (int e : decision.selected) {
      mask(b, e) = 1;
      rows[static_cast<std::size_t>(e)].push_back(static_cast<int>(b));
    }
    if (diag) diag->decisions.push_back(std::move(decision));
  }
  ad::Var<T> weights = k == experts ? phi : ad::normalize_rows(ad::mul(phi, tape.constant(mask)));

  ad::Var<T> zp = param_embedding_graph(bound, params);
  const ad::Tensor<T> enc_in = encoder_input(coords);
  const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(config_.key_dim));
  if (diag) {
    diag->gate_probs = probs;
    diag->expert_rows.assign(static_cast<std::size_t>(experts), {});
    diag->attention.assign(static_cast<std::size_t>(experts), ad::Tensor<T>());
  }

  ad::Var<T> zbar;
  for (int e = 0; e < experts; ++e) {
    auto& idx = rows[static_cast<std::size_t>(e)];
    if (idx.empty()) continue;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return member[a] < member[b]; });
    std::vector<ad::Segment> segments;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const Eigen::Index blk = member[idx[i]];
      if (segments.empty() || segments.back().block != blk)
        segments.push_back({static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i), blk});
      segments.back().end = static_cast<Eigen::Index>(i) + 1;
    }
    ad::Tensor<T> xin(static_cast<Eigen::Index>(idx.size()), enc_in.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
      xin.row(static_cast<Eigen::Index>(i)) = enc_in.row(idx[i]);

    const ExpertRef& ex = experts_[static_cast<std::size_t>(e)];
    ad::Var<T> q = query_graph(e, bound, tape.constant(std::move(xin)));
    ad::Var<T> keys = ad::matmul(bound[ex.keys], bound[ex.w_k]);
    ad::Var<T> attn = ad::softmax_rows(ad::scale(ad::matmul_nt(q, keys), inv_sqrt_dk));
    ad::Var<T> vp = ad::matmul(condition_graph(e, bound, zp), bound[ex.w_v]);
    ad::Var<T> z = ad::segmented_matmul(attn, vp, std::move(segments), m_slots);
    ad::Var<T> w = ad::gather_rows(ad::column(weights, e), idx);
    ad::Var<T> contrib = ad::scatter_rows(ad::mul_col(z, w), idx, batch);
    zbar = zbar.valid() ? ad::add(zbar, contrib) : contrib;
    if (diag) {
      diag->expert_rows[static_cast<std::size_t>(e)] = idx;
      diag->attention[static_cast<std::size_t>(e)] = attn.value();
    }
  }

  GraphOutput<T> out;
  out.prediction = mlp_forward(decoder_, bound, zbar);
  if (config_.balance_weight > 0) {
    ad::Var<T> importance = ad::mean_rows(phi);
    out.auxiliary = ad::scale(ad::sum(ad::square(importance)),
                              static_cast<T>(config_.balance_weight * experts));
  }
  return out;
}

template <class T>
ad::Tensor<T> FaInrModel<T>::encode_query(int expert, const ad::Tensor<T>& coords) const {
  check_coords(coords);
  ad::Tape<T> tape;
  auto bound = tape.bind(params_, false);
  return query_graph(expert, bound, tape.constant(encoder_input(coords))).value();
}

template <class T>
ad::Tensor<T> FaInrModel<T>::condition_values(int expert, const ad::Tensor<T>& p) const {
  FAINR_REQUIRE(p.rows() == 1, ContractError, "condition_values expects a single parameter row");
  ad::Tape<T> tape;
  auto bound = tape.bind(params_, false);
  return condition_graph(expert, bound, param_embedding_graph(bound, tape.constant(p))).value();
}

template <class T>
ad::Tensor<T> FaInrModel<T>::attend(int expert, const ad::Tensor<T>& queries,
                                    const ad::Tensor<T>& values, ad::Tensor<T>* attention) const {
  const ExpertRef& ex = experts_.at(static_cast<std::size_t>(expert));
  FAINR_REQUIRE(queries.cols() == config_.key_dim, DimensionError,
                "attend: queries " + ad::shape_string(queries) + " do not match key dim");
  FAINR_REQUIRE(values.rows() == config_.memory_slots && values.cols() == config_.value_dim,
                DimensionError, "attend: values " + ad::shape_string(values) +
                                    " do not match the memory bank");
  ad::Tape<T> tape;
  auto bound = tape.bind(params_, false);
  const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(config_.key_dim));
  ad::Var<T> keys = ad::matmul(bound[ex.keys], bound[ex.w_k]);
  ad::Var<T> attn =
      ad::softmax_rows(ad::scale(ad::matmul_nt(tape.constant(queries), keys), inv_sqrt_dk));
  if (attention) *attention = attn.value();
  return ad::matmul(attn, ad::matmul(tape.constant(values), bound[ex.w_v])).value();
}

template <class T>
ad::Tensor<T> FaInrModel<T>::gate(const ad::Tensor<T>& coords) const {
  check_coords(coords);
  ad::Tape<T> tape;
  auto bound = tape.bind(params_, false);
  return gate_graph(bound, coords).value();
}

template <class T>
Prediction<T> FaInrModel<T>::forward(const ad::Tensor<T>& x, const ad::Tensor<T>& p) const {
  FAINR_REQUIRE(x.rows() == 1, ContractError, "forward takes a single coordinate");
  ForwardDiagnostics<T> diag;
  const ad::Tensor<T> y = forward_batch(x, p, &diag);
  Prediction<T> out;
  out.value = y(0, 0);
  out.decision = diag.decisions.at(0);
  for (int e : out.decision.selected) out.attention.push_back(diag.attention[e]);
  return out;
}

template <class T>
ad::Tensor<T> FaInrModel<T>::forward_batch(const ad::Tensor<T>& coords, const ad::Tensor<T>& p,
                                           ForwardDiagnostics<T>* diag) const {
  FAINR_REQUIRE(p.rows() == 1, ContractError, "forward_batch takes one parameter vector");
  ad::Tape<T> tape;
  auto bound = tape.bind(params_, false);
  std::vector<int> member(static_cast<std::size_t>(coords.rows()), 0);
  return build(tape, bound, coords, member, tape.constant(p), diag).prediction.value();
}

template GateDecision<float> route_topk(std::span<const float>, int);
template GateDecision<double> route_topk(std::span<const double>, int);
template GridStencil<float> grid_stencil(const ad::Tensor<float>&, int);
template GridStencil<double> grid_stencil(const ad::Tensor<double>&, int);
template class FaInrModel<float>;
template class FaInrModel<double>;

}  // namespace fainr::model
