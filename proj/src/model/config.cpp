#include "fainr/model/config.hpp"

#include <set>
#include <string>

#include "fainr/error.hpp"

namespace fainr::model {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* name) {
    FAINR_REQUIRE(v >= 1, ContractError, std::string("model config: ") + name + " must be >= 1");
  };
  positive(coord_dim, "coord_dim");
  positive(param_dim, "param_dim");
  positive(experts, "experts");
  positive(memory_slots, "memory_slots");
  positive(query_dim, "query_dim");
  positive(key_dim, "key_dim");
  positive(value_dim, "value_dim");
  positive(param_embed_dim, "param_embed_dim");
  positive(gate_feat_dim, "gate_feat_dim");
  FAINR_REQUIRE(top_k >= 1 && top_k <= experts, ContractError,
                "model config: top_k must lie in [1, experts]");
  FAINR_REQUIRE(gate_grid_res >= 2, ContractError, "model config: gate_grid_res must be >= 2");
  FAINR_REQUIRE(fourier_bands >= 0, ContractError, "model config: fourier_bands must be >= 0");
  FAINR_REQUIRE(balance_weight >= 0.0, ContractError,
                "model config: balance_weight must be >= 0");
  for (const auto* s : {&encoder, &embed, &adapter, &gate, &decoder}) {
    FAINR_REQUIRE(s->hidden_layers >= 0 && (s->hidden_layers == 0 || s->width >= 1),
                  ContractError, "model config: invalid MLP shape");
  }
  FAINR_REQUIRE(gate_vertices() < (std::size_t{1} << 31), ContractError,
                "model config: gating grid too large");
}

std::size_t ModelConfig::gate_vertices() const {
  std::size_t n = 1;
  for (int a = 0; a < coord_dim; ++a) n *= static_cast<std::size_t>(gate_grid_res);
  return n;
}

std::size_t mlp_parameter_count(int in, const MlpShape& shape, int out) {
  std::size_t n = 0;
  int prev = in;
  for (int l = 0; l < shape.hidden_layers; ++l) {
    n += static_cast<std::size_t>(prev) * shape.width + shape.width;
    prev = shape.width;
  }
  return n + static_cast<std::size_t>(prev) * out + out;
}

std::size_t expected_parameter_count(const ModelConfig& c) {
  const std::size_t per_expert =
      mlp_parameter_count(c.encoder_input_dim(), c.encoder, c.query_dim) +
      static_cast<std::size_t>(c.query_dim) * c.key_dim +
      static_cast<std::size_t>(c.key_dim) * c.key_dim +
      static_cast<std::size_t>(c.value_dim) * c.value_dim +
      static_cast<std::size_t>(c.memory_slots) * (c.key_dim + c.value_dim);
  return c.experts * per_expert +
         c.param_dim * mlp_parameter_count(1, c.embed, c.param_embed_dim) +
         mlp_parameter_count(c.value_dim + c.param_embed_dim, c.adapter, c.value_dim) +
         c.gate_vertices() * c.gate_feat_dim +
         mlp_parameter_count(c.gate_feat_dim, c.gate, c.experts) +
         mlp_parameter_count(c.value_dim, c.decoder, 1);
}

void to_json(nlohmann::json& j, const MlpShape& s) {
  j = {{"width", s.width}, {"hidden_layers", s.hidden_layers}};
}

void from_json(const nlohmann::json& j, MlpShape& s) {
  for (const auto& [k, v] : j.items()) {
    if (k == "width") s.width = v.get<int>();
    else if (k == "hidden_layers") s.hidden_layers = v.get<int>();
    else throw ContractError("model config: unknown MLP key '" + k + "'");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"coord_dim", c.coord_dim},
       {"param_dim", c.param_dim},
       {"experts", c.experts},
       {"memory_slots", c.memory_slots},
       {"query_dim", c.query_dim},
       {"key_dim", c.key_dim},
       {"value_dim", c.value_dim},
       {"param_embed_dim", c.param_embed_dim},
       {"top_k", c.top_k},
       {"gate_grid_res", c.gate_grid_res},
       {"gate_feat_dim", c.gate_feat_dim},
       {"fourier_bands", c.fourier_bands},
       {"encoder", c.encoder},
       {"embed", c.embed},
       {"adapter", c.adapter},
       {"gate", c.gate},
       {"decoder", c.decoder},
       {"balance_weight", c.balance_weight},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  FAINR_REQUIRE(j.is_object(), ContractError, "model config must be an object");
  for (const auto& [k, v] : j.items()) {
    if (k == "coord_dim") c.coord_dim = v.get<int>();
    else if (k == "param_dim") c.param_dim = v.get<int>();
    else if (k == "experts") c.experts = v.get<int>();
    else if (k == "memory_slots") c.memory_slots = v.get<int>();
    else if (k == "query_dim") c.query_dim = v.get<int>();
    else if (k == "key_dim") c.key_dim = v.get<int>();
    else if (k == "value_dim") c.value_dim = v.get<int>();
    else if (k == "param_embed_dim") c.param_embed_dim = v.get<int>();
    else if (k == "top_k") c.top_k = v.get<int>();
    else if (k == "gate_grid_res") c.gate_grid_res = v.get<int>();
    else if (k == "gate_feat_dim") c.gate_feat_dim = v.get<int>();
    else if (k == "fourier_bands") c.fourier_bands = v.get<int>();
    else if (k == "encoder") from_json(v, c.encoder);
    else if (k == "embed") from_json(v, c.embed);
    else if (k == "adapter") from_json(v, c.adapter);
    else if (k == "gate") from_json(v, c.gate);
    else if (k == "decoder") from_json(v, c.decoder);
    else if (k == "balance_weight") c.balance_weight = v.get<double>();
    else if (k == "seed") c.seed = v.get<std::uint64_t>();
    else throw ContractError("model config: unknown key '" + k + "'");
  }
}

}  // namespace fainr::model
