#pragma once

#include "json.hpp"

#include <cstddef>
#include <cstdint>

namespace fainr::model {

// Hidden layers of an MLP; zero hidden layers means a single linear map.
struct MlpShape {
  int width = 64;
  int hidden_layers = 1;
};

struct ModelConfig {
  int coord_dim = 3;         // d
  int param_dim = 2;         // m
  int experts = 4;           // E
  int memory_slots = 256;    // M, key-value pairs per expert
  int query_dim = 64;        // D_q, encoder output
  int key_dim = 32;          // D_k
  int value_dim = 32;        // D_v
  int param_embed_dim = 16;  // D_p
  int top_k = 2;
  int gate_grid_res = 16;
  int gate_feat_dim = 8;
  // Fourier bands applied to coordinates before the encoder MLP; 0 = raw.
  int fourier_bands = 0;

  MlpShape encoder{64, 2};
  MlpShape embed{16, 1};
  MlpShape adapter{64, 1};
  MlpShape gate{0, 0};
  MlpShape decoder{64, 2};

  // Optional importance-balancing penalty on gate probabilities.
  double balance_weight = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  int encoder_input_dim() const { return coord_dim * (1 + 2 * fourier_bands); }
  std::size_t gate_vertices() const;
};

// Closed-form learnable scalar count for a config.
std::size_t expected_parameter_count(const ModelConfig& c);
std::size_t mlp_parameter_count(int in, const MlpShape& shape, int out);

void to_json(nlohmann::json& j, const MlpShape& s);
void from_json(const nlohmann::json& j, MlpShape& s);
void to_json(nlohmann::json& j, const ModelConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace fainr::model
