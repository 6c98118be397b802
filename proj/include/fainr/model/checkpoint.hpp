#pragma once

#include <iosfwd>
#include <string>

#include "json.hpp"

#include "fainr/model/fa_inr.hpp"

namespace fainr::model {

// File layout (all integers little-endian):
//   "FAINR1"
//   u32 length, UTF-8 JSON document {"format_version", "model", "meta"}
//   repeated until EOF, in ParameterSet order:
//     u32 name length, name bytes, u32 rank, u64 extent × rank, f32 × prod(extents)
inline constexpr char kCheckpointMagic[] = "FAINR1";

struct LoadedCheckpoint {
  FaInrModel<float> model;
  nlohmann::json meta;
};

void save_checkpoint(const FaInrModel<float>& model, const std::string& path,
                     const nlohmann::json& meta = nlohmann::json::object());
LoadedCheckpoint load_checkpoint(const std::string& path);
// Fails with the offending tensor's name when the file was written for a
// different architecture.
LoadedCheckpoint load_checkpoint(const std::string& path, const ModelConfig& expected);

// Bare tensor records as used in the checkpoint body.
void write_tensor_records(std::ostream& out, const ad::ParameterSet<float>& tensors);
ad::ParameterSet<float> read_tensor_records(std::istream& in, const std::string& source);

}  // namespace fainr::model
