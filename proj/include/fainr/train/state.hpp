#pragma once

#include <string>

#include "fainr/train/optim.hpp"

namespace fainr::train {

// Adam moments keyed by parameter name, plus the step counter:
//   "FAINRA1", u64 step, tensor records ("first/<name>", "second/<name>").
void save_adam_state(const AdamState<float>& state, const ad::ParameterSet<float>& params,
                     const std::string& path);
AdamState<float> load_adam_state(const ad::ParameterSet<float>& params, const std::string& path);

}  // namespace fainr::train
