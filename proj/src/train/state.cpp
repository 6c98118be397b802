#include "fainr/train/state.hpp"

#include <cstring>
#include <fstream>

#include "fainr/model/checkpoint.hpp"

namespace fainr::train {

namespace {
constexpr char kMagic[] = "FAINRA1";
}

void save_adam_state(const AdamState<float>& state, const ad::ParameterSet<float>& params,
                     const std::string& path) {
  FAINR_REQUIRE(state.first.size() == params.size(), ContractError,
                "optimizer state does not match the parameter set");
  ad::ParameterSet<float> records;
  for (std::size_t i = 0; i < params.size(); ++i) {
    records.add("first/" + params.name(i), state.first[i]);
    records.add("second/" + params.name(i), state.second[i]);
  }
  std::ofstream out(path, std::ios::binary);
  FAINR_REQUIRE(out.good(), LoadError, "cannot write optimizer state '" + path + "'");
  out.write(kMagic, 7);
  const auto step = static_cast<std::uint64_t>(state.step);
  out.write(reinterpret_cast<const char*>(&step), sizeof(step));
  model::write_tensor_records(out, records);
  FAINR_REQUIRE(out.good(), LoadError, "write to '" + path + "' failed");
}

AdamState<float> load_adam_state(const ad::ParameterSet<float>& params, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  FAINR_REQUIRE(in.good(), LoadError, "cannot open optimizer state '" + path + "'");
  char magic[7] = {};
  in.read(magic, 7);
  FAINR_REQUIRE(in.gcount() == 7 && std::memcmp(magic, kMagic, 7) == 0, LoadError,
                path + ": not an optimizer state file");
  std::uint64_t step = 0;
  in.read(reinterpret_cast<char*>(&step), sizeof(step));
  FAINR_REQUIRE(in.gcount() == sizeof(step), LoadError, path + ": truncated step counter");
  const auto records = model::read_tensor_records(in, path);
  AdamState<float> s;
  s.step = static_cast<long>(step);
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (const char* kind : {"first/", "second/"}) {
      const std::string name = kind + params.name(i);
      FAINR_REQUIRE(records.contains(name), LoadError, path + ": missing moment '" + name + "'");
      const auto& t = records.value(records.index_of(name));
      FAINR_REQUIRE(t.rows() == params.value(i).rows() && t.cols() == params.value(i).cols(),
                    LoadError, path + ": moment '" + name + "' has the wrong shape");
      (kind[0] == 'f' ? s.first : s.second).push_back(t);
    }
  }
  FAINR_REQUIRE(records.size() == 2 * params.size(), LoadError,
                path + ": optimizer state holds tensors for unknown parameters");
  return s;
}

}  // namespace fainr::train
