#include "fainr/model/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace fainr::model {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <class U>
void put(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <class U>
bool get(std::istream& in, U& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(U));
  return static_cast<std::size_t>(in.gcount()) == sizeof(U);
}

}  // namespace

void write_tensor_records(std::ostream& out, const ad::ParameterSet<float>& tensors) {
  for (const auto& e : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put<std::uint32_t>(out, 2);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(e.value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(e.value.cols()));
    out.write(reinterpret_cast<const char*>(e.value.data()),
              static_cast<std::streamsize>(e.value.size() * sizeof(float)));
  }
}

ad::ParameterSet<float> read_tensor_records(std::istream& in, const std::string& source) {
  ad::ParameterSet<float> out;
  while (true) {
    std::uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
    if (in.gcount() == 0 && in.eof()) break;
    const std::string where = source + ": tensor " + std::to_string(out.size());
    FAINR_REQUIRE(in.gcount() == sizeof(name_len), LoadError, where + ": truncated name length");
    FAINR_REQUIRE(name_len > 0 && name_len < 4096, LoadError, where + ": bad name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    FAINR_REQUIRE(static_cast<std::uint32_t>(in.gcount()) == name_len, LoadError,
                  where + ": truncated name");
    std::uint32_t rank = 0;
    FAINR_REQUIRE(get(in, rank), LoadError, where + " '" + name + "': truncated rank");
    FAINR_REQUIRE(rank >= 1 && rank <= 2, LoadError,
                  where + " '" + name + "': unsupported rank " + std::to_string(rank));
    std::uint64_t extents[2] = {1, 1};
    for (std::uint32_t r = 0; r < rank; ++r)
      FAINR_REQUIRE(get(in, extents[r]), LoadError, where + " '" + name + "': truncated extents");
    const std::uint64_t rows = rank == 2 ? extents[0] : 1;
    const std::uint64_t cols = rank == 2 ? extents[1] : extents[0];
    FAINR_REQUIRE(rows * cols < (std::uint64_t{1} << 34), LoadError,
                  where + " '" + name + "': implausible extents");
    ad::Tensor<float> t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const auto bytes = static_cast<std::streamsize>(t.size() * sizeof(float));
    in.read(reinterpret_cast<char*>(t.data()), bytes);
    FAINR_REQUIRE(in.gcount() == bytes, LoadError, where + " '" + name + "': truncated data");
    FAINR_REQUIRE(!out.contains(name), LoadError, where + ": duplicate tensor '" + name + "'");
    out.add(std::move(name), std::move(t));
  }
  return out;
}

void save_checkpoint(const FaInrModel<float>& model, const std::string& path,
                     const nlohmann::json& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  FAINR_REQUIRE(out.good(), LoadError, "cannot open '" + path + "' for writing");
  nlohmann::json doc = {{"format_version", 1}, {"model", model.config()}, {"meta", meta}};
  const std::string text = doc.dump();
  out.write(kCheckpointMagic, 6);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_tensor_records(out, model.parameters());
  FAINR_REQUIRE(out.good(), LoadError, "write to '" + path + "' failed");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  FAINR_REQUIRE(in.good(), LoadError, "cannot open checkpoint '" + path + "'");
  char magic[6] = {};
  in.read(magic, 6);
  FAINR_REQUIRE(in.gcount() == 6 && std::memcmp(magic, "FAINR", 5) == 0, LoadError,
                path + ": not a checkpoint (bad magic)");
  FAINR_REQUIRE(magic[5] == kCheckpointMagic[5], LoadError,
                path + ": unsupported checkpoint version '" + std::string(1, magic[5]) + "'");
  std::uint32_t len = 0;
  FAINR_REQUIRE(get(in, len), LoadError, path + ": truncated config length");
  std::string text(len, '\0');
  in.read(text.data(), len);
  FAINR_REQUIRE(static_cast<std::uint32_t>(in.gcount()) == len, LoadError,
                path + ": truncated config document");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path + ": config document is not valid JSON: " + e.what());
  }
  FAINR_REQUIRE(doc.value("format_version", 0) == 1, LoadError,
                path + ": format_version mismatch");
  FAINR_REQUIRE(doc.contains("model"), LoadError, path + ": config document lacks 'model'");
  ModelConfig config;
  try {
    config = doc.at("model").get<ModelConfig>();
    config.validate();
  } catch (const Error& e) {
    throw LoadError(path + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path + ": model config: " + e.what());
  }
  auto tensors = read_tensor_records(in, path);
  try {
    FaInrModel<float> model(config, std::move(tensors));
    return {std::move(model), doc.value("meta", nlohmann::json::object())};
  } catch (const ContractError& e) {
    throw LoadError(path + ": " + e.what());
  }
}

LoadedCheckpoint load_checkpoint(const std::string& path, const ModelConfig& expected) {
  LoadedCheckpoint loaded = load_checkpoint(path);
  const FaInrModel<float> reference(expected);
  const auto& want = reference.parameters();
  const auto& got = loaded.model.parameters();
  for (std::size_t i = 0; i < want.size(); ++i) {
    FAINR_REQUIRE(got.contains(want.name(i)), LoadError,
                  path + ": missing tensor '" + want.name(i) + "'");
    const auto& t = got.value(got.index_of(want.name(i)));
    FAINR_REQUIRE(t.rows() == want.value(i).rows() && t.cols() == want.value(i).cols(),
                  LoadError,
                  path + ": shape mismatch for tensor '" + want.name(i) + "': file has " +
                      ad::shape_string(t) + ", expected " + ad::shape_string(want.value(i)));
  }
  FAINR_REQUIRE(got.size() == want.size(), LoadError,
                path + ": tensor count " + std::to_string(got.size()) + " differs from expected " +
                    std::to_string(want.size()));
  return loaded;
}

}  // namespace fainr::model
