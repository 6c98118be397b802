#include "fainr/service/explorer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "httplib.h"

#include "fainr/metrics/metrics.hpp"
#include "fainr/train/trainer.hpp"

namespace fainr::service {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

nlohmann::json error_body(const std::string& code, const std::string& message,
                          const std::string& field) {
  return {{"code", code}, {"message", message}, {"field", field.empty() ? nlohmann::json() : nlohmann::json(field)}};
}

ApiError invalid(const std::string& message, const std::string& field) {
  return ApiError(422, "invalid_argument", message, field);
}

nlohmann::json parse_body(const std::string& body) {
  try {
    auto j = nlohmann::json::parse(body);
    if (!j.is_object()) throw ApiError(400, "malformed_body", "request body must be a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ApiError(400, "malformed_body", std::string("request body is not valid JSON: ") + e.what());
  }
}

long parse_int(const Query& q, const std::string& key) {
  auto it = q.find(key);
  if (it == q.end()) throw invalid("missing query parameter '" + key + "'", key);
  try {
    std::size_t used = 0;
    const long v = std::stol(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::logic_error&) {
    throw invalid("query parameter '" + key + "' must be an integer", key);
  }
}

bool flag(const Query& q, const std::string& key) {
  auto it = q.find(key);
  return it != q.end() && (it->second == "true" || it->second == "1");
}

nlohmann::json number_or_null(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

}  // namespace

std::string base64_encode(const std::string& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const auto n = (std::uint32_t(std::uint8_t(bytes[i])) << 16) |
                   (std::uint32_t(std::uint8_t(bytes[i + 1])) << 8) | std::uint8_t(bytes[i + 2]);
    for (int s = 18; s >= 0; s -= 6) out.push_back(kAlphabet[(n >> s) & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest > 0) {
    std::uint32_t n = std::uint32_t(std::uint8_t(bytes[i])) << 16;
    if (rest == 2) n |= std::uint32_t(std::uint8_t(bytes[i + 1])) << 8;
    out.push_back(kAlphabet[(n >> 18) & 63]);
    out.push_back(kAlphabet[(n >> 12) & 63]);
    out.push_back(rest == 2 ? kAlphabet[(n >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

std::string base64_decode(const std::string& text) {
  FAINR_REQUIRE(text.size() % 4 == 0, ContractError, "base64: length is not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::uint32_t n = 0;
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      std::uint32_t v = 0;
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        ++pad;
      } else {
        const char* pos = std::strchr(kAlphabet, c);
        FAINR_REQUIRE(c != '\0' && pos != nullptr && pad == 0, ContractError,
                      "base64: invalid character");
        v = static_cast<std::uint32_t>(pos - kAlphabet);
      }
      n = (n << 6) | v;
    }
    out.push_back(static_cast<char>((n >> 16) & 255));
    if (pad < 2) out.push_back(static_cast<char>((n >> 8) & 255));
    if (pad < 1) out.push_back(static_cast<char>(n & 255));
  }
  return out;
}

std::string encode_floats(const std::vector<float>& values) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, &values[i], 4);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((u >> (8 * b)) & 255);
  }
  return base64_encode(bytes);
}

std::vector<float> decode_floats(const std::string& text) {
  const std::string bytes = base64_decode(text);
  FAINR_REQUIRE(bytes.size() % 4 == 0, ContractError, "base64 payload is not a float32 array");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= std::uint32_t(std::uint8_t(bytes[i * 4 + b])) << (8 * b);
    std::memcpy(&out[i], &u, 4);
  }
  return out;
}

Explorer::Explorer(model::FaInrModel<float> model, data::EnsembleDataset dataset,
                   data::NormalizationStats stats, ServiceOptions options)
    : model_(std::move(model)),
      model64_(model_.cast<double>()),
      dataset_(std::move(dataset)),
      stats_(std::move(stats)),
      options_(std::move(options)) {
  dataset_.validate();
  FAINR_REQUIRE(dataset_.coord_dim == model_.coord_dim() && dataset_.param_dim == model_.param_dim(),
                DataError, "explorer: dataset dimensions differ from the checkpoint");
  FAINR_REQUIRE(options_.step_cap >= 1, ContractError, "explorer: step cap must be >= 1");
  normalized_ = data::normalize(dataset_, stats_);
  map_ = analysis::expert_map(model_, normalized_.coords);
  graph_ = analysis::spatial_graph(dataset_);
  coords64_ = normalized_.coords.cast<double>();
  source_ = std::make_unique<analysis::ModelSource<double>>(model64_, stats_, coords64_);
}

std::vector<double> Explorer::parse_params(const nlohmann::json& value, const std::string& field) const {
  if (!value.is_array()) throw invalid("'" + field + "' must be an array of numbers", field);
  if (static_cast<int>(value.size()) != dataset_.param_dim)
    throw invalid("'" + field + "' needs " + std::to_string(dataset_.param_dim) + " values", field);
  std::vector<double> p;
  for (std::size_t s = 0; s < value.size(); ++s) {
    const std::string name =
        dataset_.param_names.empty() ? "p" + std::to_string(s) : dataset_.param_names[s];
    if (!value[s].is_number()) throw invalid("parameter '" + name + "' is not a number", field + "." + name);
    const double v = value[s].get<double>();
    const auto [lo, hi] = stats_.param[s];
    const double tol = 1e-9 * std::max(1.0, hi - lo);
    if (!(v >= lo - tol && v <= hi + tol))
      throw invalid("parameter '" + name + "' = " + std::to_string(v) + " is outside [" +
                        std::to_string(lo) + ", " + std::to_string(hi) + "]",
                    field + "." + name);
    p.push_back(v);
  }
  return p;
}

std::vector<double> Explorer::query_params(const Query& q) const {
  auto it = q.find("params");
  if (it == q.end()) {
    std::vector<double> mid;
    for (const auto& [lo, hi] : stats_.param) mid.push_back(0.5 * (lo + hi));
    return mid;
  }
  nlohmann::json arr = nlohmann::json::array();
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      arr.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw invalid("'params' must be a comma-separated list of numbers", "params");
    }
  }
  return parse_params(arr, "params");
}

std::vector<std::size_t> Explorer::slice_indices(const Query& q, std::vector<int>& shape) const {
  if (!dataset_.gridded()) throw ApiError(422, "not_gridded", "dataset has no lattice to slice", "axis");
  const long axis = parse_int(q, "axis");
  const long index = parse_int(q, "index");
  const auto& dims = dataset_.lattice;
  if (axis < 0 || axis >= static_cast<long>(dims.size()))
    throw invalid("axis must lie in [0, " + std::to_string(dims.size() - 1) + "]", "axis");
  if (index < 0 || index >= dims[static_cast<std::size_t>(axis)])
    throw invalid("index must lie in [0, " + std::to_string(dims[axis] - 1) + "] for axis " +
                      std::to_string(axis),
                  "index");
  shape.clear();
  for (std::size_t a = 0; a < dims.size(); ++a)
    if (static_cast<long>(a) != axis) shape.push_back(dims[a]);
  std::vector<std::size_t> stride(dims.size(), 1);
  for (std::size_t a = dims.size() - 1; a-- > 0;) stride[a] = stride[a + 1] * dims[a + 1];
  std::vector<std::size_t> out;
  const std::size_t n = dataset_.size();
  for (std::size_t i = 0; i < n; ++i)
    if (static_cast<long>((i / stride[axis]) % dims[axis]) == index) out.push_back(i);
  return out;
}

std::vector<float> Explorer::predict_indices(const std::vector<std::size_t>& idx,
                                             const std::vector<double>& p) const {
  ad::Tensor<float> coords(static_cast<Eigen::Index>(idx.size()), normalized_.coords.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    coords.row(static_cast<Eigen::Index>(i)) = normalized_.coords.row(static_cast<Eigen::Index>(idx[i]));
  ad::Tensor<float> u(1, static_cast<Eigen::Index>(p.size()));
  for (std::size_t s = 0; s < p.size(); ++s)
    u(0, static_cast<Eigen::Index>(s)) = static_cast<float>(stats_.param_to_unit(static_cast<int>(s), p[s]));
  std::vector<float> out;
  out.reserve(idx.size());
  constexpr Eigen::Index chunk = 8192;
  for (Eigen::Index start = 0; start < coords.rows(); start += chunk) {
    const Eigen::Index len = std::min(chunk, coords.rows() - start);
    const ad::Tensor<float> y = model_.predict(coords.middleRows(start, len), u);
    for (Eigen::Index r = 0; r < len; ++r)
      out.push_back(static_cast<float>(stats_.field_from_unit(y(r, 0))));
  }
  return out;
}

Reply Explorer::info() const {
  nlohmann::json cfg = model_.config();
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : dataset_.members)
    members.push_back({{"id", m.id}, {"params", m.params}, {"split", m.split}});
  nlohmann::json names = dataset_.param_names;
  if (dataset_.param_names.empty())
    for (int s = 0; s < dataset_.param_dim; ++s) names.push_back("p" + std::to_string(s));
  auto ranges = [](const std::vector<data::Range>& r) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& [lo, hi] : r) a.push_back({lo, hi});
    return a;
  };
  return {200,
          {{"model", cfg},
           {"kind", model_.kind()},
           {"experts", model_.config().experts},
           {"coord_dim", dataset_.coord_dim},
           {"param_dim", dataset_.param_dim},
           {"param_names", names},
           {"param_ranges", ranges(stats_.param)},
           {"coord_ranges", ranges(stats_.coord)},
           {"field_range", {stats_.field.first, stats_.field.second}},
           {"lattice", dataset_.lattice},
           {"n_coords", dataset_.size()},
           {"ground_truth", !dataset_.members.empty()},
           {"members", members},
           {"step_cap", options_.step_cap}}};
}

Reply Explorer::predict(const std::string& body, bool binary) const {
  const auto req = parse_body(body);
  if (!req.contains("params")) throw invalid("missing 'params'", "params");
  if (!req.contains("coords")) throw invalid("missing 'coords'", "coords");
  const auto p = parse_params(req["params"], "params");
  const int d = dataset_.coord_dim;
  std::vector<float> flat;
  const auto& c = req["coords"];
  if (c.is_string()) {
    try {
      flat = decode_floats(c.get<std::string>());
    } catch (const ContractError& e) {
      throw invalid(e.what(), "coords");
    }
  } else if (c.is_array()) {
    for (const auto& row : c) {
      if (row.is_array()) {
        if (static_cast<int>(row.size()) != d)
          throw invalid("every coordinate needs " + std::to_string(d) + " components", "coords");
        for (const auto& v : row) {
          if (!v.is_number()) throw invalid("coordinates must be numbers", "coords");
          flat.push_back(v.get<float>());
        }
      } else if (row.is_number()) {
        flat.push_back(row.get<float>());
      } else {
        throw invalid("coordinates must be numbers", "coords");
      }
    }
  } else {
    throw invalid("'coords' must be an array or a base64 string", "coords");
  }
  if (flat.empty() || flat.size() % static_cast<std::size_t>(d) != 0)
    throw invalid("coordinate count is not a positive multiple of " + std::to_string(d), "coords");
  const auto n = static_cast<Eigen::Index>(flat.size() / d);
  ad::Tensor<float> coords(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a) {
      const double raw = flat[static_cast<std::size_t>(i * d + a)];
      const auto [lo, hi] = stats_.coord[a];
      const double tol = 1e-5 * std::max(1.0, hi - lo);
      if (!(raw >= lo - tol && raw <= hi + tol))
        throw invalid("coordinate " + std::to_string(i) + " axis " + std::to_string(a) + " = " +
                          std::to_string(raw) + " is outside [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "]",
                      "coords");
      coords(i, a) = static_cast<float>(stats_.coord_to_unit(a, raw));
    }
  ad::Tensor<float> u(1, static_cast<Eigen::Index>(p.size()));
  for (std::size_t s = 0; s < p.size(); ++s)
    u(0, static_cast<Eigen::Index>(s)) = static_cast<float>(stats_.param_to_unit(static_cast<int>(s), p[s]));
  std::vector<float> values;
  values.reserve(static_cast<std::size_t>(n));
  constexpr Eigen::Index chunk = 8192;
  for (Eigen::Index start = 0; start < n; start += chunk) {
    const Eigen::Index len = std::min(chunk, n - start);
    const ad::Tensor<float> y = model_.predict(coords.middleRows(start, len), u);
    for (Eigen::Index r = 0; r < len; ++r)
      values.push_back(static_cast<float>(stats_.field_from_unit(y(r, 0))));
  }
  nlohmann::json out = {{"count", values.size()}};
  if (binary) {
    out["values"] = encode_floats(values);
    out["encoding"] = "base64-f32le";
  } else {
    out["values"] = values;
  }
  return {200, out};
}

Reply Explorer::slice(const Query& q) const {
  std::vector<int> shape;
  const auto idx = slice_indices(q, shape);
  const auto p = query_params(q);
  const auto values = predict_indices(idx, p);
  nlohmann::json out = {{"axis", parse_int(q, "axis")},
                        {"index", parse_int(q, "index")},
                        {"shape", shape},
                        {"params", p},
                        {"field_range", {stats_.field.first, stats_.field.second}}};
  if (flag(q, "binary")) {
    out["values"] = encode_floats(values);
    out["encoding"] = "base64-f32le";
  } else {
    out["values"] = values;
  }
  return {200, out};
}

Reply Explorer::expert_map(const Query& q) const {
  std::vector<int> shape;
  const auto idx = slice_indices(q, shape);
  std::vector<int> experts;
  experts.reserve(idx.size());
  for (std::size_t i : idx) experts.push_back(map_.top1[i]);
  return {200,
          {{"axis", parse_int(q, "axis")},
           {"index", parse_int(q, "index")},
           {"shape", shape},
           {"experts", model_.config().experts},
           {"values", experts}}};
}

Reply Explorer::sensitivity(const std::string& body) const {
  const auto req = parse_body(body);
  const int m = dataset_.param_dim;
  if (!req.contains("paramIndex") || !req["paramIndex"].is_number_integer())
    throw invalid("'paramIndex' must be an integer", "paramIndex");
  const int s = req["paramIndex"].get<int>();
  if (s < 0 || s >= m) throw invalid("paramIndex must lie in [0, " + std::to_string(m - 1) + "]", "paramIndex");
  const int steps = req.value("steps", 16);
  if (steps < 1 || steps > options_.step_cap)
    throw invalid("steps must lie in [1, " + std::to_string(options_.step_cap) + "]", "steps");

  analysis::Region region;
  if (!req.contains("region") || !req["region"].is_object())
    throw invalid("'region' must be {\"expert\": id} or {\"mask\": [indices]}", "region");
  const auto& r = req["region"];
  if (r.contains("expert")) {
    if (!r["expert"].is_number_integer()) throw invalid("region.expert must be an integer", "region.expert");
    const int e = r["expert"].get<int>();
    if (e < 0 || e >= model_.config().experts)
      throw invalid("region.expert must lie in [0, " + std::to_string(model_.config().experts - 1) + "]",
                    "region.expert");
    region = analysis::expert_region(map_, e);
  } else if (r.contains("mask")) {
    if (!r["mask"].is_array()) throw invalid("region.mask must be an index array", "region.mask");
    std::vector<std::size_t> idx;
    for (const auto& v : r["mask"]) {
      if (!v.is_number_integer() || v.get<long long>() < 0 ||
          v.get<unsigned long long>() >= dataset_.size())
        throw invalid("region.mask holds an invalid coordinate index", "region.mask");
      idx.push_back(v.get<std::size_t>());
    }
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    region.indices = std::move(idx);
  } else {
    throw invalid("'region' must be {\"expert\": id} or {\"mask\": [indices]}", "region");
  }
  if (region.indices.empty()) throw invalid("region is empty", "region");

  std::vector<double> base;
  if (req.contains("baseParams")) base = parse_params(req["baseParams"], "baseParams");
  else base = query_params({});
  data::Range range = stats_.param[static_cast<std::size_t>(s)];
  if (req.contains("range")) {
    const auto& rg = req["range"];
    if (!rg.is_array() || rg.size() != 2 || !rg[0].is_number() || !rg[1].is_number())
      throw invalid("'range' must be [lo, hi]", "range");
    range = {rg[0].get<double>(), rg[1].get<double>()};
    const auto [lo, hi] = stats_.param[static_cast<std::size_t>(s)];
    const double tol = 1e-9 * std::max(1.0, hi - lo);
    if (range.first < lo - tol || range.second > hi + tol)
      throw invalid("range leaves the trained parameter range", "range");
    if (steps == 1 ? range.second < range.first : range.second <= range.first)
      throw invalid("range must be increasing", "range");
  }
  const auto curve = analysis::sensitivity_sweep(*source_, region, s, range, steps, base);
  nlohmann::json region_json = region.expert ? nlohmann::json{{"expert", *region.expert}}
                                             : nlohmann::json{{"mask_size", region.indices.size()}};
  region_json["size"] = region.indices.size();
  return {200,
          {{"paramIndex", s},
           {"region", region_json},
           {"sweep", curve.sweep},
           {"sensitivity", curve.sensitivity},
           {"derivative", curve.derivative},
           {"fd_derivative", curve.fd_derivative},
           {"max_rel_discrepancy", curve.max_rel_discrepancy}}};
}

Reply Explorer::experts_summary(const Query& q) const {
  const int experts = model_.config().experts;
  const bool truth = !dataset_.members.empty();
  nlohmann::json out = {{"ground_truth", truth},
                        {"frequency_source", truth ? "ground_truth" : "prediction"}};
  std::vector<float> freq_values;
  std::vector<metrics::ExpertScore> scores;
  if (truth) {
    std::size_t j = normalized_.test_members.empty() ? 0 : normalized_.test_members.front();
    if (auto it = q.find("member"); it != q.end()) {
      auto found = std::find_if(dataset_.members.begin(), dataset_.members.end(),
                                [&](const data::Member& m) { return m.id == it->second; });
      if (found == dataset_.members.end()) throw invalid("unknown member '" + it->second + "'", "member");
      j = static_cast<std::size_t>(found - dataset_.members.begin());
    }
    const auto pred = train::predict_member(model_, normalized_, j);
    scores = metrics::per_expert_psnr(map_.top1, experts, normalized_.values[j], pred, 1.0);
    out["member"] = dataset_.members[j].id;
    out["params"] = dataset_.members[j].params;
    out["global_psnr"] = number_or_null(metrics::psnr(normalized_.values[j], pred, 1.0));
    freq_values = dataset_.members[j].values;
  } else {
    const auto p = query_params(q);
    std::vector<std::size_t> all(dataset_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    freq_values = predict_indices(all, p);
    out["params"] = p;
    out["global_psnr"] = nullptr;
  }
  const auto freq = analysis::per_expert_frequency(graph_, map_, freq_values);
  out["global_frequency"] = freq.global;
  nlohmann::json rows = nlohmann::json::array();
  const auto counts = map_.counts();
  for (int e = 0; e < experts; ++e) {
    const auto ue = static_cast<std::size_t>(e);
    rows.push_back({{"expert", e},
                    {"count", counts[ue]},
                    {"psnr", truth ? number_or_null(scores[ue].psnr) : nlohmann::json()},
                    {"frequency", number_or_null(freq.per_expert[ue])}});
  }
  out["experts"] = rows;
  return {200, out};
}

Reply Explorer::handle(const std::string& method, const std::string& path, const Query& q,
                       const std::string& body) const {
  try {
    if (method == "GET" && path == "/info") return info();
    if (method == "POST" && path == "/predict") return predict(body, flag(q, "binary"));
    if (method == "GET" && path == "/slice") return slice(q);
    if (method == "GET" && path == "/expert-map") return expert_map(q);
    if (method == "POST" && path == "/sensitivity") return sensitivity(body);
    if (method == "GET" && path == "/experts/summary") return experts_summary(q);
    return {404, error_body("not_found", method + " " + path + " is not an endpoint", "")};
  } catch (const ApiError& e) {
    return {e.status, error_body(e.code, e.what(), e.field)};
  } catch (const nlohmann::json::exception& e) {
    return {422, error_body("invalid_argument", e.what(), "")};
  } catch (const ContractError& e) {
    return {422, error_body("invalid_argument", e.what(), "")};
  } catch (const std::exception& e) {
    return {500, error_body("internal", e.what(), "")};
  }
}

void Explorer::mount(httplib::Server& server) const {
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    Query q;
    for (const auto& [k, v] : req.params) q.emplace(k, v);
    const Reply r = handle(req.method, req.path, q, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  for (const char* path : {"/info", "/slice", "/expert-map", "/experts/summary"}) server.Get(path, route);
  for (const char* path : {"/predict", "/sensitivity"}) server.Post(path, route);
  server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  server.set_default_headers({{"Access-Control-Allow-Origin", options_.cors_origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    res.set_content(error_body(res.status == 404 ? "not_found" : "http_error",
                               req.method + " " + req.path + " failed with status " +
                                   std::to_string(res.status),
                               "")
                        .dump(),
                    "application/json");
  });
}

}  // namespace fainr::service
