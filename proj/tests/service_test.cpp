#include "doctest.h"

#include <cmath>
#include <random>
#include <thread>

#include "fainr/analysis/analysis.hpp"
#include "fainr/data/synthetic.hpp"
#include "fainr/metrics/metrics.hpp"
#include "fainr/service/explorer.hpp"
#include "fainr/train/trainer.hpp"
#include "helpers.hpp"

#include "httplib.h"

using namespace fainr;
using namespace fainr::service;
using nlohmann::json;

namespace {

data::EnsembleDataset service_dataset() {
  auto spec = data::make_synthetic_spec({12, 10, 8}, 2, 3, 21);
  auto ds = data::make_ensemble(spec, {{0.8, -0.5}, {1.6, 0.4}, {1.2, 0.0}}, {"train", "train", "test"});
  ds.param_names = {"alpha", "beta"};
  ds.param_ranges = spec.param_ranges;
  return ds;
}

model::FaInrModel<float> service_model() {
  model::FaInrModel<float> m(test::toy_config(3, 8, 2));
  test::randomize(m.parameters(), 31);
  return m;
}

struct Fixture {
  data::EnsembleDataset ds = service_dataset();
  data::NormalizationStats stats = data::compute_stats(ds);
  model::FaInrModel<float> model = service_model();
  Explorer ex{model, ds, stats};

  // Physical-unit prediction computed without the service.
  float reference(const float* raw, const std::vector<double>& p) const {
    ad::Tensor<float> x(1, 3), u(1, 2);
    for (int a = 0; a < 3; ++a) {
      const auto [lo, hi] = stats.coord[a];
      x(0, a) = static_cast<float>((raw[a] - lo) / (hi - lo) * 2.0 - 1.0);
    }
    for (int s = 0; s < 2; ++s) u(0, s) = static_cast<float>((p[s] - stats.param[s].first) / stats.param_span(s));
    const double y = model.predict(x, u)(0, 0);
    return static_cast<float>(stats.field.first + y * stats.field_span());
  }
};

std::vector<float> as_floats(const json& j) { return j.get<std::vector<float>>(); }

}  // namespace

TEST_CASE("base64 helpers") {
  CHECK(base64_encode("Man") == "TWFu");
  CHECK(base64_encode("Ma") == "TWE=");
  CHECK(base64_decode("TWE=") == "Ma");
  const std::vector<float> v{1.5f, -2.25f, 3e-7f};
  CHECK(decode_floats(encode_floats(v)) == v);
  CHECK_THROWS(decode_floats("TWE="));
}

TEST_CASE("info describes the loaded model and dataset") {
  Fixture f;
  const auto r = f.ex.info();
  CHECK(r.status == 200);
  CHECK(r.body["experts"] == 3);
  CHECK(r.body["param_names"] == json{"alpha", "beta"});
  CHECK(r.body["param_ranges"][0] == json{0.5, 2.0});
  CHECK(r.body["lattice"] == json{12, 10, 8});
  CHECK(r.body["n_coords"] == 960);
  CHECK(r.body["ground_truth"] == true);
}

TEST_CASE("predict matches a direct model evaluation") {
  Fixture f;
  const float raw[3] = {0.25f, -0.5f, 0.75f};
  const std::vector<double> p{1.1, 0.3};
  const auto r = f.ex.predict(json{{"coords", {{raw[0], raw[1], raw[2]}}}, {"params", p}}.dump(), false);
  REQUIRE(r.status == 200);
  CHECK(r.body["count"] == 1);
  CHECK(r.body["values"][0].get<float>() == doctest::Approx(f.reference(raw, p)).epsilon(1e-6));
}

TEST_CASE("predict handles a 10k batch through the binary path") {
  Fixture f;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(-1, 1);
  std::vector<float> flat(30000);
  for (auto& v : flat) v = u(rng);
  const json body{{"coords", encode_floats(flat)}, {"params", {0.9, -0.2}}};
  const auto bin = f.ex.predict(body.dump(), true);
  REQUIRE(bin.status == 200);
  CHECK(bin.body["encoding"] == "base64-f32le");
  const auto values = decode_floats(bin.body["values"].get<std::string>());
  CHECK(values.size() == 10000);
  const auto plain = f.ex.predict(body.dump(), false);
  CHECK(as_floats(plain.body["values"]) == values);
  for (int i = 0; i < 10000; i += 997)
    CHECK(values[i] == doctest::Approx(f.reference(&flat[i * 3], {0.9, -0.2})).epsilon(1e-6));
}

TEST_CASE("invalid requests become 422 with the offending field") {
  Fixture f;
  auto call = [&](const std::string& method, const std::string& path, const Query& q,
                  const std::string& body) { return f.ex.handle(method, path, q, body); };
  const auto oor = call("POST", "/predict", {}, R"({"coords":[[0,0,0]],"params":[3.0,0]})");
  CHECK(oor.status == 422);
  CHECK(oor.body["field"] == "params.alpha");
  CHECK(oor.body["message"].get<std::string>().find("alpha") != std::string::npos);
  const auto garbled = call("POST", "/predict", {}, "{not json");
  CHECK(garbled.status == 400);
  CHECK(garbled.body["code"] == "malformed_body");
  CHECK(call("POST", "/predict", {}, R"({"coords":[[0,0]],"params":[1,0]})").body["field"] == "coords");
  CHECK(call("GET", "/slice", {{"axis", "3"}, {"index", "0"}}, "").body["field"] == "axis");
  CHECK(call("GET", "/slice", {{"axis", "0"}, {"index", "12"}}, "").status == 422);
  CHECK(call("GET", "/slice", {{"axis", "x"}, {"index", "0"}}, "").status == 422);
  const auto missing = call("GET", "/nowhere", {}, "");
  CHECK(missing.status == 404);
  CHECK(missing.body["code"] == "not_found");
}

TEST_CASE("slices agree with predict on the same coordinates") {
  Fixture f;
  const auto s = f.ex.slice({{"axis", "1"}, {"index", "3"}, {"params", "1.4,0.25"}});
  REQUIRE(s.status == 200);
  CHECK(s.body["shape"] == json{12, 8});
  const auto values = as_floats(s.body["values"]);
  REQUIRE(values.size() == 96);
  json coords = json::array();
  for (int i = 0; i < 12; ++i)
    for (int k = 0; k < 8; ++k) {
      const std::size_t n = (static_cast<std::size_t>(i) * 10 + 3) * 8 + k;
      coords.push_back({f.ds.coords[n * 3], f.ds.coords[n * 3 + 1], f.ds.coords[n * 3 + 2]});
    }
  const auto p = f.ex.predict(json{{"coords", coords}, {"params", {1.4, 0.25}}}.dump(), false);
  CHECK(as_floats(p.body["values"]) == values);

  const auto bin = f.ex.slice({{"axis", "1"}, {"index", "3"}, {"params", "1.4,0.25"}, {"binary", "true"}});
  CHECK(decode_floats(bin.body["values"].get<std::string>()) == values);
}

TEST_CASE("expert map slices match the analysis module") {
  Fixture f;
  const auto normalized = data::normalize(f.ds, f.stats);
  const auto map = analysis::expert_map(f.model, normalized.coords);
  const auto r = f.ex.expert_map({{"axis", "2"}, {"index", "5"}});
  REQUIRE(r.status == 200);
  CHECK(r.body["shape"] == json{12, 10});
  const auto values = r.body["values"].get<std::vector<int>>();
  std::size_t k = 0;
  for (std::size_t n = 5; n < f.ds.size(); n += 8, ++k) {
    CHECK(values[k] == map.top1[n]);
    CHECK(values[k] < 3);
  }
  CHECK(k == values.size());
  CHECK(f.ex.expert_map({{"axis", "2"}, {"index", "5"}, {"params", "0.6,0.9"}}).body == r.body);
}

TEST_CASE("sensitivity endpoint equals the library sweep") {
  Fixture f;
  const auto normalized = data::normalize(f.ds, f.stats);
  const auto m64 = f.model.cast<double>();
  analysis::ModelSource<double> src(m64, f.stats, normalized.coords.cast<double>());
  const auto map = analysis::expert_map(f.model, normalized.coords);
  int expert = 0;
  while (map.members_of(expert).empty()) ++expert;
  const auto lib = analysis::sensitivity_sweep(src, analysis::expert_region(map, expert), 1,
                                               {-0.5, 0.5}, 5, {1.0, 0.0});
  const json req{{"region", {{"expert", expert}}}, {"paramIndex", 1}, {"range", {-0.5, 0.5}},
                 {"steps", 5}, {"baseParams", {1.0, 0.0}}};
  const auto r = f.ex.sensitivity(req.dump());
  REQUIRE(r.status == 200);
  CHECK(r.body["sweep"].get<std::vector<double>>() == lib.sweep);
  CHECK(r.body["sensitivity"].get<std::vector<double>>() == lib.sensitivity);
  CHECK(r.body["max_rel_discrepancy"].get<double>() < 1e-3);

  const auto one = f.ex.sensitivity(json{{"region", {{"mask", {1, 2, 3}}}}, {"paramIndex", 0}, {"steps", 1}}.dump());
  CHECK(one.body["sweep"].size() == 1);
  auto status = [&](const json& body) { return f.ex.handle("POST", "/sensitivity", {}, body.dump()).status; };
  CHECK(status(json{{"region", {{"mask", json::array()}}}, {"paramIndex", 0}}) == 422);
  CHECK(status(json{{"region", {{"mask", {1}}}}, {"paramIndex", 0}, {"steps", 65}}) == 422);
  CHECK(status(json{{"region", {{"mask", {1}}}}, {"paramIndex", 2}}) == 422);
  CHECK(status(json{{"region", {{"expert", 3}}}, {"paramIndex", 0}}) == 422);
}

TEST_CASE("expert summary rows match the metrics module") {
  Fixture f;
  const auto r = f.ex.experts_summary({{"member", f.ds.members[0].id}});
  REQUIRE(r.status == 200);
  CHECK(r.body["experts"].size() == 3);
  const auto normalized = data::normalize(f.ds, f.stats);
  const auto map = analysis::expert_map(f.model, normalized.coords);
  const auto pred = train::predict_member(f.model, normalized, 0);
  const auto scores = metrics::per_expert_psnr(map.top1, 3, normalized.values[0], pred, 1.0);
  for (int e = 0; e < 3; ++e) {
    if (scores[e].psnr) CHECK(r.body["experts"][e]["psnr"].get<double>() == *scores[e].psnr);
    else CHECK(r.body["experts"][e]["psnr"].is_null());
    CHECK(r.body["experts"][e]["count"] == scores[e].count);
  }
  CHECK(f.ex.handle("GET", "/experts/summary", {{"member", "ghost"}}, "").status == 422);
}

TEST_CASE("without ground truth the summary falls back to predictions") {
  Fixture f;
  auto bare = f.ds;
  bare.members.clear();
  Explorer ex(f.model, bare, f.stats);
  const auto r = ex.experts_summary({});
  CHECK(r.body["ground_truth"] == false);
  CHECK(r.body["frequency_source"] == "prediction");
  for (const auto& row : r.body["experts"]) CHECK(row["psnr"].is_null());
}

TEST_CASE("http round trip with CORS headers") {
  Fixture f;
  httplib::Server server;
  f.ex.mount(server);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  auto info = client.Get("/info");
  REQUIRE(info);
  CHECK(info->status == 200);
  CHECK(info->get_header_value("Access-Control-Allow-Origin") == "*");
  CHECK(json::parse(info->body)["experts"] == 3);

  auto bad = client.Post("/predict", R"({"coords":[[0,0,0]],"params":[9,0]})", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 422);
  CHECK(json::parse(bad->body)["code"] == "invalid_argument");

  auto slice = client.Get("/slice?axis=0&index=2&params=1.0,0.0&binary=true");
  REQUIRE(slice);
  const auto direct = f.ex.slice({{"axis", "0"}, {"index", "2"}, {"params", "1.0,0.0"}, {"binary", "true"}});
  CHECK(json::parse(slice->body) == direct.body);

  auto pre = client.Options("/predict");
  REQUIRE(pre);
  CHECK(pre->status == 204);
  server.stop();
  t.join();
}
