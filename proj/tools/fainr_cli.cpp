#include <csignal>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

#include "fainr/analysis/analysis.hpp"
#include "fainr/data/synthetic.hpp"
#include "fainr/metrics/metrics.hpp"
#include "fainr/model/checkpoint.hpp"
#include "fainr/service/explorer.hpp"
#include "fainr/train/state.hpp"
#include "fainr/train/trainer.hpp"

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fainr;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kUsage = 2, kData = 3, kNumeric = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags only override the config document when given on the command line.
struct Overrides {
  std::vector<std::function<void(json&)>> apply;

  template <class V>
  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& pointer,
                   const std::string& help) {
    auto value = std::make_shared<V>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    apply.push_back([opt, value, pointer](json& doc) {
      if (opt->count() > 0) doc[json::json_pointer(pointer)] = *value;
    });
    return opt;
  }
};

json defaults(const std::string& command) {
  if (command == "synth")
    return {{"out", ""},          {"resolution", {32, 32, 32}}, {"param_dim", 2},
            {"blobs", 6},         {"seed", 7},                  {"members", 25},
            {"test_members", 5},  {"sample_seed", 11},          {"margin", 0.0}};
  model::ModelConfig mc;
  mc.memory_slots = 64;
  if (command == "train")
    return {{"data", ""},        {"out", ""},        {"resume", ""},
            {"model", mc},       {"train", train::TrainConfig{}},
            {"spatial_ratio", 0.0}, {"split_seed", 0}};
  if (command == "eval")
    return {{"checkpoint", ""}, {"data", ""}, {"out", ""}, {"member", ""},
            {"spatial_ratio", 0.0}, {"split_seed", 0}, {"save_predictions", false}};
  if (command == "analyze")
    return {{"checkpoint", ""}, {"data", ""}, {"out", ""}, {"param", -1}, {"expert", -1},
            {"steps", 16},      {"base", json::array()}, {"member", ""}};
  return {{"checkpoint", ""}, {"data", ""}, {"host", "127.0.0.1"}, {"port", 8080},
          {"step_cap", 64},   {"cors_origin", "*"}};
}

json resolve(const std::string& command, const std::string& config_path, const Overrides& o) {
  json doc = defaults(command);
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw UsageError("cannot read config file '" + config_path + "'");
    json file;
    try {
      file = json::parse(in);
    } catch (const json::exception& e) {
      throw UsageError("config file '" + config_path + "' is not valid JSON: " + e.what());
    }
    if (file.contains(command)) file = file[command];
    if (!file.is_object()) throw UsageError("config file must hold a JSON object");
    for (const auto& [k, v] : file.items())
      if (!doc.contains(k)) throw UsageError("config file: unknown key '" + k + "' for " + command);
    doc.merge_patch(file);
  }
  for (const auto& f : o.apply) f(doc);
  std::cout << "resolved config (" << command << "):\n" << doc.dump(2) << "\n";
  return doc;
}

void require_path(const json& doc, const std::string& key) {
  if (doc.value(key, std::string()).empty()) throw UsageError("--" + key + " is required");
}

void require_dir(const std::string& path, const std::string& what) {
  if (!fs::is_directory(path)) throw UsageError(what + " '" + path + "' does not exist");
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw UsageError(what + " '" + path + "' does not exist");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

std::string checkpoint_file(const std::string& path) {
  return fs::is_directory(path) ? (fs::path(path) / "checkpoint.fainr").string() : path;
}

data::NormalizationStats stats_for(const json& meta, const data::EnsembleDataset& ds) {
  if (meta.contains("normalization")) return data::stats_from_json(meta["normalization"]);
  return data::compute_stats(ds);
}

std::size_t pick_member(const data::EnsembleDataset& ds, const data::NormalizedEnsemble& ne,
                        const std::string& id) {
  if (!id.empty()) {
    for (std::size_t j = 0; j < ds.members.size(); ++j)
      if (ds.members[j].id == id) return j;
    throw UsageError("unknown member '" + id + "'");
  }
  return ne.test_members.empty() ? 0 : ne.test_members.front();
}

int cmd_synth(const json& c) {
  require_path(c, "out");
  auto spec = data::make_synthetic_spec(c["resolution"].get<std::vector<int>>(), c["param_dim"].get<int>(),
                                        c["blobs"].get<int>(), c["seed"].get<std::uint64_t>());
  const auto members = c["members"].get<std::size_t>();
  const auto test = c["test_members"].get<std::size_t>();
  if (test > members) throw UsageError("test_members exceeds members");
  const auto grid = data::sample_parameters(spec, members, c["sample_seed"].get<std::uint64_t>(),
                                            c["margin"].get<double>());
  std::vector<std::string> splits;
  for (std::size_t j = 0; j < members; ++j) splits.push_back(j + test < members ? "train" : "test");
  const auto ds = data::make_ensemble(spec, grid, splits);
  data::save(ds, c["out"].get<std::string>());
  std::cout << "wrote " << members << " members of " << ds.size() << " points to " << c["out"].get<std::string>()
            << "\n";
  return kOk;
}

int cmd_train(const json& c) {
  require_path(c, "data");
  require_path(c, "out");
  require_dir(c["data"], "data path");
  const fs::path out = c["out"].get<std::string>();
  fs::create_directories(out);
  const auto ds = data::load(c["data"]);
  auto tc = c["train"].get<train::TrainConfig>();
  const std::string resume = c["resume"];

  std::unique_ptr<model::FaInrModel<float>> model;
  train::AdamState<float> state;
  data::NormalizationStats stats;
  double ratio = c["spatial_ratio"];
  std::uint64_t split_seed = c["split_seed"];
  if (!resume.empty()) {
    const std::string ckpt = checkpoint_file(resume);
    require_file(ckpt, "checkpoint");
    auto loaded = model::load_checkpoint(ckpt);
    stats = stats_for(loaded.meta, ds);
    if (loaded.meta.contains("spatial") && loaded.meta["spatial"].is_object()) {
      ratio = loaded.meta["spatial"]["ratio"];
      split_seed = loaded.meta["spatial"]["seed"];
    }
    model = std::make_unique<model::FaInrModel<float>>(std::move(loaded.model));
    const fs::path opt = fs::path(ckpt).parent_path() / "optimizer.bin";
    state = train::load_adam_state(model->parameters(), opt.string());
    std::cout << "resuming from step " << state.step << "\n";
  } else {
    auto mc = c["model"].get<model::ModelConfig>();
    mc.coord_dim = ds.coord_dim;
    mc.param_dim = ds.param_dim;
    mc.validate();
    model = std::make_unique<model::FaInrModel<float>>(mc);
    state = train::make_adam_state(model->parameters());
    stats = data::compute_stats(ds);
  }
  const auto ne = data::normalize(ds, stats);
  for (const auto& w : ne.warnings) std::cerr << "warning: " << w << "\n";
  if (ne.train_members.empty()) throw DataError("dataset has no training members");
  auto domain = train::training_domain(ne);
  json spatial = nullptr;
  if (ratio > 0) {
    if (ratio >= 1) throw UsageError("spatial_ratio must lie in (0, 1)");
    domain.coords = data::spatial_split(ds.size(), ratio, split_seed).train;
    spatial = {{"ratio", ratio}, {"seed", split_seed}};
  }

  json meta = {{"normalization", data::stats_to_json(stats)},
               {"train", tc},
               {"spatial", spatial},
               {"dataset", {{"param_names", ds.param_names}, {"lattice", ds.lattice}}}};
  auto save = [&](long step, const train::AdamState<float>& s) {
    meta["step"] = step;
    model::save_checkpoint(*model, (out / "checkpoint.fainr").string(), meta);
    train::save_adam_state(s, model->parameters(), (out / "optimizer.bin").string());
  };
  const bool append = !resume.empty() && fs::exists(out / "train_log.csv");
  std::ofstream log(out / "train_log.csv", append ? std::ios::app : std::ios::trunc);
  if (!append) log << "step,loss,lr,val_psnr,elapsed_s\n";
  train::TrainHooks<float> hooks;
  hooks.on_log = [&](const train::LogRow& r) {
    log << r.step << ',' << r.loss << ',' << r.lr << ',' << r.val_psnr << ',' << r.elapsed_s << '\n';
    log.flush();
    std::cout << "step " << r.step << "  loss " << r.loss << "  lr " << r.lr << "  val_psnr "
              << r.val_psnr << " dB  " << r.elapsed_s << " s\n";
  };
  hooks.on_checkpoint = save;
  const auto report = train::train(*model, ne, tc, domain, hooks, &state);
  save(state.step, state);
  json summary = {{"final_step", report.final_step},
                  {"final_loss", report.final_loss},
                  {"initial_probe_loss", report.initial_probe_loss},
                  {"final_probe_loss", report.final_probe_loss},
                  {"elapsed_s", report.elapsed_s},
                  {"key_entropy", report.keys.entropy},
                  {"key_normalized_entropy", report.keys.normalized_entropy}};
  write_text(out / "train_report.json", summary.dump(2) + "\n");
  std::cout << "checkpoint written to " << (out / "checkpoint.fainr").string() << "\n";
  return kOk;
}

int cmd_eval(const json& c) {
  require_path(c, "checkpoint");
  require_path(c, "data");
  require_path(c, "out");
  const std::string ckpt = checkpoint_file(c["checkpoint"]);
  require_file(ckpt, "checkpoint");
  require_dir(c["data"], "data path");
  const fs::path out = c["out"].get<std::string>();
  fs::create_directories(out);
  const auto loaded = model::load_checkpoint(ckpt);
  const auto ds = data::load(c["data"]);
  const auto stats = stats_for(loaded.meta, ds);
  const auto ne = data::normalize(ds, stats);
  const auto& model = loaded.model;

  double ratio = c["spatial_ratio"];
  std::uint64_t split_seed = c["split_seed"];
  if (ratio == 0 && loaded.meta.contains("spatial") && loaded.meta["spatial"].is_object()) {
    ratio = loaded.meta["spatial"]["ratio"];
    split_seed = loaded.meta["spatial"]["seed"];
  }
  data::SpatialSplit split;
  if (ratio > 0) split = data::spatial_split(ds.size(), ratio, split_seed);

  metrics::MetricReport report;
  std::vector<std::vector<float>> preds(ds.members.size());
  json spatial = json::array();
  for (std::size_t j = 0; j < ds.members.size(); ++j) {
    preds[j] = train::predict_member(model, ne, j);
    report.members.push_back(metrics::score_member(ds.members[j].id, ds.members[j].split,
                                                   ne.values[j], preds[j], ds.lattice));
    if (ratio > 0 && ds.members[j].split == "train") {
      auto subset = [&](const std::vector<std::size_t>& idx) {
        std::vector<float> g, p;
        for (std::size_t i : idx) {
          g.push_back(ne.values[j][i]);
          p.push_back(preds[j][i]);
        }
        return metrics::psnr(g, p, 1.0);
      };
      spatial.push_back({{"member", ds.members[j].id},
                         {"trained_psnr_db", subset(split.train)},
                         {"unseen_psnr_db", subset(split.test)}});
    }
    if (c["save_predictions"].get<bool>())
      write_text(out / ("pred_" + ds.members[j].id + ".f32"),
                 [&] {
                   const auto phys = data::denormalize_field(preds[j], stats);
                   return std::string(reinterpret_cast<const char*>(phys.data()), phys.size() * 4);
                 }());
  }
  const auto map = analysis::expert_map(model, ne.coords);
  if (!ds.members.empty()) {
    const std::size_t j = pick_member(ds, ne, c["member"]);
    const auto scores = metrics::per_expert_psnr(map.top1, map.experts, ne.values[j], preds[j], 1.0);
    const auto freq = analysis::per_expert_frequency(analysis::spatial_graph(ds), map, ds.members[j].values);
    for (int e = 0; e < map.experts; ++e)
      report.experts.push_back({e, scores[e].count, scores[e].psnr, freq.per_expert[e]});
  }
  json doc = report.to_json();
  doc["checkpoint"] = ckpt;
  if (ratio > 0) doc["spatial"] = {{"ratio", ratio}, {"seed", split_seed}, {"members", spatial}};
  write_text(out / "metrics.json", doc.dump(2) + "\n");
  write_text(out / "members.csv", report.members_csv());
  write_text(out / "experts.csv", report.experts_csv());
  std::cout << report.members_csv();
  std::cout << "mean PSNR train " << report.mean_psnr("train") << " dB, test " << report.mean_psnr("test")
            << " dB\n";
  return kOk;
}

int cmd_analyze(const json& c) {
  require_path(c, "checkpoint");
  require_path(c, "data");
  require_path(c, "out");
  const std::string ckpt = checkpoint_file(c["checkpoint"]);
  require_file(ckpt, "checkpoint");
  require_dir(c["data"], "data path");
  const fs::path out = c["out"].get<std::string>();
  fs::create_directories(out);
  const auto loaded = model::load_checkpoint(ckpt);
  const auto ds = data::load(c["data"]);
  const auto stats = stats_for(loaded.meta, ds);
  const auto ne = data::normalize(ds, stats);

  const auto map = analysis::expert_map(loaded.model, ne.coords);
  write_text(out / "expert_map.csv", analysis::expert_map_csv(map, ds.coords, ds.coord_dim));
  if (ds.gridded()) {
    const auto vol = analysis::expert_volume(map);
    write_text(out / "expert_map.u8", std::string(vol.begin(), vol.end()));
    write_text(out / "expert_map.json",
               json{{"dims", ds.lattice}, {"experts", map.experts}, {"order", "C"}, {"type", "u8"}}.dump(2) +
                   "\n");
  }
  if (!ds.members.empty()) {
    const std::size_t j = pick_member(ds, ne, c["member"]);
    const auto freq = analysis::per_expert_frequency(analysis::spatial_graph(ds), map, ds.members[j].values);
    std::ostringstream os;
    os << "expert,count,frequency\n";
    for (int e = 0; e < map.experts; ++e)
      os << e << ',' << freq.counts[e] << ','
         << (freq.per_expert[e] ? std::to_string(*freq.per_expert[e]) : std::string()) << '\n';
    os << "all," << ds.size() << ',' << freq.global << '\n';
    write_text(out / "frequency.csv", os.str());
  }

  const auto model64 = loaded.model.cast<double>();
  const ad::Tensor<double> coords64 = ne.coords.cast<double>();
  analysis::ModelSource<double> source(model64, stats, coords64);
  const int steps = c["steps"];
  const int param = c["param"];
  const int expert = c["expert"];
  std::vector<double> base = c["base"].get<std::vector<double>>();
  if (base.empty())
    for (const auto& [lo, hi] : stats.param) base.push_back(0.5 * (lo + hi));
  const auto region = expert >= 0 ? analysis::expert_region(map, expert) : analysis::full_region(ds.size());
  std::vector<analysis::SensitivityCurve> curves;
  for (int s = 0; s < ds.param_dim; ++s)
    if (param < 0 || param == s)
      curves.push_back(analysis::sensitivity_sweep(source, region, s, stats.param[s], steps, base));
  if (curves.empty()) throw UsageError("--param must be below m = " + std::to_string(ds.param_dim));
  write_text(out / "sensitivity.csv", analysis::curves_csv(curves));
  double worst = 0;
  for (const auto& cv : curves) worst = std::max(worst, cv.max_rel_discrepancy);
  std::cout << "expert counts:";
  for (auto n : map.counts()) std::cout << ' ' << n;
  std::cout << "\nsensitivity: " << curves.size() << " curve(s), tape vs finite-difference max rel. "
            << worst << "\n";
  return kOk;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const json& c) {
  require_path(c, "checkpoint");
  require_path(c, "data");
  const std::string ckpt = checkpoint_file(c["checkpoint"]);
  require_file(ckpt, "checkpoint");
  require_dir(c["data"], "data path");
  const int port = c["port"];
  if (port < 1 || port > 65535) throw UsageError("port must lie in [1, 65535]");
  auto loaded = model::load_checkpoint(ckpt);
  auto ds = data::load(c["data"]);
  auto stats = stats_for(loaded.meta, ds);
  service::ServiceOptions opts;
  opts.step_cap = c["step_cap"];
  opts.cors_origin = c["cors_origin"];
  service::Explorer explorer(std::move(loaded.model), std::move(ds), std::move(stats), opts);
  httplib::Server server;
  explorer.mount(server);
  const std::string host = c["host"];
  if (!server.bind_to_port(host, port))
    throw UsageError("cannot bind " + host + ":" + std::to_string(port));
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  std::cout << "serving on http://" << host << ':' << port << std::endl;
  server.listen_after_bind();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FA-INR surrogate: synthesize, train, evaluate, analyze, serve"};
  app.require_subcommand(1);
  std::map<std::string, Overrides> overrides;
  std::map<std::string, std::string> config_paths;
  auto sub = [&](const std::string& name, const std::string& help) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--config", config_paths[name], "JSON config file (flags override it)");
    return s;
  };

  auto* synth = sub("synth", "Write a seeded synthetic ensemble");
  {
    auto& o = overrides["synth"];
    o.add<std::string>(synth, "--out", "/out", "Output dataset directory");
    o.add<std::vector<int>>(synth, "--resolution", "/resolution", "Grid points per axis")->delimiter(',');
    o.add<int>(synth, "--params", "/param_dim", "Number of simulation parameters m");
    o.add<int>(synth, "--blobs", "/blobs", "Gaussian bumps in the field");
    o.add<std::uint64_t>(synth, "--seed", "/seed", "Coefficient table seed");
    o.add<std::size_t>(synth, "--members", "/members", "Ensemble size");
    o.add<std::size_t>(synth, "--test-members", "/test_members", "Members tagged as test (the last ones)");
    o.add<std::uint64_t>(synth, "--sample-seed", "/sample_seed", "Parameter sampling seed");
    o.add<double>(synth, "--margin", "/margin", "Keep samples this fraction away from range ends");
  }
  auto* trn = sub("train", "Train an FA-INR model");
  {
    auto& o = overrides["train"];
    o.add<std::string>(trn, "--data", "/data", "Dataset directory");
    o.add<std::string>(trn, "--out", "/out", "Output directory");
    o.add<std::string>(trn, "--resume", "/resume", "Previous output directory or checkpoint to continue");
    o.add<int>(trn, "--experts", "/model/experts", "Experts E");
    o.add<int>(trn, "--memory-slots", "/model/memory_slots", "Key-value pairs per expert M");
    o.add<int>(trn, "--top-k", "/model/top_k", "Experts evaluated per query");
    o.add<int>(trn, "--gate-res", "/model/gate_grid_res", "Gating grid resolution");
    o.add<std::uint64_t>(trn, "--model-seed", "/model/seed", "Initialization seed");
    o.add<long>(trn, "--steps", "/train/steps", "Total optimizer steps");
    o.add<double>(trn, "--lr", "/train/learning_rate", "Initial learning rate");
    o.add<double>(trn, "--decay", "/train/decay_factor", "Learning-rate factor at each milestone");
    o.add<int>(trn, "--batch", "/train/batch_size", "Queries per step");
    o.add<std::uint64_t>(trn, "--seed", "/train/seed", "Sampling seed");
    o.add<long>(trn, "--log-every", "/train/validation_interval", "Steps between log rows");
    o.add<long>(trn, "--checkpoint-every", "/train/checkpoint_interval", "Steps between checkpoints (0 = end only)");
    o.add<double>(trn, "--max-grad-norm", "/train/max_grad_norm", "Clip the global gradient norm (0 = off)");
    o.add<double>(trn, "--spatial-ratio", "/spatial_ratio", "Train on this fraction of coordinates only");
    o.add<std::uint64_t>(trn, "--split-seed", "/split_seed", "Spatial split seed");
  }
  auto* evl = sub("eval", "Score a checkpoint against a dataset");
  {
    auto& o = overrides["eval"];
    o.add<std::string>(evl, "--checkpoint", "/checkpoint", "Checkpoint file or training output directory");
    o.add<std::string>(evl, "--data", "/data", "Dataset directory");
    o.add<std::string>(evl, "--out", "/out", "Report directory");
    o.add<std::string>(evl, "--member", "/member", "Member for the per-expert table (default: first test member)");
    o.add<double>(evl, "--spatial-ratio", "/spatial_ratio", "Report trained vs unseen coordinates of this split");
    o.add<std::uint64_t>(evl, "--split-seed", "/split_seed", "Spatial split seed");
    o.add<bool>(evl, "--save-predictions", "/save_predictions", "Write pred_<id>.f32 per member");
  }
  auto* ana = sub("analyze", "Expert maps, per-expert frequency and sensitivity curves");
  {
    auto& o = overrides["analyze"];
    o.add<std::string>(ana, "--checkpoint", "/checkpoint", "Checkpoint file or training output directory");
    o.add<std::string>(ana, "--data", "/data", "Dataset directory");
    o.add<std::string>(ana, "--out", "/out", "Output directory");
    o.add<int>(ana, "--param", "/param", "Parameter to sweep (-1 = all)");
    o.add<int>(ana, "--expert", "/expert", "Restrict the sweep to this expert's region (-1 = everywhere)");
    o.add<int>(ana, "--steps", "/steps", "Sweep points");
    o.add<std::vector<double>>(ana, "--base", "/base", "Other parameters, raw units (default: midpoints)")
        ->delimiter(',');
    o.add<std::string>(ana, "--member", "/member", "Ground-truth member for the frequency table");
  }
  auto* srv = sub("serve", "HTTP explorer API over a checkpoint");
  {
    auto& o = overrides["serve"];
    o.add<std::string>(srv, "--checkpoint", "/checkpoint", "Checkpoint file or training output directory");
    o.add<std::string>(srv, "--data", "/data", "Dataset directory");
    o.add<std::string>(srv, "--host", "/host", "Bind address");
    o.add<int>(srv, "--port", "/port", "Port");
    o.add<int>(srv, "--step-cap", "/step_cap", "Largest sensitivity sweep accepted");
    o.add<std::string>(srv, "--cors-origin", "/cors_origin", "Access-Control-Allow-Origin value");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    for (auto* s : app.get_subcommands()) {
      const std::string name = s->get_name();
      const json cfg = resolve(name, config_paths[name], overrides[name]);
      if (name == "synth") return cmd_synth(cfg);
      if (name == "train") return cmd_train(cfg);
      if (name == "eval") return cmd_eval(cfg);
      if (name == "analyze") return cmd_analyze(cfg);
      if (name == "serve") return cmd_serve(cfg);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const json::exception& e) {
    std::cerr << "error: bad configuration value: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const LoadError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
