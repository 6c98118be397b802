#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "fainr/model/checkpoint.hpp"

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "fainr_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Runs the CLI with output captured in <work>/last.log; returns the exit code.
int run(const std::string& args) {
  const auto log = work_dir() / "last.log";
  const std::string cmd = std::string(FAINR_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string last_log() {
  std::ifstream in(work_dir() / "last.log");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string dir(const std::string& name) { return (work_dir() / name).string(); }

const std::string kSmallData = "--resolution 8,8,8 --members 5 --test-members 1 --blobs 3";
const std::string kTrain = " --steps 20 --batch 64 --log-every 10 --decay 1 --memory-slots 8";

void ensure_dataset() {
  if (!fs::exists(work_dir() / "data" / "manifest.json"))
    REQUIRE(run("synth " + kSmallData + " --out " + dir("data")) == 0);
}

void ensure_trained() {
  ensure_dataset();
  if (!fs::exists(work_dir() / "run" / "checkpoint.fainr"))
    REQUIRE(run("train --data " + dir("data") + " --out " + dir("run") + kTrain) == 0);
}

}  // namespace

TEST_CASE("synth is deterministic and echoes its config") {
  REQUIRE(run("synth " + kSmallData + " --out " + dir("s1")) == 0);
  CHECK(last_log().find("\"resolution\"") != std::string::npos);
  REQUIRE(run("synth " + kSmallData + " --out " + dir("s2")) == 0);
  for (const auto& e : fs::directory_iterator(dir("s1")))
    CHECK(slurp(e.path()) == slurp(work_dir() / "s2" / e.path().filename()));
}

TEST_CASE("synth reads a config file and flags override it") {
  const auto cfg = work_dir() / "synth.json";
  std::ofstream(cfg) << json{{"synth", {{"resolution", {6, 6}}, {"members", 3}, {"test_members", 1}}}}.dump();
  REQUIRE(run("synth --config " + cfg.string() + " --members 4 --out " + dir("s3")) == 0);
  json manifest;
  std::ifstream(work_dir() / "s3" / "manifest.json") >> manifest;
  CHECK(manifest["lattice"] == json{6, 6});
  CHECK(manifest["members"].size() == 4);
}

TEST_CASE("usage errors exit with code 2") {
  CHECK(run("synth --resolution 0,8,8 --out " + dir("bad")) == 2);
  CHECK(run("train --data " + dir("does_not_exist") + " --out " + dir("x")) == 2);
  CHECK(last_log().find("does_not_exist") != std::string::npos);
  CHECK(run("frobnicate") == 2);
  CHECK(run("train --steps nope") == 2);
}

TEST_CASE("damaged datasets exit with code 3") {
  ensure_dataset();
  fs::copy(dir("data"), dir("broken"), fs::copy_options::recursive | fs::copy_options::overwrite_existing);
  for (const auto& e : fs::directory_iterator(dir("broken")))
    if (e.path().filename().string().rfind("member_", 0) == 0) {
      fs::resize_file(e.path(), 12);
      break;
    }
  CHECK(run("train --data " + dir("broken") + " --out " + dir("y") + kTrain) == 3);
}

TEST_CASE("train writes a checkpoint, a log and a report") {
  ensure_trained();
  CHECK(fs::exists(work_dir() / "run" / "optimizer.bin"));
  CHECK(fs::exists(work_dir() / "run" / "train_log.csv"));
  json report;
  std::ifstream(work_dir() / "run" / "train_report.json") >> report;
  CHECK(report["final_step"] == 20);
  const auto ck = fainr::model::load_checkpoint(dir("run") + "/checkpoint.fainr");
  CHECK(ck.model.config().memory_slots == 8);
  CHECK(ck.meta["step"] == 20);
}

TEST_CASE("a resumed run reproduces the uninterrupted one") {
  ensure_trained();
  REQUIRE(run("train --data " + dir("data") + " --out " + dir("half") +
              " --steps 10 --batch 64 --log-every 10 --decay 1 --memory-slots 8") == 0);
  REQUIRE(run("train --data " + dir("data") + " --out " + dir("half") + " --resume " + dir("half") +
              kTrain) == 0);
  const auto a = fainr::model::load_checkpoint(dir("run") + "/checkpoint.fainr");
  const auto b = fainr::model::load_checkpoint(dir("half") + "/checkpoint.fainr");
  CHECK(b.meta["step"] == 20);
  for (std::size_t i = 0; i < a.model.parameters().size(); ++i)
    CHECK(a.model.parameters().value(i) == b.model.parameters().value(i));
}

TEST_CASE("eval writes metrics with one expert row per expert") {
  ensure_trained();
  REQUIRE(run("eval --checkpoint " + dir("run") + " --data " + dir("data") + " --out " + dir("eval") +
              " --spatial-ratio 0.7") == 0);
  json metrics;
  std::ifstream(work_dir() / "eval" / "metrics.json") >> metrics;
  CHECK(metrics.contains("members"));
  CHECK(metrics["experts"].size() == 4);
  CHECK(metrics.contains("spatial"));
  std::ifstream csv(work_dir() / "eval" / "experts.csv");
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("analyze writes maps and curves") {
  ensure_trained();
  REQUIRE(run("analyze --checkpoint " + dir("run") + " --data " + dir("data") + " --out " + dir("ana") +
              " --steps 3") == 0);
  for (const char* f : {"expert_map.csv", "expert_map.u8", "expert_map.json", "frequency.csv", "sensitivity.csv"})
    CHECK(fs::exists(work_dir() / "ana" / f));
  CHECK(fs::file_size(work_dir() / "ana" / "expert_map.u8") == 512);
  CHECK(run("analyze --checkpoint " + dir("run") + " --data " + dir("data") + " --out " + dir("ana") +
            " --param 7") == 2);
}

TEST_CASE("serve rejects an invalid port") {
  ensure_trained();
  CHECK(run("serve --checkpoint " + dir("run") + " --data " + dir("data") + " --port 70000") == 2);
}
