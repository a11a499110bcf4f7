#include <filesystem>
#include <fstream>
#include <map>
#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "restorekit/cli.hpp"
#include "restorekit/error.hpp"
#include "restorekit/io.hpp"

using namespace restorekit;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "restorekit");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int status = run_command(static_cast<int>(argv.size()), argv.data(), out, err);
  return {status, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("restorekit_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  return out;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream f(p);
  f << s;
}

RunConfig tiny_config() {
  RunConfig c = preset_config("desk");
  c.train.n = 3;
  c.train.batch_size = 2;
  c.train.patch_size = 16;
  c.denoiser = {4, 1, 8};
  c.schedule.T = 10;
  c.data.image_size = 16;
  c.restore.steps = 2;
  return c;
}

}  // namespace

TEST_CASE("presets round-trip through json") {
  for (const auto& name : preset_names()) {
    const RunConfig c = preset_config(name);
    CHECK_NOTHROW(validate(c));
    const auto j = to_json(c);
    const RunConfig back = parse_run_config(j);
    CHECK(back == c);
    CHECK(to_json(back) == j);
  }
  const RunConfig full = preset_config("full");
  CHECK(full.train.batch_size == 80);
  CHECK(full.schedule.gamma_T == 0.3);
  CHECK(full.restore.steps == 4);
  CHECK(full.restore.tile == 1024);
  CHECK(preset_config("desk").restore.steps == 4);
  CHECK_THROWS_AS(preset_config("huge"), ConfigError);
}

TEST_CASE("partial configs start from the preset") {
  const RunConfig c = parse_run_config(nlohmann::json::parse(R"({"seed": 7, "train": {"n": 12}})"));
  RunConfig want = preset_config("desk");
  want.seed = 7;
  want.train.n = 12;
  want.propagate_seed();
  CHECK(c == want);
  CHECK(c.train.seed == 7);
}

TEST_CASE("every offending key is reported") {
  const auto j = nlohmann::json::parse(
      R"({"trian": 1, "schedule": {"T": "ten", "gama": 0.2}, "train": {"seed": 3}, "seed": -4})");
  try {
    parse_run_config(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("5 problems") != std::string::npos);
    for (const char* key : {"trian: unknown key", "schedule.T: expected integer", "schedule.gama: unknown key",
                            "train.seed: unknown key", "seed: expected non-negative integer"}) {
      CHECK_MESSAGE(msg.find(key) != std::string::npos, key);
    }
  }
  try {
    parse_run_config(nlohmann::json::parse(
        R"({"schedule": {"gamma_T": 1.5}, "data": {"categories": ["Q"]}, "restore": {"steps": 0}})"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("schedule") != std::string::npos);
    CHECK(msg.find("data.categories: unknown category 'Q'") != std::string::npos);
    CHECK(msg.find("restore.steps") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_run_config(nlohmann::json::parse(R"({"strategy": "fancy"})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(nlohmann::json::parse(R"({"preset": "nope"})")), ConfigError);
  CHECK_THROWS_AS(parse_run_config(nlohmann::json::parse("[1]")), ConfigError);
}

TEST_CASE("environment overrides paths and seed") {
  RunConfig c = preset_config("desk");
  const std::map<std::string, std::string> env = {
      {"RESTOREKIT_DATA_DIR", "/d"}, {"RESTOREKIT_RUN_DIR", "/r"}, {"RESTOREKIT_SEED", "42"}};
  apply_env_overrides(c, [&](const std::string& k) -> std::optional<std::string> {
    auto it = env.find(k);
    return it == env.end() ? std::nullopt : std::optional<std::string>(it->second);
  });
  CHECK(c.paths.data_dir == "/d");
  CHECK(c.paths.run_dir == "/r");
  CHECK(c.seed == 42);
  CHECK(c.train.seed == 42);
  for (const char* bad : {"-1", "4x", ""}) {
    CHECK_THROWS_AS(apply_env_overrides(c, [&](const std::string& k) -> std::optional<std::string> {
                      return k == "RESTOREKIT_SEED" ? std::optional<std::string>(bad) : std::nullopt;
                    }),
                    ConfigError);
  }
}

TEST_CASE("number lists") {
  CHECK(parse_number_list("0.1,0.3,0.5") == std::vector<double>{0.1, 0.3, 0.5});
  CHECK(parse_number_list("1") == std::vector<double>{1.0});
  CHECK_THROWS_AS(parse_number_list("0.1,,0.2"), ConfigError);
  CHECK_THROWS_AS(parse_number_list("a"), ConfigError);
  CHECK_THROWS_AS(parse_number_list(""), ConfigError);
}

TEST_CASE("gen is byte-identical across runs") {
  const fs::path root = scratch("gen");
  for (const char* out : {"a", "b"}) {
    const Result r = run({"gen", "--categories", "N", "--count", "5", "--seed", "1", "--size", "16", "--out",
                          (root / out).string()});
    REQUIRE(r.status == 0);
  }
  const auto a = tree(root / "a");
  CHECK(a.size() == 11);  // manifest + 5 HQ + 5 LQ
  CHECK(a == tree(root / "b"));
  fs::remove_all(root);
}

TEST_CASE("usage and configuration errors are structured") {
  Result r = run({});
  CHECK(r.status == 2);
  CHECK(nlohmann::json::parse(r.err)["error"] == "UsageError");
  r = run({"gen", "--count", "five"});
  CHECK(r.status == 2);
  r = run({"gen", "--categories", "Q", "--out", (fs::temp_directory_path() / "restorekit_never").string()});
  CHECK(r.status == 2);
  const auto e = nlohmann::json::parse(r.err);
  CHECK(e["error"] == "ConfigError");
  CHECK(e["message"].get<std::string>().find("unknown category") != std::string::npos);
  r = run({"--data-dir", "/nonexistent/restorekit", "train"});
  CHECK(r.status == 1);
  CHECK(nlohmann::json::parse(r.err)["error"] == "IoError");
  r = run({"--help"});
  CHECK(r.status == 0);
  CHECK(r.out.find("ablate") != std::string::npos);
}

TEST_CASE("gen, train, restore and eval through the tool are reproducible") {
  const fs::path root = scratch("pipeline");
  RunConfig c = tiny_config();
  write_text(root / "cfg.json", to_json(c).dump());
  const std::string cfg = (root / "cfg.json").string();
  const std::string data = (root / "data").string();
  REQUIRE(run({"--config", cfg, "gen", "--categories", "N,L,L+N", "--count", "4", "--out", data}).status == 0);

  std::map<std::string, std::string> first;
  for (const char* name : {"r1", "r2"}) {
    const std::string rd = (root / name).string();
    Result r = run({"--config", cfg, "--data-dir", data, "--run-dir", rd, "train", "--strategy", "il-ic"});
    REQUIRE_MESSAGE(r.status == 0, r.err);
    r = run({"--config", cfg, "--data-dir", data, "--run-dir", rd, "restore", "--output", rd + "/pred"});
    REQUIRE_MESSAGE(r.status == 0, r.err);
    CHECK(nlohmann::json::parse(r.out)["steps"] == 2);
    r = run({"--config", cfg, "--data-dir", data, "eval", "--pred", rd + "/pred", "--out", rd + "/report.json"});
    REQUIRE_MESSAGE(r.status == 0, r.err);
    const auto files = tree(root / name);
    for (const char* f : {"config.json", "run_log.jsonl", "theta_id.ckpt", "final.ckpt", "report.json"})
      CHECK_MESSAGE(files.count(f) == 1, f);
    CHECK(std::count(files.at("run_log.jsonl").begin(), files.at("run_log.jsonl").end(), '\n') == 9);
    auto cfg_json = nlohmann::json::parse(files.at("config.json"));
    CHECK(cfg_json["paths"]["run_dir"] == rd);
    auto compared = files;
    compared.erase("config.json");  // records its own run directory
    if (first.empty()) {
      first = compared;
    } else {
      CHECK(compared == first);
    }
  }

  // Resume from theta_id reproduces the final checkpoint.
  const std::string rd = (root / "r3").string();
  const Result r = run({"--config", cfg, "--data-dir", data, "--run-dir", rd, "train", "--resume",
                        (root / "r1" / "theta_id.ckpt").string()});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(read_file(root / "r3" / "final.ckpt") == first.at("final.ckpt"));
  fs::remove_all(root);
}

TEST_CASE("restore defaults to four steps") {
  CHECK(RestoreSettings{}.steps == 4);
  CHECK(preset_config("desk").restore.steps == 4);
}

TEST_CASE("gamma ablation emits one block per value") {
  RunConfig c = tiny_config();
  GenOptions opt;
  opt.categories = {"N", "N+J"};
  opt.count_per_category = 4;
  opt.test_fraction = 0.25;
  const PairedDataset data = synthesize_dataset({std::nullopt, 16}, opt);
  const auto j = ablate_gamma(c, data, {0.1, 0.3, 0.5});
  REQUIRE(j["results"].size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(j["results"][k]["gamma_T"] == j["values"][k]);
    CHECK(j["results"][k]["per_category"]["N"].size() == 1);
    CHECK(j["results"][k]["per_category"]["N+J"].size() == 1);
  }
  CHECK(ablate_gamma(c, data, {0.1, 0.3, 0.5}) == j);
}

TEST_CASE("scale ablation subsamples train rows only") {
  GenOptions opt;
  opt.categories = {"N", "B"};
  opt.count_per_category = 10;
  opt.test_fraction = 0.2;
  const PairedDataset data = synthesize_dataset({std::nullopt, 16}, opt);
  const PairedDataset half = subsample_train(data, 0.5);
  CHECK(half.indices(Split::kTrain).size() == 8);
  CHECK(half.indices(Split::kTest).size() == 4);
  CHECK(subsample_train(data, 1.0).size() == data.size());
  CHECK(subsample_train(data, 0.01).indices(Split::kTrain).size() == 2);
  CHECK_THROWS_AS(subsample_train(data, 0.0), ConfigError);
}

TEST_CASE("align command prints a summary and writes json") {
  const fs::path root = scratch("align");
  write_text(root / "seq.csv",
             "id,role,start_marker_appear_s,start_marker_disappear_s,end_marker_appear_s,fps,frame_count\n"
             "g1,GT,1,11,15,30,600\n"
             "l1,LQ,0,10.1,14,30,600\n");
  const Result r = run({"align", "--input", (root / "seq.csv").string(), "--out", (root / "m.json").string()});
  REQUIRE_MESSAGE(r.status == 0, r.err);
  CHECK(r.out.find("1 accepted, 0 rejected") != std::string::npos);
  const auto j = nlohmann::json::parse(read_file(root / "m.json"));
  CHECK(j["pairs"][0]["frames"]["pairs"] == 118);
  fs::remove_all(root);
}
