#include "restorekit/config.hpp"

#include <cstdlib>
#include <sstream>

#include "restorekit/error.hpp"
#include "restorekit/io.hpp"
#include "restorekit/rng.hpp"

namespace restorekit {

using nlohmann::json;

void RunConfig::propagate_seed() {
  train.seed = seed;
  experts.classifier_train.seed = derive_seed(seed, {1});
  experts.specialist_train.seed = derive_seed(seed, {2});
}

std::vector<std::string> preset_names() { return {"desk", "full"}; }

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") {
    c.train.batch_size = 8;
    c.train.patch_size = 32;
    c.experts.classifier_train.iterations = 1500;
    c.experts.classifier_train.lr = 3e-3;
  } else if (name == "full") {
    // Full-scale training and test settings. Model widths are assumed.
    c.denoiser = {64, 3, 128};
    c.train.batch_size = 80;
    c.train.patch_size = 256;
    c.train.lr = 1e-4;
    c.train.lr_decayed = 5e-5;
    c.train.lr_decay_at = 1'000'000;
    c.train.total_iters = 2'000'000;
    c.train.n = 666'667;
    c.data.image_size = 512;
    c.data.count_per_category = 50'000;
    c.experts.classifier = {32, 3};
    c.experts.specialist = {32, 3};
    c.experts.classifier_train.patch_size = 256;
    c.experts.specialist_train.patch_size = 256;
    c.experts.classifier_train.iterations = 100'000;
    c.experts.specialist_train.iterations = 100'000;
    c.restore.tile = 1024;
    c.restore.overlap = 64;
  } else {
    throw ConfigError("preset: unknown preset '" + name + "' (expected desk or full)");
  }
  c.propagate_seed();
  return c;
}

namespace {

json without_seed(json j) {
  j.erase("seed");
  return j;
}

bool is_integer(const json& v) { return v.is_number_integer() || v.is_number_unsigned(); }

const char* type_name(const json& v) {
  if (v.is_number_integer() && v.get<std::int64_t>() < 0) return "negative integer";
  if (is_integer(v)) return "integer";
  if (v.is_number()) return "number";
  return v.type_name();
}

// Compare `in` against the schema tree and report unknown keys and type mismatches.
void structural_problems(const json& in, const json& schema, const std::string& prefix,
                         std::vector<std::string>& out) {
  for (const auto& [key, value] : in.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!schema.contains(key)) {
      out.push_back(path + ": unknown key");
      continue;
    }
    const json& want = schema.at(key);
    bool ok;
    if (is_integer(want)) {
      ok = is_integer(value) && !(want.is_number_unsigned() && value.is_number_integer() && value.get<std::int64_t>() < 0);
    } else if (want.is_number()) {
      ok = value.is_number();
    } else {
      ok = value.type() == want.type();
    }
    if (!ok) {
      out.push_back(path + ": expected " + std::string(want.is_number_unsigned() ? "non-negative integer" : type_name(want)) +
                    ", got " + type_name(value));
      continue;
    }
    if (want.is_object()) structural_problems(value, want, path, out);
    if (want.is_array()) {
      for (const auto& e : value)
        if (!e.is_string()) {
          out.push_back(path + ": expected a list of strings");
          break;
        }
    }
  }
}

template <typename F>
void collect(std::vector<std::string>& out, const std::string& key, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    out.push_back(key + ": " + e.what());
  }
}

void check(std::vector<std::string>& out, bool ok, const std::string& key, const std::string& msg) {
  if (!ok) out.push_back(key + ": " + msg);
}

void check_expert_train(std::vector<std::string>& out, const ExpertTrainConfig& t, const std::string& key) {
  check(out, t.batch_size >= 1, key + ".batch_size", "must be >= 1");
  check(out, t.patch_size >= 1, key + ".patch_size", "must be >= 1");
  check(out, t.iterations >= 0, key + ".iterations", "must be >= 0");
  check(out, t.lr > 0.0, key + ".lr", "must be positive");
  check(out, t.sample_steps >= 1, key + ".sample_steps", "must be >= 1");
}

[[noreturn]] void throw_problems(const std::vector<std::string>& problems) {
  std::ostringstream os;
  os << "invalid configuration (" << problems.size() << " problem" << (problems.size() == 1 ? "" : "s") << ")";
  for (const auto& p : problems) os << "\n  " << p;
  throw ConfigError(os.str());
}

}  // namespace

json to_json(const RunConfig& c) {
  return {{"preset", c.preset},
          {"seed", c.seed},
          {"strategy", to_string(c.strategy)},
          {"schedule", c.schedule},
          {"denoiser", c.denoiser},
          {"train", without_seed(c.train)},
          {"data",
           {{"categories", c.data.categories},
            {"count_per_category", c.data.count_per_category},
            {"image_size", c.data.image_size},
            {"test_fraction", c.data.test_fraction},
            {"clean_dir", c.data.clean_dir}}},
          {"experts",
           {{"classifier", c.experts.classifier},
            {"classifier_train", without_seed(c.experts.classifier_train)},
            {"specialist", c.experts.specialist},
            {"specialist_train", without_seed(c.experts.specialist_train)}}},
          {"restore",
           {{"steps", c.restore.steps},
            {"tile", c.restore.tile},
            {"overlap", c.restore.overlap},
            {"variant", to_string(c.restore.variant)}}},
          {"paths", {{"data_dir", c.paths.data_dir}, {"run_dir", c.paths.run_dir}}}};
}

RunConfig parse_run_config(const json& j) {
  if (!j.is_object()) throw ConfigError("invalid configuration: top level must be an object");
  std::string preset = "desk";
  if (j.contains("preset")) {
    if (!j.at("preset").is_string()) throw_problems({"preset: expected string"});
    preset = j.at("preset").get<std::string>();
  }
  RunConfig base;
  try {
    base = preset_config(preset);
  } catch (const ConfigError& e) {
    throw_problems({e.what()});
  }
  const json schema = to_json(base);
  std::vector<std::string> problems;
  structural_problems(j, schema, "", problems);
  if (!problems.empty()) throw_problems(problems);

  json m = schema;
  m.merge_patch(j);
  RunConfig c = base;
  collect(problems, "seed", [&] { c.seed = m.at("seed").get<std::uint64_t>(); });
  collect(problems, "strategy", [&] { c.strategy = strategy_from_string(m.at("strategy").get<std::string>()); });
  collect(problems, "schedule", [&] { c.schedule = m.at("schedule").get<ScheduleConfig>(); });
  collect(problems, "denoiser", [&] { c.denoiser = m.at("denoiser").get<DenoiserConfig>(); });
  collect(problems, "train", [&] { c.train = m.at("train").get<TrainConfig>(); });
  const json& d = m.at("data");
  c.data.categories = d.at("categories").get<std::vector<std::string>>();
  c.data.count_per_category = d.at("count_per_category").get<int>();
  c.data.image_size = d.at("image_size").get<int>();
  c.data.test_fraction = d.at("test_fraction").get<double>();
  c.data.clean_dir = d.at("clean_dir").get<std::string>();
  const json& e = m.at("experts");
  collect(problems, "experts.classifier", [&] { c.experts.classifier = e.at("classifier").get<ClassifierConfig>(); });
  collect(problems, "experts.classifier_train",
          [&] { c.experts.classifier_train = e.at("classifier_train").get<ExpertTrainConfig>(); });
  collect(problems, "experts.specialist", [&] { c.experts.specialist = e.at("specialist").get<SpecialistConfig>(); });
  collect(problems, "experts.specialist_train",
          [&] { c.experts.specialist_train = e.at("specialist_train").get<ExpertTrainConfig>(); });
  const json& r = m.at("restore");
  c.restore.steps = r.at("steps").get<int>();
  c.restore.tile = r.at("tile").get<int>();
  c.restore.overlap = r.at("overlap").get<int>();
  collect(problems, "restore.variant",
          [&] { c.restore.variant = pipeline_variant_from_string(r.at("variant").get<std::string>()); });
  c.paths.data_dir = m.at("paths").at("data_dir").get<std::string>();
  c.paths.run_dir = m.at("paths").at("run_dir").get<std::string>();
  c.propagate_seed();

  const auto value_problems = config_problems(c);
  problems.insert(problems.end(), value_problems.begin(), value_problems.end());
  if (!problems.empty()) throw_problems(problems);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("invalid configuration: " + path + " is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

std::vector<std::string> config_problems(const RunConfig& c) {
  std::vector<std::string> out;
  collect(out, "schedule", [&] { c.schedule.validate(); });
  collect(out, "denoiser", [&] { c.denoiser.validate(); });
  collect(out, "train", [&] { c.train.validate(); });
  if (c.denoiser.depth >= 0 && c.denoiser.depth < 16) {
    const int m = 1 << c.denoiser.depth;
    check(out, c.train.patch_size % m == 0, "train.patch_size", "must be a multiple of " + std::to_string(m));
  }
  check(out, c.train.patch_size <= c.data.image_size, "train.patch_size", "must not exceed data.image_size");
  for (const auto& cat : c.data.categories)
    check(out, is_known_category(cat), "data.categories", "unknown category '" + cat + "'");
  check(out, c.data.count_per_category >= 1, "data.count_per_category", "must be >= 1");
  check(out, c.data.image_size >= 8, "data.image_size", "must be >= 8");
  check(out, c.data.test_fraction >= 0.0 && c.data.test_fraction < 1.0, "data.test_fraction", "must be in [0, 1)");
  collect(out, "experts.classifier", [&] { c.experts.classifier.validate(); });
  collect(out, "experts.specialist", [&] { c.experts.specialist.validate(); });
  check_expert_train(out, c.experts.classifier_train, "experts.classifier_train");
  check_expert_train(out, c.experts.specialist_train, "experts.specialist_train");
  check(out, c.restore.steps >= 1 && c.restore.steps <= c.schedule.T, "restore.steps",
        "must be in [1, schedule.T]");
  check(out, c.restore.tile >= 0, "restore.tile", "must be >= 0");
  check(out, c.restore.overlap >= 0, "restore.overlap", "must be >= 0");
  check(out, c.restore.tile == 0 || c.restore.tile > c.restore.overlap, "restore.overlap",
        "must be smaller than restore.tile");
  check(out, !c.paths.data_dir.empty(), "paths.data_dir", "must not be empty");
  check(out, !c.paths.run_dir.empty(), "paths.run_dir", "must not be empty");
  return out;
}

void validate(const RunConfig& c) {
  const auto p = config_problems(c);
  if (!p.empty()) throw_problems(p);
}

void apply_env_overrides(RunConfig& c, const EnvLookup& env) {
  const EnvLookup lookup = env ? env : [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    return v ? std::optional<std::string>(v) : std::nullopt;
  };
  if (auto v = lookup("RESTOREKIT_DATA_DIR")) c.paths.data_dir = *v;
  if (auto v = lookup("RESTOREKIT_RUN_DIR")) c.paths.run_dir = *v;
  if (auto v = lookup("RESTOREKIT_SEED")) {
    std::size_t used = 0;
    std::uint64_t s = 0;
    try {
      if (v->empty() || (*v)[0] == '-') throw std::invalid_argument(*v);
      s = std::stoull(*v, &used, 10);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used == 0 || used != v->size()) {
      throw ConfigError("RESTOREKIT_SEED: expected a non-negative integer, got '" + *v + "'");
    }
    c.seed = s;
    c.propagate_seed();
  }
}

}  // namespace restorekit
