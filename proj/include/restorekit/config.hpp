#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "restorekit/curriculum.hpp"
#include "restorekit/denoiser.hpp"
#include "restorekit/experts.hpp"
#include "restorekit/schedule.hpp"

namespace restorekit {

struct DataSettings {
  std::vector<std::string> categories;  // empty = full taxonomy
  int count_per_category = 40;
  int image_size = 64;
  double test_fraction = 0.1;
  std::string clean_dir;  // empty = procedural clean images
  bool operator==(const DataSettings&) const = default;
};

struct ExpertSettings {
  ClassifierConfig classifier;
  ExpertTrainConfig classifier_train;
  SpecialistConfig specialist;
  ExpertTrainConfig specialist_train;
  bool operator==(const ExpertSettings&) const = default;
};

struct RestoreSettings {
  int steps = 4;
  int tile = 0;  // 0 = whole image
  int overlap = 16;
  PipelineVariant variant = PipelineVariant::kOnlyG;
  bool operator==(const RestoreSettings&) const = default;
};

struct PathSettings {
  std::string data_dir = "data";
  std::string run_dir = "runs/default";
  bool operator==(const PathSettings&) const = default;
};

/// Everything a command needs. `seed` is the only seed in the file; data
/// generation, training, expert training and sampling derive theirs from it.
struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::kIlIc;
  ScheduleConfig schedule;
  DenoiserConfig denoiser;
  TrainConfig train;
  DataSettings data;
  ExpertSettings experts;
  RestoreSettings restore;
  PathSettings paths;

  /// Copy `seed` into the nested configs that carry their own.
  void propagate_seed();
  bool operator==(const RunConfig&) const = default;
};

/// "desk" (small, CPU-friendly) or "full" (full-scale training settings).
RunConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

nlohmann::json to_json(const RunConfig& c);

/// Start from the preset named by j["preset"] (default "desk") and apply j on
/// top. Unknown keys, wrong types and invalid values are all collected and
/// reported together in one ConfigError, one offending key per line.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

/// Every problem with the values, as "key: message" lines. Empty when valid.
std::vector<std::string> config_problems(const RunConfig& c);
/// Throws ConfigError listing every problem.
void validate(const RunConfig& c);

/// RESTOREKIT_DATA_DIR, RESTOREKIT_RUN_DIR and RESTOREKIT_SEED. The lookup is
/// injectable for tests; the default reads the process environment.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;
void apply_env_overrides(RunConfig& c, const EnvLookup& env = {});

}  // namespace restorekit
