#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "restorekit/degrade.hpp"
#include "restorekit/denoiser.hpp"
#include "restorekit/nn.hpp"
#include "restorekit/schedule.hpp"

namespace restorekit {

enum class Strategy { kMix, kCombine, kSequence, kIlCi, kIlIc };

const char* to_string(Strategy s);
/// Accepts "il_ic" and "il-ic" spellings.
Strategy strategy_from_string(const std::string& name);

/// D_i holds single-operator categories, D_c the composites; kAll is their union.
enum class DataClass { kIsolated, kCoupled, kAll };

const char* to_string(DataClass c);
DataClass class_of(const std::string& category);

/// One slice of a batch. An empty task means "any category of the class",
/// drawn task-uniformly (or pair-uniformly for kAll).
struct RecipeEntry {
  DataClass data_class = DataClass::kAll;
  std::string task;
  double share = 1.0;
  bool operator==(const RecipeEntry&) const = default;
};

/// Iterations are numbered from 0. For the incremental strategies phase 1 is
/// [0, n) and phase 2 is [n, total_iters).
class CurriculumPlan {
 public:
  Strategy strategy() const { return strategy_; }
  std::int64_t n() const { return n_; }
  std::int64_t total_iters() const { return total_; }
  bool incremental() const { return strategy_ == Strategy::kIlCi || strategy_ == Strategy::kIlIc; }

  /// 1 or 2 for incremental strategies, 0 otherwise.
  int phase(std::int64_t iteration) const;
  std::vector<RecipeEntry> recipe(std::int64_t iteration) const;

  const std::vector<std::string>& isolated_tasks() const { return isolated_; }
  const std::vector<std::string>& coupled_tasks() const { return coupled_; }
  const std::vector<std::string>& categories() const { return categories_; }

 private:
  friend CurriculumPlan make_plan(Strategy, const DatasetManifest&, std::int64_t,
                                  std::optional<std::int64_t>, double);
  void check_iteration(std::int64_t iteration) const;

  Strategy strategy_ = Strategy::kIlIc;
  std::int64_t n_ = 0;
  std::int64_t total_ = 0;
  double phase2_isolated_share_ = 0.5;
  std::vector<std::string> categories_;  // taxonomy order, train rows only
  std::vector<std::string> isolated_, coupled_;
};

/// total_iters defaults to 3n. The incremental strategies need train rows in
/// both classes; phase 1 grows a task-incremental pool over its first class
/// and phase 2 draws combined batches with the given share from D_i.
CurriculumPlan make_plan(Strategy strategy, const DatasetManifest& manifest, std::int64_t n,
                         std::optional<std::int64_t> total_iters = std::nullopt,
                         double phase2_isolated_share = 0.5);

struct BatchItem {
  std::size_t row = 0;
  std::string category;
  DataClass data_class = DataClass::kIsolated;
  std::pair<int, int> lq_origin;  // (y, x) of the crop
  std::pair<int, int> hq_origin;
};

struct Batch {
  nn::Tensor lq;  // [N,3,P,P]
  nn::Tensor hq;
  std::vector<BatchItem> items;
  /// Sample indices per loss group: one group, or isolated and coupled in phase 2.
  std::vector<std::vector<int>> groups;
  int phase = 0;

  std::map<std::string, int> category_histogram() const;
};

/// Split batch_size across recipe entries by largest remainder; ties go to
/// the entry that comes first after rotating by `rotation`.
std::vector<int> allocate_counts(const std::vector<RecipeEntry>& recipe, int batch_size,
                                 std::int64_t rotation = 0);

/// Deterministic in (seed, iteration). Only train rows are drawn.
Batch next_batch(const CurriculumPlan& plan, std::int64_t iteration, const PairedDataset& data,
                 int batch_size, int patch_size, std::uint64_t seed);

struct TrainConfig {
  int batch_size = 8;
  int patch_size = 64;
  double lr = 5e-4;
  /// Iteration at which the learning rate drops to lr_decayed; -1 means 2/3 of the run.
  std::int64_t lr_decay_at = -1;
  double lr_decayed = 2.5e-4;
  /// Phase-1 length for the incremental strategies; total defaults to 3n.
  std::int64_t n = 1000;
  std::int64_t total_iters = 0;  // 0 = 3n
  double phase2_isolated_share = 0.5;
  std::uint64_t seed = 0;
  nn::AdamConfig adam;

  std::int64_t resolved_total() const { return total_iters > 0 ? total_iters : 3 * n; }
  std::int64_t resolved_decay() const;
  double lr_at(std::int64_t iteration) const;
  /// Throws ConfigError on non-positive sizes or rates, or a decay point past the end.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct LogRecord {
  std::int64_t iteration = 0;
  int phase = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::map<std::string, int> category_histogram;
};

nlohmann::json to_json(const LogRecord& r);

struct TrainCheckpoint {
  std::string name;  // "theta_id" after phase 1, "final" at the end
  std::int64_t iteration = 0;
  std::string bytes;
};

struct TrainHooks {
  std::function<void(const LogRecord&)> on_log;
  std::function<void(const TrainCheckpoint&)> on_checkpoint;
};

struct TrainResult {
  std::vector<TrainCheckpoint> checkpoints;
  std::vector<LogRecord> log;
};

/// Algorithm loop: batch, t ~ U{1..T}, forward_sample, predict the residual,
/// grouped L1 loss, Adam step. Optimizer state starts fresh at iteration 0 and
/// at the phase boundary, so resuming from the theta_id checkpoint with
/// start_iteration = n reproduces the uninterrupted run. Throws TrainingError
/// on a non-finite loss.
TrainResult run_training(ResidualDenoiser& denoiser, const CurriculumPlan& plan,
                         const SchedulePlan& schedule, const TrainConfig& config,
                         const PairedDataset& data, const TrainHooks& hooks = {},
                         std::int64_t start_iteration = 0);

}  // namespace restorekit
