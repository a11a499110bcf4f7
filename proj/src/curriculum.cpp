#include "restorekit/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "restorekit/diffusion.hpp"
#include "restorekit/error.hpp"
#include "restorekit/rng.hpp"

namespace restorekit {

namespace {

constexpr std::uint64_t kBatchStream = 0;
constexpr std::uint64_t kNoiseStream = 1;

// Train-row indices grouped by category.
std::map<std::string, std::vector<std::size_t>> train_rows_by_category(const DatasetManifest& m) {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    if (m.rows[i].split == Split::kTrain) out[m.rows[i].category].push_back(i);
  }
  return out;
}

std::string histogram_text(const std::map<std::string, int>& h) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [k, v] : h) {
    os << (first ? "" : ", ") << k << ":" << v;
    first = false;
  }
  return os.str();
}

}  // namespace

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::kMix: return "mix";
    case Strategy::kCombine: return "combine";
    case Strategy::kSequence: return "sequence";
    case Strategy::kIlCi: return "il_ci";
    case Strategy::kIlIc: return "il_ic";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& name) {
  std::string s = name;
  std::replace(s.begin(), s.end(), '-', '_');
  for (Strategy v : {Strategy::kMix, Strategy::kCombine, Strategy::kSequence, Strategy::kIlCi, Strategy::kIlIc}) {
    if (s == to_string(v)) return v;
  }
  throw ConfigError("unknown training strategy '" + name + "' (expected mix, combine, sequence, il_ci, il_ic)");
}

const char* to_string(DataClass c) {
  switch (c) {
    case DataClass::kIsolated: return "isolated";
    case DataClass::kCoupled: return "coupled";
    case DataClass::kAll: return "all";
  }
  return "?";
}

DataClass class_of(const std::string& category) {
  return is_isolated(category) ? DataClass::kIsolated : DataClass::kCoupled;
}

CurriculumPlan make_plan(Strategy strategy, const DatasetManifest& manifest, std::int64_t n,
                         std::optional<std::int64_t> total_iters, double phase2_isolated_share) {
  if (n < 0) throw ConfigError("phase length n must be >= 0");
  if (phase2_isolated_share < 0.0 || phase2_isolated_share > 1.0) {
    throw ConfigError("phase-2 isolated share must be in [0,1]");
  }
  CurriculumPlan plan;
  plan.strategy_ = strategy;
  plan.n_ = n;
  plan.total_ = total_iters.value_or(3 * n);
  plan.phase2_isolated_share_ = phase2_isolated_share;
  if (plan.total_ < 1) throw ConfigError("plan must run at least one iteration");

  const auto rows = train_rows_by_category(manifest);
  for (const auto& cat : taxonomy()) {
    if (!rows.contains(cat)) continue;
    plan.categories_.push_back(cat);
    (is_isolated(cat) ? plan.isolated_ : plan.coupled_).push_back(cat);
  }
  for (const auto& [cat, _] : rows) {
    if (!is_known_category(cat)) throw TaxonomyError("manifest has unknown category '" + cat + "'");
  }
  if (plan.categories_.empty()) throw ConfigError("manifest has no training rows");

  if (plan.incremental()) {
    if (plan.isolated_.empty()) throw ConfigError("incremental strategy needs isolated (D_i) training rows");
    if (plan.coupled_.empty()) throw ConfigError("incremental strategy needs coupled (D_c) training rows");
    if (plan.total_ < n) throw ConfigError("total iterations must cover phase 1");
    if (plan.total_ == n) throw ConfigError("incremental plan needs phase-2 iterations");
  }
  if (strategy == Strategy::kSequence &&
      plan.total_ < static_cast<std::int64_t>(plan.categories_.size())) {
    throw ConfigError("sequence strategy needs at least one iteration per category");
  }
  return plan;
}

void CurriculumPlan::check_iteration(std::int64_t iteration) const {
  if (iteration < 0 || iteration >= total_) {
    throw IndexError("iteration " + std::to_string(iteration) + " outside plan [0, " +
                     std::to_string(total_) + ")");
  }
}

int CurriculumPlan::phase(std::int64_t iteration) const {
  check_iteration(iteration);
  if (!incremental()) return 0;
  return iteration < n_ ? 1 : 2;
}

std::vector<RecipeEntry> CurriculumPlan::recipe(std::int64_t iteration) const {
  check_iteration(iteration);
  std::vector<RecipeEntry> out;
  switch (strategy_) {
    case Strategy::kMix:
      out.push_back({DataClass::kAll, "", 1.0});
      break;
    case Strategy::kCombine:
      for (const auto& c : categories_) {
        out.push_back({class_of(c), c, 1.0 / static_cast<double>(categories_.size())});
      }
      break;
    case Strategy::kSequence: {
      const auto k = static_cast<std::int64_t>(categories_.size());
      const std::string& c = categories_[static_cast<std::size_t>(iteration * k / total_)];
      out.push_back({class_of(c), c, 1.0});
      break;
    }
    case Strategy::kIlIc:
    case Strategy::kIlCi: {
      const bool ic = strategy_ == Strategy::kIlIc;
      if (iteration < n_) {
        const auto& pool = ic ? isolated_ : coupled_;
        const auto k = static_cast<std::int64_t>(pool.size());
        const auto active = std::min<std::int64_t>(k, 1 + iteration * k / n_);
        for (std::int64_t j = 0; j < active; ++j) {
          out.push_back({ic ? DataClass::kIsolated : DataClass::kCoupled, pool[static_cast<std::size_t>(j)],
                         1.0 / static_cast<double>(active)});
        }
      } else {
        out.push_back({DataClass::kIsolated, "", phase2_isolated_share_});
        out.push_back({DataClass::kCoupled, "", 1.0 - phase2_isolated_share_});
      }
      break;
    }
  }
  return out;
}

std::vector<int> allocate_counts(const std::vector<RecipeEntry>& recipe, int batch_size,
                                 std::int64_t rotation) {
  if (recipe.empty()) throw ConfigError("empty batch recipe");
  double total = 0.0;
  for (const auto& e : recipe) {
    if (e.share < 0.0) throw ConfigError("negative recipe share");
    total += e.share;
  }
  if (total <= 0.0) throw ConfigError("recipe shares sum to zero");
  const std::size_t k = recipe.size();
  std::vector<int> counts(k);
  std::vector<std::int64_t> frac(k);  // fractional parts in units of 1e-9
  int assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double exact = recipe[i].share / total * batch_size;
    counts[i] = static_cast<int>(std::floor(exact + 1e-9));
    frac[i] = std::llround((exact - counts[i]) * 1e9);
    assigned += counts[i];
  }
  const auto start = static_cast<std::size_t>(((rotation % static_cast<std::int64_t>(k)) + k) % k);
  std::vector<std::size_t> order(k);
  for (std::size_t i = 0; i < k; ++i) order[i] = (start + i) % k;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  for (std::size_t i = 0; assigned < batch_size; ++i, ++assigned) ++counts[order[i % k]];
  return counts;
}

std::map<std::string, int> Batch::category_histogram() const {
  std::map<std::string, int> h;
  for (const auto& it : items) ++h[it.category];
  return h;
}

Batch next_batch(const CurriculumPlan& plan, std::int64_t iteration, const PairedDataset& data,
                 int batch_size, int patch_size, std::uint64_t seed) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (patch_size < 1) throw ConfigError("patch size must be >= 1");
  const auto recipe = plan.recipe(iteration);
  const auto counts = allocate_counts(recipe, batch_size, iteration);
  const auto by_cat = train_rows_by_category(data.manifest);
  std::vector<std::size_t> all_rows;
  for (const auto& [_, rows] : by_cat) all_rows.insert(all_rows.end(), rows.begin(), rows.end());
  std::sort(all_rows.begin(), all_rows.end());

  auto rows_of = [&](const std::string& cat) -> const std::vector<std::size_t>& {
    auto it = by_cat.find(cat);
    if (it == by_cat.end() || it->second.empty()) {
      throw ConfigError("no training rows for category " + cat);
    }
    return it->second;
  };
  auto pick = [](Rng& rng, std::size_t size) {
    return static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(size) - 1));
  };

  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(iteration), kBatchStream}));
  Batch batch;
  batch.phase = plan.phase(iteration);
  batch.lq = nn::Tensor({batch_size, Image::kChannels, patch_size, patch_size});
  batch.hq = nn::Tensor({batch_size, Image::kChannels, patch_size, patch_size});
  for (std::size_t e = 0; e < recipe.size(); ++e) {
    const RecipeEntry& entry = recipe[e];
    for (int c = 0; c < counts[e]; ++c) {
      std::size_t row;
      if (!entry.task.empty()) {
        const auto& rows = rows_of(entry.task);
        row = rows[pick(rng, rows.size())];
      } else if (entry.data_class == DataClass::kAll) {
        if (all_rows.empty()) throw ConfigError("no training rows");
        row = all_rows[pick(rng, all_rows.size())];
      } else {
        const auto& tasks = entry.data_class == DataClass::kIsolated ? plan.isolated_tasks() : plan.coupled_tasks();
        if (tasks.empty()) throw ConfigError(std::string("no ") + to_string(entry.data_class) + " training rows");
        const auto& rows = rows_of(tasks[pick(rng, tasks.size())]);
        row = rows[pick(rng, rows.size())];
      }
      const Image& lq = data.lq[row];
      const Image& hq = data.hq[row];
      require_same_shape(lq, hq, "training pair " + data.manifest.rows[row].pair_id);
      if (lq.height() < patch_size || lq.width() < patch_size) {
        throw ConfigError("pair " + data.manifest.rows[row].pair_id + " is smaller than the patch size " +
                          std::to_string(patch_size));
      }
      const int y = static_cast<int>(rng.uniform_int(0, lq.height() - patch_size));
      const int x = static_cast<int>(rng.uniform_int(0, lq.width() - patch_size));
      const int slot = static_cast<int>(batch.items.size());
      const Image lq_patch = lq.crop(y, x, patch_size, patch_size);
      const Image hq_patch = hq.crop(y, x, patch_size, patch_size);
      std::copy(lq_patch.values().begin(), lq_patch.values().end(), batch.lq.sample(slot));
      std::copy(hq_patch.values().begin(), hq_patch.values().end(), batch.hq.sample(slot));
      const std::string& cat = data.manifest.rows[row].category;
      batch.items.push_back({row, cat, class_of(cat), {y, x}, {y, x}});
    }
  }

  if (batch.phase == 2) {
    std::vector<int> iso, cou;
    for (int i = 0; i < batch_size; ++i) {
      (batch.items[i].data_class == DataClass::kIsolated ? iso : cou).push_back(i);
    }
    batch.groups = {iso, cou};
  } else {
    std::vector<int> all(batch_size);
    std::iota(all.begin(), all.end(), 0);
    batch.groups = {all};
  }
  return batch;
}

std::int64_t TrainConfig::resolved_decay() const {
  return lr_decay_at >= 0 ? lr_decay_at : resolved_total() * 2 / 3;
}

double TrainConfig::lr_at(std::int64_t iteration) const {
  return iteration < resolved_decay() ? lr : lr_decayed;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (patch_size < 1) throw ConfigError("patch_size must be >= 1");
  if (!(lr > 0.0) || !(lr_decayed > 0.0)) throw ConfigError("learning rates must be positive");
  if (n < 0) throw ConfigError("n must be >= 0");
  if (total_iters < 0) throw ConfigError("total_iters must be >= 0");
  if (resolved_total() < 1) throw ConfigError("training must run at least one iteration");
  if (resolved_decay() > resolved_total()) throw ConfigError("lr_decay_at is past the last iteration");
  if (phase2_isolated_share < 0.0 || phase2_isolated_share > 1.0) {
    throw ConfigError("phase2_isolated_share must be in [0,1]");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"patch_size", c.patch_size},
       {"lr", c.lr},
       {"lr_decay_at", c.lr_decay_at},
       {"lr_decayed", c.lr_decayed},
       {"n", c.n},
       {"total_iters", c.total_iters},
       {"phase2_isolated_share", c.phase2_isolated_share},
       {"seed", c.seed},
       {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.batch_size = j.value("batch_size", d.batch_size);
  c.patch_size = j.value("patch_size", d.patch_size);
  c.lr = j.value("lr", d.lr);
  c.lr_decay_at = j.value("lr_decay_at", d.lr_decay_at);
  c.lr_decayed = j.value("lr_decayed", d.lr_decayed);
  c.n = j.value("n", d.n);
  c.total_iters = j.value("total_iters", d.total_iters);
  c.phase2_isolated_share = j.value("phase2_isolated_share", d.phase2_isolated_share);
  c.seed = j.value("seed", d.seed);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    c.adam.beta1 = a.value("beta1", d.adam.beta1);
    c.adam.beta2 = a.value("beta2", d.adam.beta2);
    c.adam.eps = a.value("eps", d.adam.eps);
  }
}

nlohmann::json to_json(const LogRecord& r) {
  return {{"iteration", r.iteration},
          {"phase", r.phase},
          {"loss", r.loss},
          {"lr", r.lr},
          {"category_histogram", r.category_histogram}};
}

TrainResult run_training(ResidualDenoiser& denoiser, const CurriculumPlan& plan,
                         const SchedulePlan& schedule, const TrainConfig& config,
                         const PairedDataset& data, const TrainHooks& hooks,
                         std::int64_t start_iteration) {
  config.validate();
  if (plan.total_iters() != config.resolved_total()) {
    throw ConfigError("plan runs " + std::to_string(plan.total_iters()) + " iterations but the config asks for " +
                      std::to_string(config.resolved_total()));
  }
  if (plan.incremental() && plan.n() != config.n) {
    throw ConfigError("plan phase length differs from config n");
  }
  const int m = denoiser.net().size_multiple();
  if (config.patch_size % m != 0) {
    throw ConfigError("patch size " + std::to_string(config.patch_size) + " must be a multiple of " +
                      std::to_string(m));
  }
  const bool at_boundary = plan.incremental() && start_iteration == plan.n();
  if (start_iteration != 0 && !at_boundary) {
    throw ConfigError("training can resume only at iteration 0 or at the phase boundary");
  }

  RunMeta meta;
  meta.schedule = schedule.config();
  meta.strategy = to_string(plan.strategy());
  meta.seed = config.seed;

  TrainResult result;
  auto emit = [&](const std::string& name, std::int64_t iteration, int phase) {
    meta.iteration = iteration;
    meta.phase = phase;
    TrainCheckpoint ckpt{name, iteration, save_checkpoint(denoiser, meta)};
    if (hooks.on_checkpoint) hooks.on_checkpoint(ckpt);
    result.checkpoints.push_back(std::move(ckpt));
  };

  nn::Adam adam(denoiser.params(), config.adam);
  const int B = config.batch_size;
  const int P = config.patch_size;
  for (std::int64_t it = start_iteration; it < plan.total_iters(); ++it) {
    const Batch batch = next_batch(plan, it, data, B, P, config.seed);

    Rng trng(derive_seed(config.seed, {static_cast<std::uint64_t>(it), kNoiseStream}));
    std::vector<int> ts(B);
    std::vector<Image> xt(B), residual(B);
    for (int s = 0; s < B; ++s) {
      ts[s] = static_cast<int>(trng.uniform_int(1, schedule.T()));
      const Image lq = nn::image_from_tensor(batch.lq, s);
      const Image hq = nn::image_from_tensor(batch.hq, s);
      Image eps(P, P);
      for (double& v : eps.values()) v = trng.normal();
      xt[s] = forward_sample(schedule, hq, lq, ts[s], eps);
      residual[s] = make_residual(lq, hq).residual;
    }
    const nn::Tensor xt_t = nn::stack_images(xt);
    const nn::Tensor target = nn::stack_images(residual);

    nn::Var pred = denoiser.forward(xt_t, batch.lq, ts);
    nn::Var loss = nn::l1_loss(pred, target, batch.groups);
    const double loss_value = loss->value.values()[0];
    if (!std::isfinite(loss_value)) {
      std::ostringstream os;
      os << "non-finite loss at iteration " << it << " (phase " << batch.phase << "); categories {"
         << histogram_text(batch.category_histogram()) << "}; t =";
      for (int t : ts) os << ' ' << t;
      throw TrainingError(os.str());
    }
    denoiser.params().zero_grad();
    nn::backward(loss);
    const double lr = config.lr_at(it);
    adam.step(lr);

    LogRecord rec{it, batch.phase, loss_value, lr, batch.category_histogram()};
    if (hooks.on_log) hooks.on_log(rec);
    result.log.push_back(std::move(rec));

    if (plan.incremental() && it + 1 == plan.n()) {
      emit("theta_id", plan.n(), 1);
      adam.reset();
    }
  }
  emit("final", plan.total_iters(), plan.incremental() ? 2 : 0);
  return result;
}

}  // namespace restorekit
