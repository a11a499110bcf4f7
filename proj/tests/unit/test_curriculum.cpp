#include <cmath>
#include <limits>
#include <set>

#include "doctest.h"
#include "restorekit/curriculum.hpp"
#include "restorekit/error.hpp"

using namespace restorekit;

namespace {

DatasetManifest toy_manifest(const std::vector<std::string>& cats, int per_cat) {
  DatasetManifest m;
  for (const auto& c : cats)
    for (int i = 0; i < per_cat; ++i) {
      ManifestRow r;
      r.category = c;
      r.pair_id = c + "-" + std::to_string(i);
      m.rows.push_back(r);
    }
  return m;
}

PairedDataset toy_dataset(const std::vector<std::string>& cats, int per_cat, int size = 16) {
  GenOptions opt;
  opt.categories = cats;
  opt.count_per_category = per_cat;
  opt.seed = 3;
  opt.test_fraction = 0.0;
  return synthesize_dataset({std::nullopt, size}, opt);
}

bool only_class(const std::vector<RecipeEntry>& r, DataClass c) {
  for (const auto& e : r)
    if (e.data_class != c) return false;
  return true;
}

}  // namespace

TEST_CASE("strategy names") {
  for (auto s : {Strategy::kMix, Strategy::kCombine, Strategy::kSequence, Strategy::kIlCi, Strategy::kIlIc})
    CHECK(strategy_from_string(to_string(s)) == s);
  CHECK(strategy_from_string("il-ic") == Strategy::kIlIc);
  CHECK_THROWS_AS(strategy_from_string("random"), ConfigError);
}

TEST_CASE("il_ic phase structure") {
  const auto m = toy_manifest({"B", "N", "J", "B+N", "N+J"}, 3);
  const auto plan = make_plan(Strategy::kIlIc, m, 100);
  CHECK(plan.total_iters() == 300);
  for (std::int64_t i = 0; i < 100; ++i) {
    CHECK(plan.phase(i) == 1);
    CHECK(only_class(plan.recipe(i), DataClass::kIsolated));
  }
  CHECK(only_class(plan.recipe(50), DataClass::kIsolated));
  for (std::int64_t i = 100; i < 300; ++i) {
    CHECK(plan.phase(i) == 2);
    const auto r = plan.recipe(i);
    REQUIRE(r.size() == 2);
    CHECK(r[0].data_class == DataClass::kIsolated);
    CHECK(r[1].data_class == DataClass::kCoupled);
    CHECK(r[0].share == 0.5);
  }
  CHECK_THROWS_AS(plan.recipe(300), IndexError);
  CHECK_THROWS_AS(plan.recipe(-1), IndexError);
}

TEST_CASE("phase 1 grows a task pool over the first class") {
  const auto m = toy_manifest({"B", "N", "J", "B+N"}, 2);
  const auto plan = make_plan(Strategy::kIlIc, m, 30);
  CHECK(plan.recipe(0).size() == 1);
  CHECK(plan.recipe(0)[0].task == "B");
  CHECK(plan.recipe(10).size() == 2);
  CHECK(plan.recipe(29).size() == 3);
  std::size_t prev = 0;
  for (std::int64_t i = 0; i < 30; ++i) {
    CHECK(plan.recipe(i).size() >= prev);
    prev = plan.recipe(i).size();
  }
}

TEST_CASE("il_ci mirrors the class order") {
  const auto m = toy_manifest({"B", "N", "B+N", "L+H"}, 2);
  const auto plan = make_plan(Strategy::kIlCi, m, 10);
  for (std::int64_t i = 0; i < 10; ++i) CHECK(only_class(plan.recipe(i), DataClass::kCoupled));
  CHECK(plan.recipe(10).size() == 2);
}

TEST_CASE("incremental strategies need both classes") {
  CHECK_THROWS_AS(make_plan(Strategy::kIlIc, toy_manifest({"B", "N"}, 2), 10), ConfigError);
  CHECK_THROWS_AS(make_plan(Strategy::kIlCi, toy_manifest({"B+N"}, 2), 10), ConfigError);
  CHECK_NOTHROW(make_plan(Strategy::kMix, toy_manifest({"B", "N"}, 2), 10));
}

TEST_CASE("il_ic with n = 0 is combined training throughout") {
  const auto plan = make_plan(Strategy::kIlIc, toy_manifest({"B", "B+N"}, 2), 0, 50);
  for (std::int64_t i = 0; i < 50; ++i) {
    CHECK(plan.phase(i) == 2);
    CHECK(plan.recipe(i).size() == 2);
  }
}

TEST_CASE("mix recipe is constant") {
  const auto plan = make_plan(Strategy::kMix, toy_manifest({"B", "N+J"}, 2), 20);
  for (std::int64_t i = 0; i < 60; ++i) CHECK(plan.recipe(i) == plan.recipe(0));
}

TEST_CASE("sequence changes category at block boundaries") {
  const auto plan = make_plan(Strategy::kSequence, toy_manifest({"B", "N", "J", "H"}, 2), 0, 400);
  std::vector<std::int64_t> changes;
  for (std::int64_t i = 1; i < 400; ++i)
    if (plan.recipe(i)[0].task != plan.recipe(i - 1)[0].task) changes.push_back(i);
  CHECK(changes == std::vector<std::int64_t>{100, 200, 300});
}

TEST_CASE("combine covers every category with equal quota") {
  const auto plan = make_plan(Strategy::kCombine, toy_manifest({"B", "N", "J", "B+N"}, 2), 10);
  const auto r = plan.recipe(3);
  CHECK(r.size() == 4);
  CHECK(allocate_counts(r, 8) == std::vector<int>{2, 2, 2, 2});
  // 3 categories into 8 slots: remainders rotate with the iteration.
  std::vector<RecipeEntry> three(3, RecipeEntry{DataClass::kIsolated, "", 1.0});
  int total_first = 0;
  for (int it = 0; it < 3; ++it) {
    const auto c = allocate_counts(three, 8, it);
    CHECK(c[0] + c[1] + c[2] == 8);
    total_first += c[0];
  }
  CHECK(total_first == 8);
}

TEST_CASE("phase-2 batch shares") {
  const auto ds = toy_dataset({"B", "N", "B+N", "N+J"}, 4);
  const auto plan = make_plan(Strategy::kIlIc, ds.manifest, 5);
  const Batch b = next_batch(plan, 7, ds, 8, 8, 1);
  int iso = 0;
  for (const auto& it : b.items) iso += it.data_class == DataClass::kIsolated;
  CHECK(iso == 4);
  REQUIRE(b.groups.size() == 2);
  CHECK(b.groups[0].size() == 4);
  CHECK(b.groups[1].size() == 4);
  CHECK(b.phase == 2);

  const Batch p1 = next_batch(plan, 2, ds, 8, 8, 1);
  CHECK(p1.groups.size() == 1);
  for (const auto& it : p1.items) CHECK(it.data_class == DataClass::kIsolated);
}

TEST_CASE("next_batch is deterministic and crops aligned patches") {
  const auto ds = toy_dataset({"B", "L+H"}, 3, 24);
  const auto plan = make_plan(Strategy::kMix, ds.manifest, 10);
  const Batch a = next_batch(plan, 4, ds, 6, 8, 9);
  const Batch b = next_batch(plan, 4, ds, 6, 8, 9);
  CHECK(a.lq.values()[0] == b.lq.values()[0]);
  CHECK(std::equal(a.lq.values().begin(), a.lq.values().end(), b.lq.values().begin()));
  CHECK(a.category_histogram() == b.category_histogram());

  std::set<std::pair<int, int>> origins;
  int audited = 0;
  for (std::int64_t it = 0; it < 30 && audited < 10000; ++it) {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
      const Batch batch = next_batch(plan, it, ds, 6, 8, seed);
      for (std::size_t s = 0; s < batch.items.size(); ++s) {
        const auto& item = batch.items[s];
        REQUIRE(item.lq_origin == item.hq_origin);
        origins.insert(item.lq_origin);
        const auto [y, x] = item.lq_origin;
        CHECK(batch.hq.at(static_cast<int>(s), 1, 3, 5) == ds.hq[item.row].at(1, y + 3, x + 5));
        CHECK(batch.lq.at(static_cast<int>(s), 2, 7, 0) == ds.lq[item.row].at(2, y + 7, x));
        ++audited;
      }
    }
  }
  CHECK(audited >= 10000);
  CHECK(origins.size() > 100);
}

TEST_CASE("next_batch rejects patches larger than the images") {
  const auto ds = toy_dataset({"B", "N"}, 2, 16);
  const auto plan = make_plan(Strategy::kMix, ds.manifest, 10);
  CHECK_THROWS_AS(next_batch(plan, 0, ds, 2, 32, 0), ConfigError);
}

TEST_CASE("train config validation and lr schedule") {
  TrainConfig c;
  c.n = 100;
  CHECK(c.resolved_total() == 300);
  CHECK(c.resolved_decay() == 200);
  CHECK(c.lr_at(199) == c.lr);
  CHECK(c.lr_at(200) == c.lr_decayed);
  c.lr_decay_at = 301;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.lr_decay_at = 10;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.batch_size = 4;
  nlohmann::json j = c;
  CHECK(j.get<TrainConfig>() == c);
}

namespace {

struct ToyRun {
  PairedDataset data = toy_dataset({"B", "N", "B+N"}, 3, 16);
  SchedulePlan schedule = build_schedule({.T = 20, .gamma_T = 0.3, .delta_max = 0.05});
  TrainConfig config = [] {
    TrainConfig c;
    c.batch_size = 4;
    c.patch_size = 8;
    c.n = 4;
    c.lr = 1e-3;
    c.lr_decayed = 5e-4;
    c.seed = 21;
    return c;
  }();
  CurriculumPlan plan = make_plan(Strategy::kIlIc, data.manifest, config.n);
};

}  // namespace

TEST_CASE("run_training emits checkpoints and a log") {
  ToyRun run;
  auto d = build_denoiser({4, 1, 8}, 5);
  const auto before = clone(d.params());
  int logged = 0;
  const auto result = run_training(d, run.plan, run.schedule, run.config, run.data,
                                   {[&](const LogRecord&) { ++logged; }, nullptr});
  CHECK(logged == 12);
  REQUIRE(result.log.size() == 12);
  REQUIRE(result.checkpoints.size() == 2);
  CHECK(result.checkpoints[0].name == "theta_id");
  CHECK(result.checkpoints[0].iteration == 4);
  CHECK(result.checkpoints[1].name == "final");
  CHECK(!(d.params() == before));
  for (std::size_t i = 0; i < result.log.size(); ++i) {
    CHECK(result.log[i].iteration == static_cast<std::int64_t>(i));
    CHECK(result.log[i].phase == (i < 4 ? 1 : 2));
    CHECK(std::isfinite(result.log[i].loss));
    int total = 0;
    for (const auto& [_, v] : result.log[i].category_histogram) total += v;
    CHECK(total == 4);
  }
  const auto j = to_json(result.log[0]);
  for (const char* key : {"iteration", "phase", "loss", "lr", "category_histogram"}) CHECK(j.contains(key));
  const auto final_ckpt = load_checkpoint(result.checkpoints[1].bytes);
  CHECK(final_ckpt.denoiser.params() == d.params());
  CHECK(final_ckpt.meta.strategy == "il_ic");
  CHECK(final_ckpt.meta.iteration == 12);
}

TEST_CASE("training is bit-reproducible") {
  ToyRun run;
  auto a = build_denoiser({4, 1, 8}, 5);
  auto b = build_denoiser({4, 1, 8}, 5);
  const auto ra = run_training(a, run.plan, run.schedule, run.config, run.data);
  const auto rb = run_training(b, run.plan, run.schedule, run.config, run.data);
  CHECK(ra.checkpoints[1].bytes == rb.checkpoints[1].bytes);
  for (std::size_t i = 0; i < ra.log.size(); ++i) CHECK(ra.log[i].loss == rb.log[i].loss);
}

TEST_CASE("resuming from theta_id reproduces the uninterrupted run") {
  ToyRun run;
  auto full = build_denoiser({4, 1, 8}, 5);
  const auto ref = run_training(full, run.plan, run.schedule, run.config, run.data);

  auto resumed = load_checkpoint(ref.checkpoints[0].bytes).denoiser;
  const auto tail = run_training(resumed, run.plan, run.schedule, run.config, run.data, {}, run.config.n);
  REQUIRE(tail.log.size() == 8);
  for (std::size_t i = 0; i < tail.log.size(); ++i) CHECK(tail.log[i].loss == ref.log[i + 4].loss);
  CHECK(tail.checkpoints.back().bytes == ref.checkpoints.back().bytes);

  CHECK_THROWS_AS(run_training(resumed, run.plan, run.schedule, run.config, run.data, {}, 2), ConfigError);
}

TEST_CASE("all strategies produce comparable logs") {
  ToyRun run;
  for (auto s : {Strategy::kMix, Strategy::kCombine, Strategy::kSequence, Strategy::kIlCi, Strategy::kIlIc}) {
    auto d = build_denoiser({4, 1, 8}, 5);
    const auto plan = make_plan(s, run.data.manifest, run.config.n);
    const auto r = run_training(d, plan, run.schedule, run.config, run.data);
    CHECK(r.log.size() == 12);
    CHECK(r.checkpoints.back().name == "final");
  }
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  ToyRun run;
  for (auto& img : run.data.lq)
    for (double& v : img.values()) v = std::numeric_limits<double>::quiet_NaN();
  auto d = build_denoiser({4, 1, 8}, 5);
  CHECK_THROWS_WITH_AS(run_training(d, run.plan, run.schedule, run.config, run.data),
                       doctest::Contains("iteration 0"), TrainingError);
}

TEST_CASE("training rejects inconsistent configuration") {
  ToyRun run;
  auto d = build_denoiser({4, 2, 8}, 5);
  run.config.patch_size = 6;  // not a multiple of 4
  CHECK_THROWS_AS(run_training(d, run.plan, run.schedule, run.config, run.data), ConfigError);
  run.config.patch_size = 8;
  run.config.n = 5;
  CHECK_THROWS_AS(run_training(d, run.plan, run.schedule, run.config, run.data), ConfigError);
}
