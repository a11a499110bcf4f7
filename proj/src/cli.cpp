#include "restorekit/cli.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "restorekit/align.hpp"
#include "restorekit/error.hpp"
#include "restorekit/io.hpp"
#include "restorekit/rng.hpp"

namespace restorekit {

namespace fs = std::filesystem;
using nlohmann::json;

GenOptions gen_options(const RunConfig& c) {
  GenOptions o;
  o.categories = c.data.categories.empty() ? taxonomy() : c.data.categories;
  o.count_per_category = c.data.count_per_category;
  o.seed = c.seed;
  o.test_fraction = c.data.test_fraction;
  return o;
}

CleanSource clean_source(const RunConfig& c) {
  CleanSource s;
  s.image_size = c.data.image_size;
  if (!c.data.clean_dir.empty()) s.directory = fs::path(c.data.clean_dir);
  return s;
}

namespace {

std::string jsonl(const std::vector<LogRecord>& log) {
  std::string s;
  for (const auto& r : log) s += to_json(r).dump() + "\n";
  return s;
}

// FNV-1a; stable across platforms, used to seed per-file restorations.
std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double display(double psnr_db) { return std::isinf(psnr_db) ? kPsnrDisplayClamp : psnr_db; }

json summary_block(const EvalReport& r) {
  return {{"average_psnr", display(r.average_psnr)},
          {"average_ssim", r.average_ssim},
          {"per_category", psnr_lists(r)}};
}

}  // namespace

TrainRun train_generalist(const RunConfig& c, const PairedDataset& data, const std::optional<fs::path>& run_dir,
                          const std::optional<fs::path>& resume) {
  validate(c);
  const auto plan = make_plan(c.strategy, data.manifest, c.train.n, c.train.resolved_total(),
                              c.train.phase2_isolated_share);
  const auto schedule = build_schedule(c.schedule);
  TrainRun run{build_denoiser(c.denoiser, derive_seed(c.seed, {0x6e6574})), {}};
  std::int64_t start = 0;
  if (resume) {
    LoadedDenoiser loaded = load_checkpoint(read_file(*resume));
    if (loaded.meta.phase != 1 || loaded.meta.iteration != plan.n()) {
      throw ConfigError("resume checkpoint must be the theta_id checkpoint at iteration " + std::to_string(plan.n()));
    }
    if (!(loaded.denoiser.config() == c.denoiser) || !(loaded.meta.schedule == c.schedule)) {
      throw ConfigError("resume checkpoint was trained with a different model or schedule");
    }
    run.denoiser = std::move(loaded.denoiser);
    start = plan.n();
  }
  TrainHooks hooks;
  if (run_dir) {
    fs::create_directories(*run_dir);
    write_file_atomic(*run_dir / "config.json", to_json(c).dump(2) + "\n");
    hooks.on_checkpoint = [&](const TrainCheckpoint& ck) {
      write_file_atomic(*run_dir / (ck.name + ".ckpt"), ck.bytes);
    };
  }
  run.result = run_training(run.denoiser, plan, schedule, c.train, data, hooks, start);
  if (run_dir) write_file_atomic(*run_dir / "run_log.jsonl", jsonl(run.result.log));
  return run;
}

Image restore_image(const RunConfig& c, const Denoiser* generalist, const ExpertPool* pool, const Image& lq,
                    std::uint64_t seed) {
  const auto plan = build_schedule(c.schedule);
  const ExpertPool empty;
  const ExpertPool& p = pool ? *pool : empty;
  const RestoreFn fn = [&](const Image& x) {
    if (c.restore.variant == PipelineVariant::kOnlyG) {
      if (!generalist) throw ConfigError("only_G needs a generalist model");
      return sample(plan, *generalist, x, c.restore.steps, seed);
    }
    return pipeline_restore(c.restore.variant, p, generalist, plan, x, c.restore.steps, seed);
  };
  if (c.restore.tile > 0) return tile_restore(fn, lq, c.restore.tile, c.restore.overlap);
  return fn(lq);
}

std::vector<Image> restore_split(const RunConfig& c, const Denoiser* generalist, const ExpertPool* pool,
                                 const PairedDataset& data, Split split) {
  std::vector<Image> out;
  for (std::size_t r : data.indices(split)) {
    out.push_back(restore_image(c, generalist, pool, data.lq[r], derive_seed(c.seed, {3, r})));
  }
  return out;
}

EvalReport evaluate_model(const RunConfig& c, const Denoiser* generalist, const ExpertPool* pool,
                          const PairedDataset& data, Split split, const std::string& model_id) {
  const auto rows = data.indices(split);
  const auto restored = restore_split(c, generalist, pool, data, split);
  std::vector<std::optional<Image>> preds(restored.begin(), restored.end());
  return evaluate_pairs(data, rows, preds, {model_id, c.restore.steps, c.restore.tile}, to_string(split));
}

json psnr_lists(const EvalReport& r) {
  json out = json::object();
  for (const auto& cs : r.categories) out[cs.category] = json::array();
  for (const auto& p : r.pairs) out[p.category].push_back(display(p.psnr));
  return out;
}

PairedDataset subsample_train(const PairedDataset& data, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("data fraction must be in (0, 1]");
  std::map<std::string, int> total, kept;
  for (const auto& r : data.manifest.rows)
    if (r.split == Split::kTrain) ++total[r.category];
  PairedDataset out;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data.manifest.rows[i];
    if (r.split == Split::kTrain) {
      const int keep = static_cast<int>(std::ceil(fraction * total[r.category] - 1e-9));
      if (kept[r.category]++ >= keep) continue;
    }
    out.manifest.rows.push_back(r);
    out.hq.push_back(data.hq[i]);
    out.lq.push_back(data.lq[i]);
  }
  return out;
}

json ablate_gamma(const RunConfig& c, const PairedDataset& data, const std::vector<double>& values) {
  json results = json::array();
  for (double v : values) {
    RunConfig rc = c;
    rc.schedule.gamma_T = v;
    const TrainRun run = train_generalist(rc, data);
    const EvalReport rep = evaluate_model(rc, &run.denoiser, nullptr, data, Split::kTest, "gamma_T=" + std::to_string(v));
    json block = summary_block(rep);
    block["gamma_T"] = v;
    block["final_loss"] = run.result.log.empty() ? 0.0 : run.result.log.back().loss;
    results.push_back(block);
  }
  return {{"ablation", "gamma"}, {"values", values}, {"results", results}};
}

json ablate_scale(const RunConfig& c, const PairedDataset& data, const std::vector<double>& fractions) {
  json results = json::array();
  for (double f : fractions) {
    const PairedDataset sub = subsample_train(data, f);
    const TrainRun run = train_generalist(c, sub);
    const EvalReport rep = evaluate_model(c, &run.denoiser, nullptr, data, Split::kTest, "fraction=" + std::to_string(f));
    json block = summary_block(rep);
    block["fraction"] = f;
    block["train_rows"] = sub.indices(Split::kTrain).size();
    results.push_back(block);
  }
  return {{"ablation", "scale"}, {"fractions", fractions}, {"results", results}};
}

json ablate_pipeline(const RunConfig& c, const PairedDataset& data, const Denoiser& generalist,
                     const ExpertPool& pool) {
  json results = json::array();
  for (PipelineVariant v : all_pipeline_variants()) {
    RunConfig rc = c;
    rc.restore.variant = v;
    const EvalReport rep = evaluate_model(rc, &generalist, &pool, data, Split::kTest, to_string(v));
    json block = summary_block(rep);
    block["variant"] = to_string(v);
    results.push_back(block);
  }
  return {{"ablation", "pipeline"}, {"results", results}};
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
    if (item.empty() || used != item.size() || !std::isfinite(v)) {
      throw ConfigError("expected a comma-separated list of numbers, got '" + text + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("expected at least one value");
  return out;
}

namespace {

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const ShapeError*>(&e)) return "ShapeError";
  if (dynamic_cast<const IndexError*>(&e)) return "IndexError";
  if (dynamic_cast<const OrderingError*>(&e)) return "OrderingError";
  if (dynamic_cast<const TaxonomyError*>(&e)) return "TaxonomyError";
  if (dynamic_cast<const ValidationError*>(&e)) return "ValidationError";
  if (dynamic_cast<const PairingError*>(&e)) return "PairingError";
  if (dynamic_cast<const SizeError*>(&e)) return "SizeError";
  if (dynamic_cast<const CheckpointError*>(&e)) return "CheckpointError";
  if (dynamic_cast<const IoError*>(&e)) return "IoError";
  if (dynamic_cast<const ContractError*>(&e)) return "ContractError";
  if (dynamic_cast<const TrainingError*>(&e)) return "TrainingError";
  return "Error";
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

void emit_json(const json& j, const std::optional<std::string>& path, std::ostream& out) {
  if (path) write_file_atomic(*path, j.dump(2) + "\n");
  out << j.dump(2) << "\n";
}

std::optional<LoadedDenoiser> maybe_load_generalist(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_checkpoint(read_file(path));
}

}  // namespace

int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"restorekit: residual-diffusion all-in-one image restoration toolkit", "restorekit"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> data_dir, run_dir;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--preset", preset, "Start from a preset (desk, full) when no config file is given");
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--data-dir", data_dir, "Dataset directory");
  app.add_option("--run-dir", run_dir, "Run directory");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic paired dataset");
  std::optional<std::string> gen_out, gen_cats, gen_clean;
  std::optional<int> gen_count, gen_size;
  std::optional<double> gen_test;
  gen->add_option("--out", gen_out, "Output directory (default: data dir)");
  gen->add_option("--categories", gen_cats, "Comma-separated category codes (default: all 20)");
  gen->add_option("--count", gen_count, "Pairs per category");
  gen->add_option("--size", gen_size, "Image side in pixels");
  gen->add_option("--test-fraction", gen_test, "Fraction of each category held out");
  gen->add_option("--clean-dir", gen_clean, "Directory of clean PNGs (default: procedural)");

  // train
  auto* train = app.add_subcommand("train", "Train the generalist");
  std::optional<std::string> strategy, resume;
  std::optional<std::int64_t> n, total;
  train->add_option("--strategy", strategy, "mix|combine|sequence|il-ci|il-ic");
  train->add_option("--n", n, "Phase-1 length");
  train->add_option("--total", total, "Total iterations (default 3n)");
  train->add_option("--resume", resume, "Continue from a theta_id checkpoint");

  // experts
  auto* experts = app.add_subcommand("experts", "Train the router and specialists for a generalist");
  std::string ex_ckpt, ex_out;
  experts->add_option("--checkpoint", ex_ckpt, "Generalist checkpoint (default: <run>/final.ckpt)");
  experts->add_option("--out", ex_out, "Pool directory (default: <run>/experts)");

  // restore
  auto* restore = app.add_subcommand("restore", "Restore images with a trained model");
  std::string r_ckpt, r_experts, r_input, r_output, r_split = "test";
  std::optional<int> r_steps, r_tile, r_overlap;
  std::optional<std::string> r_variant;
  restore->add_option("--checkpoint", r_ckpt, "Generalist checkpoint (default: <run>/final.ckpt)");
  restore->add_option("--experts", r_experts, "Expert pool directory");
  restore->add_option("--variant", r_variant, "only_G|only_S|S1_then_S2|S_then_G|G_then_S");
  restore->add_option("--input", r_input, "Directory of LQ PNGs (default: the dataset split)");
  restore->add_option("--split", r_split, "Dataset split when no --input is given");
  restore->add_option("--output", r_output, "Output directory")->required();
  restore->add_option("--steps", r_steps, "Sampling steps (default 4)");
  restore->add_option("--tile", r_tile, "Tile size, 0 for whole images");
  restore->add_option("--overlap", r_overlap, "Tile overlap");

  // eval
  auto* eval = app.add_subcommand("eval", "Score predictions against a dataset");
  std::string e_pred, e_split = "test", e_model;
  std::optional<std::string> e_out, e_md;
  eval->add_option("--pred", e_pred, "Prediction directory (<pair_id>.png)")->required();
  eval->add_option("--split", e_split, "train or test");
  eval->add_option("--out", e_out, "Write the JSON report here");
  eval->add_option("--markdown", e_md, "Write the markdown table here");
  eval->add_option("--model-id", e_model, "Model label for the report");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Run an ablation sweep");
  ablate->require_subcommand(1);
  std::optional<std::string> a_out;
  ablate->add_option("--out", a_out, "Write the JSON result here (default: <run>/ablate_<kind>.json)");
  auto* a_gamma = ablate->add_subcommand("gamma", "Sweep the terminal LQ weight");
  std::string a_values = "0.1,0.3,0.5,0.7";
  a_gamma->add_option("--values", a_values, "Comma-separated values");
  auto* a_scale = ablate->add_subcommand("scale", "Sweep the training-data fraction");
  std::string a_fracs = "0.25,0.5,1";
  a_scale->add_option("--fractions", a_fracs, "Comma-separated fractions");
  auto* a_pipe = ablate->add_subcommand("pipeline", "Compare generalist/specialist pipelines");
  std::string a_ckpt, a_experts;
  a_pipe->add_option("--checkpoint", a_ckpt, "Generalist checkpoint (default: <run>/final.ckpt)");
  a_pipe->add_option("--experts", a_experts, "Expert pool directory (trained if it has no pool.json)");

  // align
  auto* align = app.add_subcommand("align", "Match GT and LQ capture sequences");
  std::string al_input;
  double al_tol = 0.2;
  std::optional<std::string> al_out;
  align->add_option("--input", al_input, "CSV or JSON-lines of sequence records")->required();
  align->add_option("--tolerance", al_tol, "Maximum interval error in seconds");
  align->add_option("--out", al_out, "Write the JSON result here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << json{{"error", "UsageError"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    if (!config_path.empty() && !preset.empty()) throw ConfigError("use either --config or --preset, not both");
    RunConfig c = config_path.empty() ? preset_config(preset.empty() ? "desk" : preset) : load_run_config(config_path);
    apply_env_overrides(c);
    if (seed) {
      c.seed = *seed;
      c.propagate_seed();
    }
    if (data_dir) c.paths.data_dir = *data_dir;
    if (run_dir) c.paths.run_dir = *run_dir;
    const fs::path data_path = c.paths.data_dir;
    const fs::path run_path = c.paths.run_dir;

    if (*gen) {
      if (gen_cats) c.data.categories = split_list(*gen_cats);
      if (gen_count) c.data.count_per_category = *gen_count;
      if (gen_size) c.data.image_size = *gen_size;
      if (gen_test) c.data.test_fraction = *gen_test;
      if (gen_clean) c.data.clean_dir = *gen_clean;
      if (gen_size && c.train.patch_size > c.data.image_size) c.train.patch_size = c.data.image_size;
      validate(c);
      const fs::path dir = gen_out ? fs::path(*gen_out) : data_path;
      const DatasetManifest m = gen_dataset(clean_source(c), gen_options(c), dir);
      out << json{{"dataset", dir.string()}, {"rows", m.rows.size()}}.dump() << "\n";
      return 0;
    }
    if (*train) {
      if (strategy) c.strategy = strategy_from_string(*strategy);
      if (n) c.train.n = *n;
      if (total) c.train.total_iters = *total;
      validate(c);
      const PairedDataset data = load_dataset(data_path);
      const TrainRun run =
          train_generalist(c, data, run_path, resume ? std::optional<fs::path>(*resume) : std::nullopt);
      json ck = json::array();
      for (const auto& k : run.result.checkpoints) ck.push_back((run_path / (k.name + ".ckpt")).string());
      out << json{{"run_dir", run_path.string()},
                  {"iterations", run.result.log.size()},
                  {"final_loss", run.result.log.empty() ? 0.0 : run.result.log.back().loss},
                  {"checkpoints", ck}}
                 .dump()
          << "\n";
      return 0;
    }
    if (*experts) {
      validate(c);
      const LoadedDenoiser g = load_checkpoint(read_file(ex_ckpt.empty() ? run_path / "final.ckpt" : fs::path(ex_ckpt)));
      const PairedDataset data = load_dataset(data_path);
      std::vector<Family> untrained;
      const ExpertPool pool = train_expert_pool(g.denoiser, build_schedule(g.meta.schedule), data,
                                                c.experts.classifier, c.experts.classifier_train,
                                                c.experts.specialist, c.experts.specialist_train, &untrained);
      const fs::path dir = ex_out.empty() ? run_path / "experts" : fs::path(ex_out);
      fs::create_directories(dir);
      save_pool(pool, dir);
      json u = json::array();
      for (Family f : untrained) u.push_back(to_string(f));
      out << json{{"pool", dir.string()}, {"passthrough_families", u}}.dump() << "\n";
      return 0;
    }
    if (*restore) {
      if (r_steps) c.restore.steps = *r_steps;
      if (r_tile) c.restore.tile = *r_tile;
      if (r_overlap) c.restore.overlap = *r_overlap;
      if (r_variant) c.restore.variant = pipeline_variant_from_string(*r_variant);
      const bool needs_g =
          c.restore.variant != PipelineVariant::kOnlyS && c.restore.variant != PipelineVariant::kS1ThenS2;
      std::optional<LoadedDenoiser> g;
      if (needs_g) {
        g = maybe_load_generalist(r_ckpt.empty() ? (run_path / "final.ckpt").string() : r_ckpt);
        c.schedule = g->meta.schedule;
      }
      std::optional<ExpertPool> pool;
      if (c.restore.variant != PipelineVariant::kOnlyG) {
        if (r_experts.empty()) throw ConfigError(std::string(to_string(c.restore.variant)) + " needs --experts");
        pool = load_pool(r_experts);
      }
      validate(c);
      const Denoiser* gp = g ? &g->denoiser : nullptr;
      const ExpertPool* pp = pool ? &*pool : nullptr;
      const fs::path outdir = r_output;
      fs::create_directories(outdir);
      std::size_t count = 0;
      if (!r_input.empty()) {
        for (const auto& p : list_pngs(r_input)) {
          const std::string name = p.filename().string();
          write_png(outdir / name, restore_image(c, gp, pp, read_png(p), derive_seed(c.seed, {4, name_hash(name)})));
          ++count;
        }
      } else {
        const PairedDataset data = load_dataset(data_path);
        const Split split = split_from_string(r_split);
        const auto rows = data.indices(split);
        const auto restored = restore_split(c, gp, pp, data, split);
        for (std::size_t i = 0; i < rows.size(); ++i) {
          write_png(outdir / (data.manifest.rows[rows[i]].pair_id + ".png"), restored[i]);
        }
        count = rows.size();
      }
      out << json{{"output", outdir.string()}, {"restored", count}, {"steps", c.restore.steps},
                  {"variant", to_string(c.restore.variant)}}
                 .dump()
          << "\n";
      return 0;
    }
    if (*eval) {
      const EvalMetadata meta{e_model, c.restore.steps, c.restore.tile};
      const EvalReport rep = evaluate_manifest(e_pred, data_path, split_from_string(e_split), meta);
      if (e_out) write_file_atomic(*e_out, rep.to_json().dump(2) + "\n");
      if (e_md) write_file_atomic(*e_md, rep.to_markdown());
      out << rep.to_markdown();
      return rep.complete() ? 0 : 1;
    }
    if (*ablate) {
      validate(c);
      const PairedDataset data = load_dataset(data_path);
      json result;
      std::string kind;
      if (*a_gamma) {
        kind = "gamma";
        result = ablate_gamma(c, data, parse_number_list(a_values));
      } else if (*a_scale) {
        kind = "scale";
        result = ablate_scale(c, data, parse_number_list(a_fracs));
      } else {
        kind = "pipeline";
        const LoadedDenoiser g =
            load_checkpoint(read_file(a_ckpt.empty() ? run_path / "final.ckpt" : fs::path(a_ckpt)));
        c.schedule = g.meta.schedule;
        const fs::path pool_dir = a_experts.empty() ? run_path / "experts" : fs::path(a_experts);
        ExpertPool pool;
        if (fs::exists(pool_dir / "pool.json")) {
          pool = load_pool(pool_dir);
        } else {
          pool = train_expert_pool(g.denoiser, build_schedule(c.schedule), data, c.experts.classifier,
                                   c.experts.classifier_train, c.experts.specialist, c.experts.specialist_train);
          fs::create_directories(pool_dir);
          save_pool(pool, pool_dir);
        }
        result = ablate_pipeline(c, data, g.denoiser, pool);
      }
      fs::create_directories(run_path);
      emit_json(result, a_out ? *a_out : (run_path / ("ablate_" + kind + ".json")).string(), out);
      return 0;
    }
    if (*align) {
      const auto records = read_sequences(al_input);
      const MatchResult m = match_scenes(records, al_tol);
      json j = to_json(m);
      std::map<std::string, const SequenceRecord*> by_id;
      for (const auto& r : records) by_id[r.id] = &r;
      for (auto& p : j["pairs"]) {
        const FramePairing fp = pair_frames(*by_id.at(p["gt"]), *by_id.at(p["lq"]));
        p["frames"] = {{"pairs", fp.pairs.size()},
                       {"gt_first", fp.pairs.empty() ? -1 : fp.pairs.front().first},
                       {"lq_first", fp.pairs.empty() ? -1 : fp.pairs.front().second},
                       {"warnings", fp.warnings}};
      }
      if (al_out) write_file_atomic(*al_out, j.dump(2) + "\n");
      out << m.summary();
      return 0;
    }
  } catch (const std::exception& e) {
    err << json{{"error", error_kind(e)}, {"message", e.what()}}.dump() << "\n";
    return dynamic_cast<const ConfigError*>(&e) ? 2 : 1;
  }
  return 0;
}

}  // namespace restorekit
