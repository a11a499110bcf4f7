#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "restorekit/config.hpp"
#include "restorekit/evalkit.hpp"

namespace restorekit {

// Experiment building blocks shared by the command-line tool, the acceptance
// runner and the Python module. All of them are deterministic in the config.

GenOptions gen_options(const RunConfig& c);
CleanSource clean_source(const RunConfig& c);

struct TrainRun {
  ResidualDenoiser denoiser;
  TrainResult result;
};

/// Train the generalist with the configured strategy. With a run directory,
/// writes config.json, run_log.jsonl, theta_id.ckpt (incremental strategies)
/// and final.ckpt, each atomically. `resume` continues from a theta_id
/// checkpoint at iteration n.
TrainRun train_generalist(const RunConfig& c, const PairedDataset& data,
                          const std::optional<std::filesystem::path>& run_dir = std::nullopt,
                          const std::optional<std::filesystem::path>& resume = std::nullopt);

/// Restore one image with the configured steps, tiling and pipeline variant.
Image restore_image(const RunConfig& c, const Denoiser* generalist, const ExpertPool* pool, const Image& lq,
                    std::uint64_t seed);

/// Restore every row of `split`; the seed of row r is derived from (c.seed, r).
std::vector<Image> restore_split(const RunConfig& c, const Denoiser* generalist, const ExpertPool* pool,
                                 const PairedDataset& data, Split split);

/// Evaluate restorations of `split` against HQ.
EvalReport evaluate_model(const RunConfig& c, const Denoiser* generalist, const ExpertPool* pool,
                          const PairedDataset& data, Split split, const std::string& model_id);

/// Per-category PSNR lists of a report: {"N": [..], ...}.
nlohmann::json psnr_lists(const EvalReport& r);

/// One training run per value of the terminal LQ weight; returns
/// {"values": [...], "results": [{"gamma_T", "average_psnr", "per_category"}]}.
nlohmann::json ablate_gamma(const RunConfig& c, const PairedDataset& data, const std::vector<double>& values);

/// One training run per fraction of each category's train rows.
nlohmann::json ablate_scale(const RunConfig& c, const PairedDataset& data, const std::vector<double>& fractions);

/// Every pipeline variant on the test split with a fixed generalist and pool.
nlohmann::json ablate_pipeline(const RunConfig& c, const PairedDataset& data, const Denoiser& generalist,
                               const ExpertPool& pool);

/// Keep the first ceil(fraction * count) train rows of each category; test rows are kept.
PairedDataset subsample_train(const PairedDataset& data, double fraction);

/// Parse "0.1,0.3,0.5". Throws ConfigError on malformed input.
std::vector<double> parse_number_list(const std::string& text);

/// Entry point of the `restorekit` tool. Errors are printed to `err` as one
/// JSON object {"error": kind, "message": text}; the exit status is 2 for
/// usage and configuration errors and 1 for other failures.
int run_command(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace restorekit
