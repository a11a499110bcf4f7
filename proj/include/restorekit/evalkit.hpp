#pragma once

#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "restorekit/degrade.hpp"
#include "restorekit/image.hpp"

namespace restorekit {

/// Returned by psnr for identical images.
inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();
/// Reports show infinite PSNR as this many dB.
inline constexpr double kPsnrDisplayClamp = 100.0;

/// MSE pooled over all three channels. Throws ShapeError on mismatched shapes
/// and ConfigError when peak <= 0.
double psnr(const Image& a, const Image& b, double peak = 1.0);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Gaussian-windowed SSIM over valid windows, averaged per channel then over
/// RGB. Throws SizeError if either side is below the window size.
double ssim(const Image& a, const Image& b, double peak = 1.0);

using RestoreFn = std::function<Image(const Image&)>;

/// Restore tile by tile and blend with linear feathering over the overlaps.
/// Weights are normalized, so an identity function reproduces the input.
/// When the tile covers the image, fn is called once on the whole image.
/// Overlaps up to tile - 1 are accepted; the ramps from both sides of a tile
/// then meet. Throws ConfigError unless tile > overlap >= 0, ContractError if fn
/// changes a tile's shape.
Image tile_restore(const RestoreFn& fn, const Image& image, int tile, int overlap);

struct EvalMetadata {
  std::string model_id;
  int steps = 4;
  int tile = 0;  // 0 = whole image
};

struct PairScore {
  std::string pair_id;
  std::string category;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct CategoryScore {
  std::string category;
  int count = 0;
  /// Mean over finite per-pair values; kPsnrInfinity when every pair is exact.
  double mean_psnr = 0.0;
  int infinite_psnr = 0;
  double mean_ssim = 0.0;
};

struct EvalReport {
  EvalMetadata metadata;
  std::string split;
  std::vector<CategoryScore> categories;  // taxonomy order
  /// Unweighted means of the per-category means.
  double average_psnr = 0.0;
  double average_ssim = 0.0;
  std::vector<PairScore> pairs;
  std::vector<std::string> missing;  // pair ids with no prediction
  bool complete() const { return missing.empty(); }

  nlohmann::json to_json() const;
  /// One column per category plus "Average"; rows PSNR and SSIM.
  std::string to_markdown() const;
};

/// Aggregate per-pair scores: per category, then an unweighted mean over categories.
EvalReport aggregate(std::vector<PairScore> pairs, const EvalMetadata& meta, const std::string& split);

/// predictions[i] scores against data.hq[rows[i]]; rows without a prediction
/// (nullopt) are listed as missing.
EvalReport evaluate_pairs(const PairedDataset& data, const std::vector<std::size_t>& rows,
                          const std::vector<std::optional<Image>>& predictions, const EvalMetadata& meta,
                          const std::string& split);

/// Predictions are read from pred_dir/<pair_id>.png for every row of `split`
/// in dataset_dir/manifest.jsonl.
EvalReport evaluate_manifest(const std::filesystem::path& pred_dir, const std::filesystem::path& dataset_dir,
                             Split split, const EvalMetadata& meta = {});

}  // namespace restorekit
