#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "restorekit/image.hpp"
#include "restorekit/rng.hpp"

namespace restorekit {

// ---------------------------------------------------------------------------
// Taxonomy

/// The 20 category codes: 7 isolated followed by 13 coupled.
const std::vector<std::string>& taxonomy();
const std::vector<std::string>& isolated_categories();
const std::vector<std::string>& coupled_categories();

bool is_known_category(const std::string& code);
/// Single operator categories form the isolated class D_i.
bool is_isolated(const std::string& code);

/// Constituent letters of a code, e.g. "L+B+N" -> {"L","B","N"}.
std::vector<std::string> category_letters(const std::string& code);

/// Operator names in canonical composition order:
/// lowlight, haze, rain, raindrop, blur, noise, jpeg.
const std::vector<std::string>& canonical_operator_order();
std::string operator_for_letter(const std::string& letter);

// ---------------------------------------------------------------------------
// Specs

struct DegradationOp {
  std::string name;
  std::map<std::string, double> params;
  bool operator==(const DegradationOp&) const = default;
};

struct DegradationSpec {
  std::string category;
  std::vector<DegradationOp> operators;
  std::uint64_t seed = 0;

  /// Throws TaxonomyError if the operators do not match the category letters
  /// in canonical order.
  void validate() const;
  bool operator==(const DegradationSpec&) const = default;
};

/// Draw operator parameters for `category`. Ranges:
///   blur      kind 0 = Gaussian sigma in [1,4], kind 1 = linear motion length in [5,21] px
///   noise     Gaussian sigma in [0.02, 0.2]
///   jpeg      quality in [10, 50]
///   haze      airlight A in [0.7, 1.0], scattering beta in [0.5, 2.0]
///   rain      50..300 streaks at a 256 px image side (count scales with the
///             shorter side), within +-10 deg of vertical
///   raindrop  3..12 blurred, brightened discs
///   lowlight  gain in [0.1, 0.6], gamma in [1.8, 3.0]
DegradationSpec sample_spec(const std::string& category, Rng& rng);

/// Apply every operator in order; each operator draws randomness from a seed
/// derived from (spec.seed, operator index). Output is clamped to [0,1].
Image apply(const DegradationSpec& spec, const Image& clean);

/// Single operator with an explicit stream seed; apply() is the composition
/// of these with seeds derive_seed(spec.seed, {index}).
Image apply_operator(const DegradationOp& op, const Image& img, std::uint64_t seed);

// Individual operators, exposed for tests and tooling.
std::vector<double> gaussian_kernel_1d(double sigma);
Image gaussian_blur(const Image& img, double sigma);
Image motion_blur(const Image& img, int length, double angle_deg);
Image lowlight(const Image& img, double gain, double gamma);
Image haze(const Image& img, double airlight, double beta, std::uint64_t seed);
Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed);

/// In-memory JPEG round trip: 4:4:4 YCbCr, 8x8 DCT, standard luminance and
/// chrominance tables with the conventional quality scaling.
Image jpeg_roundtrip(const Image& img, int quality);
/// Quantization table (natural order) for quality in [1,100]; entries in [1,255].
std::array<int, 64> jpeg_quant_table(int quality, bool chroma);

/// Smooth random colour field with a few geometric shapes; values in [0.05, 0.95].
Image procedural_image(int height, int width, std::uint64_t seed);

void to_json(nlohmann::json& j, const DegradationSpec& s);
void from_json(const nlohmann::json& j, DegradationSpec& s);

// ---------------------------------------------------------------------------
// Datasets

enum class Split { kTrain, kTest };
const char* to_string(Split s);
Split split_from_string(const std::string& s);

struct ManifestRow {
  std::string pair_id;
  std::string category;
  DegradationSpec spec;
  std::uint64_t seed = 0;
  std::string clean_ref;
  std::string lq_path;  // relative to the manifest directory
  std::string hq_path;
  Split split = Split::kTrain;
  bool operator==(const ManifestRow&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestRow> rows;

  /// JSON-lines, one row per line with fixed field names.
  std::string to_jsonl() const;
  static DatasetManifest from_jsonl(const std::string& text);
};

/// Clean images come from a directory of PNGs or from the procedural generator.
struct CleanSource {
  std::optional<std::filesystem::path> directory;
  int image_size = 64;
};

struct GenOptions {
  std::vector<std::string> categories;
  int count_per_category = 1;
  std::uint64_t seed = 0;
  /// Last round(count * test_fraction) rows of each category become test rows
  /// (at least one when count >= 2 and the fraction is positive).
  double test_fraction = 0.1;
};

/// A manifest with its images resident in memory.
struct PairedDataset {
  DatasetManifest manifest;
  std::vector<Image> hq;
  std::vector<Image> lq;

  std::size_t size() const { return manifest.rows.size(); }
  /// Indices of rows in `split`.
  std::vector<std::size_t> indices(Split split) const;
  /// Rows whose category is in `categories` (all rows when empty).
  PairedDataset subset(const std::vector<std::string>& categories) const;
};

/// Generate pairs in memory. Both images are quantized to 8 bits so results
/// match what gen_dataset writes to disk.
PairedDataset synthesize_dataset(const CleanSource& source, const GenOptions& options);

/// Generate pairs and write hq/*.png, lq/*.png and manifest.jsonl under out_dir.
DatasetManifest gen_dataset(const CleanSource& source, const GenOptions& options,
                            const std::filesystem::path& out_dir);

/// Load manifest.jsonl and its images from a dataset directory.
PairedDataset load_dataset(const std::filesystem::path& dir);

}  // namespace restorekit
