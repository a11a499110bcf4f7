#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "restorekit/degrade.hpp"
#include "restorekit/error.hpp"
#include "restorekit/io.hpp"

namespace restorekit {

namespace fs = std::filesystem;

const char* to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "test") return Split::kTest;
  throw ValidationError("unknown split '" + s + "'");
}

namespace {

std::string pair_id_for(const std::string& category, int index) {
  std::string cat = category;
  std::replace(cat.begin(), cat.end(), '+', '_');
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return cat + "-" + buf;
}

int test_rows(int count, double fraction) {
  if (fraction <= 0.0 || count < 2) return 0;
  const int n = static_cast<int>(std::lround(count * fraction));
  return std::clamp(n, 1, count - 1);
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("clean source is not a readable directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") files.push_back(entry.path());
  }
  if (ec) throw IoError("cannot list " + dir.string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .png images in clean source " + dir.string());
  return files;
}

struct Generated {
  ManifestRow row;
  Image hq;
  Image lq;
};

Generated generate_row(const CleanSource& source, const std::vector<fs::path>& files,
                       const std::string& category, int row_index, int count,
                       const GenOptions& options) {
  const auto& tax = taxonomy();
  const auto cat_index = static_cast<std::uint64_t>(std::find(tax.begin(), tax.end(), category) - tax.begin());
  const std::uint64_t row_seed = derive_seed(options.seed, {cat_index, static_cast<std::uint64_t>(row_index)});

  Generated g;
  Rng clean_rng(derive_seed(row_seed, {1}));
  if (source.directory) {
    const auto& file = files[clean_rng.next_u64() % files.size()];
    const Image full = read_png(file);
    const int h = std::min(source.image_size, full.height());
    const int w = std::min(source.image_size, full.width());
    const int y = static_cast<int>(clean_rng.uniform_int(0, full.height() - h));
    const int x = static_cast<int>(clean_rng.uniform_int(0, full.width() - w));
    g.hq = full.crop(y, x, h, w);
    g.row.clean_ref = file.filename().string() + "@" + std::to_string(y) + "," + std::to_string(x);
  } else {
    const std::uint64_t img_seed = clean_rng.next_u64();
    g.hq = quantize8(procedural_image(source.image_size, source.image_size, img_seed));
    g.row.clean_ref = "procedural:" + std::to_string(img_seed);
  }

  Rng spec_rng(derive_seed(row_seed, {2}));
  g.row.spec = sample_spec(category, spec_rng);
  g.lq = quantize8(apply(g.row.spec, g.hq));

  g.row.pair_id = pair_id_for(category, row_index);
  g.row.category = category;
  g.row.seed = row_seed;
  g.row.hq_path = "hq/" + g.row.pair_id + ".png";
  g.row.lq_path = "lq/" + g.row.pair_id + ".png";
  g.row.split = row_index >= count - test_rows(count, options.test_fraction) ? Split::kTest : Split::kTrain;
  return g;
}

void check_options(const GenOptions& options) {
  if (options.count_per_category < 1) throw ConfigError("count per category must be >= 1");
  if (options.categories.empty()) throw ConfigError("no categories requested");
  for (const auto& c : options.categories) {
    if (!is_known_category(c)) throw TaxonomyError("unknown degradation category '" + c + "'");
  }
  if (!(options.test_fraction >= 0.0 && options.test_fraction < 1.0)) {
    throw ConfigError("test_fraction must be in [0,1)");
  }
}

template <typename Sink>
void generate_all(const CleanSource& source, const GenOptions& options, Sink&& sink) {
  check_options(options);
  std::vector<fs::path> files;
  if (source.directory) files = list_pngs(*source.directory);
  for (const auto& category : options.categories)
    for (int i = 0; i < options.count_per_category; ++i)
      sink(generate_row(source, files, category, i, options.count_per_category, options));
}

}  // namespace

std::string DatasetManifest::to_jsonl() const {
  std::string out;
  for (const auto& r : rows) {
    nlohmann::json j = {{"pair_id", r.pair_id},   {"category", r.category}, {"spec", r.spec},
                        {"seed", r.seed},         {"clean_ref", r.clean_ref}, {"lq_path", r.lq_path},
                        {"hq_path", r.hq_path},   {"split", to_string(r.split)}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

DatasetManifest DatasetManifest::from_jsonl(const std::string& text) {
  DatasetManifest m;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestRow r;
      r.pair_id = j.at("pair_id").get<std::string>();
      r.category = j.at("category").get<std::string>();
      r.spec = j.at("spec").get<DegradationSpec>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.clean_ref = j.at("clean_ref").get<std::string>();
      r.lq_path = j.at("lq_path").get<std::string>();
      r.hq_path = j.at("hq_path").get<std::string>();
      r.split = split_from_string(j.at("split").get<std::string>());
      m.rows.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

std::vector<std::size_t> PairedDataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.rows.size(); ++i)
    if (manifest.rows[i].split == split) out.push_back(i);
  return out;
}

PairedDataset PairedDataset::subset(const std::vector<std::string>& categories) const {
  PairedDataset out;
  for (std::size_t i = 0; i < size(); ++i) {
    const auto& cat = manifest.rows[i].category;
    if (!categories.empty() && std::find(categories.begin(), categories.end(), cat) == categories.end()) continue;
    out.manifest.rows.push_back(manifest.rows[i]);
    out.hq.push_back(hq[i]);
    out.lq.push_back(lq[i]);
  }
  return out;
}

PairedDataset synthesize_dataset(const CleanSource& source, const GenOptions& options) {
  PairedDataset ds;
  generate_all(source, options, [&](Generated g) {
    ds.manifest.rows.push_back(std::move(g.row));
    ds.hq.push_back(std::move(g.hq));
    ds.lq.push_back(std::move(g.lq));
  });
  return ds;
}

DatasetManifest gen_dataset(const CleanSource& source, const GenOptions& options, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir / "hq", ec);
  fs::create_directories(out_dir / "lq", ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string());
  DatasetManifest manifest;
  generate_all(source, options, [&](Generated g) {
    write_png(out_dir / g.row.hq_path, g.hq);
    write_png(out_dir / g.row.lq_path, g.lq);
    manifest.rows.push_back(std::move(g.row));
  });
  write_file_atomic(out_dir / "manifest.jsonl", manifest.to_jsonl());
  return manifest;
}

PairedDataset load_dataset(const fs::path& dir) {
  PairedDataset ds;
  ds.manifest = DatasetManifest::from_jsonl(read_file(dir / "manifest.jsonl"));
  for (const auto& r : ds.manifest.rows) {
    ds.hq.push_back(read_png(dir / r.hq_path));
    ds.lq.push_back(read_png(dir / r.lq_path));
  }
  return ds;
}

}  // namespace restorekit
