#include <cmath>
#include <filesystem>
#include <random>
#include <map>

#include "doctest.h"
#include "restorekit/error.hpp"
#include "restorekit/evalkit.hpp"
#include "restorekit/io.hpp"
#include "test_util.hpp"

using namespace restorekit;
using restorekit::testing::constant_image;
using restorekit::testing::random_image;

namespace {

// Direct 2D-window SSIM, no separable filtering.
double ssim_direct(const Image& a, const Image& b) {
  const int r = 5;
  double g[11][11], gs = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      g[i][j] = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2.0 * 1.5 * 1.5));
      gs += g[i][j];
    }
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0;
    int n = 0;
    for (int y = 0; y + 11 <= a.height(); ++y)
      for (int x = 0; x + 11 <= a.width(); ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double w = g[i][j] / gs, va = a.at(c, y + i, x + j), vb = b.at(c, y + i, x + j);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        const double vaa = saa - ma * ma, vbb = sbb - mb * mb, cab = sab - ma * mb;
        sum += (2 * ma * mb + c1) * (2 * cab + c2) / ((ma * ma + mb * mb + c1) * (vaa + vbb + c2));
        ++n;
      }
    total += sum / n;
  }
  return total / 3.0;
}

PairedDataset small_dataset() {
  GenOptions opt;
  opt.categories = {"N", "B", "L+N"};
  opt.count_per_category = 4;
  opt.seed = 5;
  opt.test_fraction = 0.5;
  return synthesize_dataset(CleanSource{std::nullopt, 24}, opt);
}

}  // namespace

TEST_CASE("psnr closed forms") {
  const Image a = random_image(16, 16, 1, 0.1, 0.8);
  CHECK(std::isinf(psnr(a, a)));
  Image b = a;
  b += 16.0 / 255.0;
  CHECK(psnr(a, b) == doctest::Approx(20.0 * std::log10(255.0 / 16.0)).epsilon(1e-12));
  CHECK(psnr(a * 255.0, b * 255.0, 255.0) == doctest::Approx(psnr(a, b)).epsilon(1e-9));
  CHECK_THROWS_AS(psnr(a, Image(16, 15)), ShapeError);
  CHECK_THROWS_AS(psnr(a, b, 0.0), ConfigError);
}

TEST_CASE("psnr and ssim are symmetric") {
  for (int i = 0; i < 100; ++i) {
    const Image a = random_image(12, 13, 100 + i);
    const Image b = random_image(12, 13, 500 + i);
    CHECK(psnr(a, b) == psnr(b, a));
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
  }
}

TEST_CASE("psnr falls as noise grows") {
  const Image clean = random_image(32, 32, 9, 0.2, 0.8);
  double prev = kPsnrInfinity;
  for (double sigma : {0.01, 0.05, 0.1, 0.2}) {
    const double p = psnr(add_gaussian_noise(clean, sigma, 42), clean);
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim closed forms and direct oracle") {
  const Image x = random_image(20, 23, 3);
  CHECK(std::abs(ssim(x, x) - 1.0) < 1e-9);
  const double c1 = 1e-4;
  CHECK(std::abs(ssim(constant_image(16, 16, 0.0), constant_image(16, 16, 1.0)) - c1 / (1.0 + c1)) < 1e-9);
  for (int i = 0; i < 5; ++i) {
    const Image a = random_image(17, 21, 40 + i);
    Image b = add_gaussian_noise(a, 0.1, 90 + i);
    const double s = ssim(a, b);
    CHECK(s == doctest::Approx(ssim_direct(a, b)).epsilon(1e-10));
    CHECK(s <= 1.0);
    CHECK(s >= -1.0);
  }
  CHECK_THROWS_AS(ssim(Image(10, 20), Image(10, 20)), SizeError);
  CHECK_THROWS_AS(ssim(Image(12, 12), Image(12, 13)), ShapeError);
}

TEST_CASE("tiling is invariant for identity and additive functions") {
  const Image img = random_image(70, 90, 77);
  const RestoreFn identity = [](const Image& t) { return t; };
  const RestoreFn shift = [](const Image& t) { return t + constant_image(t.height(), t.width(), 0.25); };
  Image shifted = img;
  shifted += 0.25;
  for (int tile : {32, 64, 90}) {
    for (int overlap : {0, 8, 16}) {
      CAPTURE(tile);
      CAPTURE(overlap);
      CHECK(max_abs_diff(tile_restore(identity, img, tile, overlap), img) < 1e-6);
      CHECK(max_abs_diff(tile_restore(shift, img, tile, overlap), shifted) < 1e-6);
    }
  }
}

TEST_CASE("whole-image tile calls the function once") {
  const Image img = random_image(20, 30, 4);
  int calls = 0;
  const RestoreFn fn = [&](const Image& t) {
    ++calls;
    Image o = t;
    o *= 0.5;
    return o;
  };
  const Image out = tile_restore(fn, img, 30, 4);
  CHECK(calls == 1);
  CHECK(out == img * 0.5);

  calls = 0;
  tile_restore(fn, img, 12, 2);
  CHECK(calls > 1);
}

TEST_CASE("tiling errors") {
  const Image img = random_image(20, 20, 4);
  const RestoreFn identity = [](const Image& t) { return t; };
  CHECK_THROWS_AS(tile_restore(identity, img, 16, 16), ConfigError);
  CHECK(max_abs_diff(tile_restore(identity, img, 16, 15), img) < 1e-6);
  CHECK_THROWS_AS(tile_restore(identity, img, 16, -1), ConfigError);
  const RestoreFn shrink = [](const Image& t) { return t.crop(0, 0, t.height() - 1, t.width()); };
  CHECK_THROWS_AS(tile_restore(shrink, img, 8, 2), ContractError);
  CHECK_THROWS_AS(tile_restore(shrink, img, 64, 2), ContractError);
}

TEST_CASE("report averages are unweighted over categories") {
  std::vector<PairScore> s = {{"a0", "N", 18.0, 0.5}, {"a1", "N", 22.0, 0.7}, {"b0", "B", 30.0, 0.9}};
  const EvalReport r = aggregate(s, {}, "test");
  REQUIRE(r.categories.size() == 2);
  CHECK(r.categories[0].category == "B");  // taxonomy order
  CHECK(r.average_psnr == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(r.average_ssim == doctest::Approx(0.75).epsilon(1e-12));
  const auto j = r.to_json();
  CHECK(j["average"]["psnr"] == 25.0);
  CHECK(j["coverage"]["complete"] == true);
  const std::string md = r.to_markdown();
  CHECK(md.find("| Metric | B | N | Average |") != std::string::npos);
  CHECK(md.find("25.00") != std::string::npos);
}

TEST_CASE("infinite psnr is excluded from means and clamped for display") {
  std::vector<PairScore> s = {{"a0", "N", kPsnrInfinity, 1.0}, {"a1", "N", 20.0, 0.8}, {"b0", "B", kPsnrInfinity, 1.0}};
  const EvalReport r = aggregate(s, {}, "test");
  CHECK(r.categories[1].mean_psnr == 20.0);
  CHECK(r.categories[1].infinite_psnr == 1);
  CHECK(std::isinf(r.categories[0].mean_psnr));
  const auto j = r.to_json();
  CHECK(j["categories"][0]["mean_psnr"] == kPsnrDisplayClamp);
  CHECK(j["pairs"][0]["psnr_infinite"] == true);
}

TEST_CASE("identity and LQ predictions") {
  const PairedDataset d = small_dataset();
  const auto rows = d.indices(Split::kTest);
  std::vector<std::optional<Image>> hq, lq;
  for (auto i : rows) {
    hq.emplace_back(d.hq[i]);
    lq.emplace_back(d.lq[i]);
  }
  const EvalReport perfect = evaluate_pairs(d, rows, hq, {"copy", 4, 0}, "test");
  for (const auto& p : perfect.pairs) {
    CHECK(std::isinf(p.psnr));
    CHECK(std::abs(p.ssim - 1.0) < 1e-9);
  }
  CHECK(perfect.to_json()["average"]["psnr"] == kPsnrDisplayClamp);

  const EvalReport base = evaluate_pairs(d, rows, lq, {}, "test");
  REQUIRE(base.pairs.size() == rows.size());
  std::map<std::string, std::vector<double>> per_cat;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& hqi = d.hq[rows[k]];
    const auto& lqi = d.lq[rows[k]];
    double se = 0.0;
    for (std::size_t v = 0; v < hqi.size(); ++v) se += std::pow(hqi.values()[v] - lqi.values()[v], 2);
    const double want = 10.0 * std::log10(hqi.size() / se);
    CHECK(base.pairs[k].psnr == doctest::Approx(want).epsilon(1e-9));
    per_cat[d.manifest.rows[rows[k]].category].push_back(want);
  }
  double avg = 0.0;
  for (const auto& [c, v] : per_cat) {
    double m = 0.0;
    for (double x : v) m += x;
    avg += m / v.size();
  }
  avg /= per_cat.size();
  CHECK(std::abs(base.average_psnr - avg) < 1e-9);
}

TEST_CASE("manifest evaluation reads predictions and reports missing rows") {
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / "restorekit_eval_test";
  fs::remove_all(root);
  GenOptions opt;
  opt.categories = {"N", "H"};
  opt.count_per_category = 4;
  opt.seed = 8;
  opt.test_fraction = 0.5;
  const DatasetManifest m = gen_dataset(CleanSource{std::nullopt, 16}, opt, root / "data");
  fs::create_directories(root / "pred");
  std::string skipped;
  for (const auto& r : m.rows) {
    if (r.split != Split::kTest) continue;
    if (skipped.empty()) {
      skipped = r.pair_id;
      continue;
    }
    fs::copy_file(root / "data" / r.hq_path, root / "pred" / (r.pair_id + ".png"));
  }
  const EvalReport rep = evaluate_manifest(root / "pred", root / "data", Split::kTest, {"m", 4, 0});
  CHECK_FALSE(rep.complete());
  REQUIRE(rep.missing.size() == 1);
  CHECK(rep.missing[0] == skipped);
  CHECK(rep.pairs.size() == 3);
  CHECK(rep.to_json()["coverage"]["complete"] == false);
  CHECK(rep.to_markdown().find(skipped) != std::string::npos);
  fs::remove_all(root);
}
