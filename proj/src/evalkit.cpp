#include "restorekit/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "restorekit/error.hpp"
#include "restorekit/io.hpp"

namespace restorekit {

namespace fs = std::filesystem;

double psnr(const Image& a, const Image& b, double peak) {
  require_same_shape(a, b, "psnr");
  if (!(peak > 0.0)) throw ConfigError("psnr peak must be positive");
  if (a.empty()) throw ShapeError("psnr of empty images");
  const auto va = a.values();
  const auto vb = b.values();
  double sum = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = va[i] - vb[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(va.size());
  if (mse == 0.0) return kPsnrInfinity;
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

std::vector<double> ssim_window() {
  std::vector<double> w(kSsimWindow);
  const int r = kSsimWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    w[i] = std::exp(-0.5 * (i - r) * (i - r) / (kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable valid-mode filter of an h x w plane; output is (h-10) x (w-10).
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1, ow = w - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

// Linear ramp on the sides of a tile that border another tile.
std::vector<double> feather(int len, int overlap, bool ramp_start, bool ramp_end) {
  std::vector<double> w(len, 1.0);
  for (int i = 0; i < overlap && i < len; ++i) {
    const double r = (i + 1.0) / (overlap + 1.0);
    if (ramp_start) w[i] = std::min(w[i], r);
    if (ramp_end) w[len - 1 - i] = std::min(w[len - 1 - i], r);
  }
  return w;
}

std::vector<int> tile_starts(int dim, int tile, int overlap) {
  if (tile >= dim) return {0};
  std::vector<int> starts;
  const int stride = tile - overlap;
  for (int s = 0;; s += stride) {
    if (s + tile >= dim) {
      starts.push_back(dim - tile);
      break;
    }
    starts.push_back(s);
  }
  return starts;
}

double display_psnr(double v) { return std::isinf(v) ? kPsnrDisplayClamp : v; }

std::string fmt(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

double ssim(const Image& a, const Image& b, double peak) {
  require_same_shape(a, b, "ssim");
  if (!(peak > 0.0)) throw ConfigError("ssim peak must be positive");
  const int h = a.height(), w = a.width();
  if (h < kSsimWindow || w < kSsimWindow) {
    throw SizeError("ssim needs images of at least " + std::to_string(kSsimWindow) + "x" +
                    std::to_string(kSsimWindow) + ", got " + std::to_string(h) + "x" + std::to_string(w));
  }
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const auto k = ssim_window();
  const std::size_t n = static_cast<std::size_t>(h) * w;
  double total = 0.0;
  for (int c = 0; c < Image::kChannels; ++c) {
    const auto pa = a.plane(c);
    const auto pb = b.plane(c);
    std::vector<double> x(pa.begin(), pa.end()), y(pb.begin(), pb.end());
    std::vector<double> xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, k);
    const auto my = filter_valid(y, h, w, k);
    const auto sxx = filter_valid(xx, h, w, k);
    const auto syy = filter_valid(yy, h, w, k);
    const auto sxy = filter_valid(xy, h, w, k);
    double sum = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cxy = sxy[i] - mx[i] * my[i];
      sum += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += sum / static_cast<double>(mx.size());
  }
  return total / Image::kChannels;
}

Image tile_restore(const RestoreFn& fn, const Image& image, int tile, int overlap) {
  if (overlap < 0 || tile <= overlap) {
    throw ConfigError("tiling needs tile > overlap >= 0 (tile " + std::to_string(tile) + ", overlap " +
                      std::to_string(overlap) + ")");
  }
  auto checked = [&](const Image& in) {
    Image out = fn(in);
    if (!out.same_shape(in)) {
      throw ContractError("restore function changed a " + std::to_string(in.height()) + "x" +
                          std::to_string(in.width()) + " tile to " + std::to_string(out.height()) + "x" +
                          std::to_string(out.width()));
    }
    return out;
  };
  const int h = image.height(), w = image.width();
  if (tile >= h && tile >= w) return checked(image);

  const auto ys = tile_starts(h, tile, overlap);
  const auto xs = tile_starts(w, tile, overlap);
  Image acc(h, w, 0.0);
  std::vector<double> weight(static_cast<std::size_t>(h) * w, 0.0);
  for (std::size_t iy = 0; iy < ys.size(); ++iy) {
    const int th = std::min(tile, h);
    const auto wy = feather(th, overlap, iy > 0, iy + 1 < ys.size());
    for (std::size_t ix = 0; ix < xs.size(); ++ix) {
      const int tw = std::min(tile, w);
      const auto wx = feather(tw, overlap, ix > 0, ix + 1 < xs.size());
      const Image out = checked(image.crop(ys[iy], xs[ix], th, tw));
      for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x) {
          const double wt = wy[y] * wx[x];
          weight[static_cast<std::size_t>(ys[iy] + y) * w + xs[ix] + x] += wt;
          for (int c = 0; c < Image::kChannels; ++c) acc.at(c, ys[iy] + y, xs[ix] + x) += wt * out.at(c, y, x);
        }
    }
  }
  for (int c = 0; c < Image::kChannels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) acc.at(c, y, x) /= weight[static_cast<std::size_t>(y) * w + x];
  return acc;
}

EvalReport aggregate(std::vector<PairScore> pairs, const EvalMetadata& meta, const std::string& split) {
  EvalReport rep;
  rep.metadata = meta;
  rep.split = split;
  std::map<std::string, std::vector<const PairScore*>> by_cat;
  for (const auto& p : pairs) by_cat[p.category].push_back(&p);

  std::vector<std::string> order;
  for (const auto& c : taxonomy())
    if (by_cat.count(c)) order.push_back(c);
  for (const auto& [c, v] : by_cat)
    if (std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);

  for (const auto& c : order) {
    CategoryScore cs;
    cs.category = c;
    const auto& v = by_cat[c];
    cs.count = static_cast<int>(v.size());
    double psum = 0.0, ssum = 0.0;
    int finite = 0;
    for (const auto* p : v) {
      if (std::isinf(p->psnr)) {
        ++cs.infinite_psnr;
      } else {
        psum += p->psnr;
        ++finite;
      }
      ssum += p->ssim;
    }
    cs.mean_psnr = finite > 0 ? psum / finite : kPsnrInfinity;
    cs.mean_ssim = ssum / cs.count;
    rep.categories.push_back(cs);
  }
  if (!rep.categories.empty()) {
    double ps = 0.0, ss = 0.0;
    for (const auto& cs : rep.categories) {
      ps += cs.mean_psnr;
      ss += cs.mean_ssim;
    }
    rep.average_psnr = ps / rep.categories.size();
    rep.average_ssim = ss / rep.categories.size();
  }
  rep.pairs = std::move(pairs);
  return rep;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : categories) {
    cats.push_back({{"category", c.category},
                    {"count", c.count},
                    {"mean_psnr", display_psnr(c.mean_psnr)},
                    {"infinite_psnr", c.infinite_psnr},
                    {"mean_ssim", c.mean_ssim}});
  }
  nlohmann::json ps = nlohmann::json::array();
  for (const auto& p : pairs) {
    ps.push_back({{"pair_id", p.pair_id},
                  {"category", p.category},
                  {"psnr", display_psnr(p.psnr)},
                  {"psnr_infinite", std::isinf(p.psnr)},
                  {"ssim", p.ssim}});
  }
  return {{"metadata", {{"model_id", metadata.model_id}, {"steps", metadata.steps}, {"tile", metadata.tile}}},
          {"split", split},
          {"categories", cats},
          {"average", {{"psnr", display_psnr(average_psnr)}, {"ssim", average_ssim}}},
          {"coverage", {{"complete", complete()}, {"scored", pairs.size()}, {"missing", missing}}},
          {"pairs", ps}};
}

std::string EvalReport::to_markdown() const {
  std::ostringstream os;
  os << "Model: " << (metadata.model_id.empty() ? "-" : metadata.model_id) << ", steps " << metadata.steps
     << ", tile " << (metadata.tile > 0 ? std::to_string(metadata.tile) : std::string("full")) << ", split "
     << split << "\n\n";
  os << "| Metric |";
  for (const auto& c : categories) os << " " << c.category << " |";
  os << " Average |\n|---|";
  for (std::size_t i = 0; i <= categories.size(); ++i) os << "---:|";
  os << "\n| PSNR |";
  for (const auto& c : categories) os << " " << fmt(display_psnr(c.mean_psnr), 2) << " |";
  os << " " << fmt(display_psnr(average_psnr), 2) << " |\n| SSIM |";
  for (const auto& c : categories) os << " " << fmt(c.mean_ssim, 4) << " |";
  os << " " << fmt(average_ssim, 4) << " |\n";
  if (!missing.empty()) {
    os << "\nIncomplete: " << missing.size() << " prediction(s) missing:";
    for (const auto& m : missing) os << " " << m;
    os << "\n";
  }
  return os.str();
}

EvalReport evaluate_pairs(const PairedDataset& data, const std::vector<std::size_t>& rows,
                          const std::vector<std::optional<Image>>& predictions, const EvalMetadata& meta,
                          const std::string& split) {
  if (rows.size() != predictions.size()) {
    throw ContractError("evaluate_pairs: " + std::to_string(rows.size()) + " rows but " +
                        std::to_string(predictions.size()) + " predictions");
  }
  std::vector<PairScore> scores;
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = data.manifest.rows.at(rows[i]);
    if (!predictions[i]) {
      missing.push_back(row.pair_id);
      continue;
    }
    const Image& hq = data.hq.at(rows[i]);
    scores.push_back({row.pair_id, row.category, psnr(*predictions[i], hq), ssim(*predictions[i], hq)});
  }
  EvalReport rep = aggregate(std::move(scores), meta, split);
  rep.missing = std::move(missing);
  return rep;
}

EvalReport evaluate_manifest(const fs::path& pred_dir, const fs::path& dataset_dir, Split split,
                             const EvalMetadata& meta) {
  PairedDataset data;
  data.manifest = DatasetManifest::from_jsonl(read_file(dataset_dir / "manifest.jsonl"));
  std::vector<std::size_t> rows;
  std::vector<std::optional<Image>> preds;
  for (std::size_t i = 0; i < data.manifest.rows.size(); ++i) {
    const auto& r = data.manifest.rows[i];
    data.hq.emplace_back();
    data.lq.emplace_back();
    if (r.split != split) continue;
    data.hq.back() = read_png(dataset_dir / r.hq_path);
    rows.push_back(i);
    const fs::path p = pred_dir / (r.pair_id + ".png");
    std::error_code ec;
    if (fs::exists(p, ec)) {
      preds.emplace_back(read_png(p));
    } else {
      preds.emplace_back(std::nullopt);
    }
  }
  return evaluate_pairs(data, rows, preds, meta, to_string(split));
}

}  // namespace restorekit
