#include "restorekit/degrade.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "restorekit/error.hpp"

namespace restorekit {

namespace {

const std::vector<std::string> kIsolated = {"B", "N", "J", "H", "R", "RD", "L"};
const std::vector<std::string> kCoupled = {"B+N",   "B+J",   "N+J",   "R+H",   "L+H",
                                           "L+R",   "L+B",   "L+N",   "L+J",   "L+B+N",
                                           "L+B+J", "L+N+J", "B+N+J"};
const std::vector<std::string> kOperatorOrder = {"lowlight", "haze",  "rain", "raindrop",
                                                 "blur",     "noise", "jpeg"};

int operator_rank(const std::string& name) {
  auto it = std::find(kOperatorOrder.begin(), kOperatorOrder.end(), name);
  if (it == kOperatorOrder.end()) throw TaxonomyError("unknown degradation operator '" + name + "'");
  return static_cast<int>(it - kOperatorOrder.begin());
}

// Mirror index into [0, n) without repeating the edge sample.
int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

Image convolve_separable(const Image& img, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size() / 2);
  const int h = img.height();
  const int w = img.width();
  Image tmp(h, w);
  Image out(h, w);
  for (int c = 0; c < Image::kChannels; ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * img.at(c, y, reflect(x + i, w));
        tmp.at(c, y, x) = acc;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp.at(c, reflect(y + i, h), x);
        out.at(c, y, x) = acc;
      }
  }
  return out;
}

Image convolve2d(const Image& img, const std::vector<double>& kernel, int ksize) {
  const int r = ksize / 2;
  const int h = img.height();
  const int w = img.width();
  Image out(h, w);
  for (int c = 0; c < Image::kChannels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int ky = 0; ky < ksize; ++ky)
          for (int kx = 0; kx < ksize; ++kx) {
            const double kv = kernel[ky * ksize + kx];
            if (kv == 0.0) continue;
            acc += kv * img.at(c, reflect(y + ky - r, h), reflect(x + kx - r, w));
          }
        out.at(c, y, x) = acc;
      }
  return out;
}

// Low-frequency random field in [0,1].
std::vector<double> smooth_field(int h, int w, Rng& rng, int waves) {
  std::vector<double> f(static_cast<std::size_t>(h) * w, 0.0);
  for (int k = 0; k < waves; ++k) {
    const double fx = rng.uniform(0.3, 2.0) * 2.0 * std::numbers::pi / w;
    const double fy = rng.uniform(0.3, 2.0) * 2.0 * std::numbers::pi / h;
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double amp = rng.uniform(0.5, 1.0);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) f[static_cast<std::size_t>(y) * w + x] += amp * std::cos(fx * x + fy * y + phase);
  }
  const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  const double mn = *lo;
  const double span = *hi - *lo;
  for (double& v : f) v = span > 0 ? (v - mn) / span : 0.5;
  return f;
}

Image rain(const Image& img, const DegradationOp& op, std::uint64_t seed) {
  Rng rng(seed);
  const int h = img.height();
  const int w = img.width();
  const double density = op.params.at("streaks");
  const double angle = op.params.at("angle_deg") * std::numbers::pi / 180.0;
  const double intensity = op.params.at("intensity");
  // Streak length scales with the image side, so the count does too; the
  // covered fraction is then independent of resolution.
  const int count = std::max(1, static_cast<int>(std::lround(density * std::min(h, w) / 256.0)));
  const double dx = std::sin(angle);
  const double dy = std::cos(angle);
  Image mask(h, w);  // channel 0 used as streak coverage
  for (int s = 0; s < count; ++s) {
    const double len = rng.uniform(0.08, 0.25) * std::min(h, w) + 2.0;
    const double x0 = rng.uniform(0.0, w);
    const double y0 = rng.uniform(-0.2 * h, h);
    const double a = intensity * rng.uniform(0.6, 1.0);
    const int samples = static_cast<int>(std::ceil(len * 2.0));
    for (int i = 0; i <= samples; ++i) {
      const double px = x0 + dx * len * i / samples;
      const double py = y0 + dy * len * i / samples;
      const int ix = static_cast<int>(std::floor(px));
      const int iy = static_cast<int>(std::floor(py));
      const double fx = px - ix;
      for (int ox = 0; ox <= 1; ++ox) {
        const int xx = ix + ox;
        if (xx < 0 || xx >= w || iy < 0 || iy >= h) continue;
        const double wgt = ox == 0 ? 1.0 - fx : fx;
        double& m = mask.at(0, iy, xx);
        m = std::max(m, a * wgt);
      }
    }
  }
  Image out = img;
  for (int c = 0; c < Image::kChannels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double m = mask.at(0, y, x);
        out.at(c, y, x) = out.at(c, y, x) * (1.0 - m) + 0.95 * m;
      }
  return out;
}

Image raindrop(const Image& img, const DegradationOp& op, std::uint64_t seed) {
  Rng rng(seed);
  const int h = img.height();
  const int w = img.width();
  const int drops = static_cast<int>(op.params.at("drops"));
  const Image blurred = gaussian_blur(img, 2.0);
  Image out = img;
  for (int d = 0; d < drops; ++d) {
    const double radius = std::max(2.0, rng.uniform(0.04, 0.12) * std::min(h, w));
    const double cx = rng.uniform(0.0, w);
    const double cy = rng.uniform(0.0, h);
    const double bright = rng.uniform(0.05, 0.15);
    for (int y = std::max(0, static_cast<int>(cy - radius - 1)); y < std::min(h, static_cast<int>(cy + radius + 2)); ++y)
      for (int x = std::max(0, static_cast<int>(cx - radius - 1)); x < std::min(w, static_cast<int>(cx + radius + 2)); ++x) {
        const double dist = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
        const double a = std::clamp(radius - dist, 0.0, 1.0);  // 1 px soft edge
        if (a <= 0.0) continue;
        for (int c = 0; c < Image::kChannels; ++c) {
          const double drop = std::min(1.0, blurred.at(c, y, x) + bright);
          out.at(c, y, x) = (1.0 - a) * out.at(c, y, x) + a * drop;
        }
      }
  }
  return out;
}

double param(const DegradationOp& op, const char* key) {
  auto it = op.params.find(key);
  if (it == op.params.end()) throw TaxonomyError("operator " + op.name + " missing parameter " + key);
  return it->second;
}

}  // namespace

const std::vector<std::string>& isolated_categories() { return kIsolated; }
const std::vector<std::string>& coupled_categories() { return kCoupled; }

const std::vector<std::string>& taxonomy() {
  static const std::vector<std::string> all = [] {
    std::vector<std::string> v = kIsolated;
    v.insert(v.end(), kCoupled.begin(), kCoupled.end());
    return v;
  }();
  return all;
}

bool is_known_category(const std::string& code) {
  const auto& t = taxonomy();
  return std::find(t.begin(), t.end(), code) != t.end();
}

bool is_isolated(const std::string& code) {
  if (!is_known_category(code)) throw TaxonomyError("unknown degradation category '" + code + "'");
  return code.find('+') == std::string::npos;
}

std::vector<std::string> category_letters(const std::string& code) {
  if (!is_known_category(code)) throw TaxonomyError("unknown degradation category '" + code + "'");
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t plus = code.find('+', start);
    out.push_back(code.substr(start, plus - start));
    if (plus == std::string::npos) break;
    start = plus + 1;
  }
  return out;
}

const std::vector<std::string>& canonical_operator_order() { return kOperatorOrder; }

std::string operator_for_letter(const std::string& letter) {
  if (letter == "B") return "blur";
  if (letter == "N") return "noise";
  if (letter == "J") return "jpeg";
  if (letter == "H") return "haze";
  if (letter == "R") return "rain";
  if (letter == "RD") return "raindrop";
  if (letter == "L") return "lowlight";
  throw TaxonomyError("unknown degradation letter '" + letter + "'");
}

void DegradationSpec::validate() const {
  std::vector<std::string> expected;
  for (const auto& l : category_letters(category)) expected.push_back(operator_for_letter(l));
  std::sort(expected.begin(), expected.end(),
            [](const std::string& a, const std::string& b) { return operator_rank(a) < operator_rank(b); });
  if (expected.size() != operators.size()) {
    throw TaxonomyError("category " + category + " expects " + std::to_string(expected.size()) +
                        " operators, spec has " + std::to_string(operators.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (operators[i].name != expected[i]) {
      throw TaxonomyError("category " + category + ": operator " + std::to_string(i) + " is " +
                          operators[i].name + ", expected " + expected[i]);
    }
  }
}

DegradationSpec sample_spec(const std::string& category, Rng& rng) {
  DegradationSpec spec;
  spec.category = category;
  std::vector<std::string> names;
  for (const auto& l : category_letters(category)) names.push_back(operator_for_letter(l));
  std::sort(names.begin(), names.end(),
            [](const std::string& a, const std::string& b) { return operator_rank(a) < operator_rank(b); });
  spec.seed = rng.next_u64();
  for (const auto& name : names) {
    DegradationOp op{name, {}};
    if (name == "blur") {
      const bool motion = rng.bernoulli(0.5);
      op.params["kind"] = motion ? 1.0 : 0.0;
      if (motion) {
        op.params["length"] = static_cast<double>(rng.uniform_int(5, 21));
        op.params["angle_deg"] = rng.uniform(0.0, 180.0);
      } else {
        op.params["sigma"] = rng.uniform(1.0, 4.0);
      }
    } else if (name == "noise") {
      op.params["sigma"] = rng.uniform(0.02, 0.2);
    } else if (name == "jpeg") {
      op.params["quality"] = static_cast<double>(rng.uniform_int(10, 50));
    } else if (name == "haze") {
      op.params["airlight"] = rng.uniform(0.7, 1.0);
      op.params["beta"] = rng.uniform(0.5, 2.0);
    } else if (name == "rain") {
      op.params["streaks"] = static_cast<double>(rng.uniform_int(50, 300));
      op.params["angle_deg"] = rng.uniform(-10.0, 10.0);
      op.params["intensity"] = rng.uniform(0.5, 0.9);
    } else if (name == "raindrop") {
      op.params["drops"] = static_cast<double>(rng.uniform_int(3, 12));
    } else if (name == "lowlight") {
      op.params["gain"] = rng.uniform(0.1, 0.6);
      op.params["gamma"] = rng.uniform(1.8, 3.0);
    }
    spec.operators.push_back(std::move(op));
  }
  return spec;
}

Image apply_operator(const DegradationOp& op, const Image& img, std::uint64_t seed) {
  Image out;
  if (op.name == "blur") {
    if (param(op, "kind") == 1.0) {
      out = motion_blur(img, static_cast<int>(param(op, "length")), param(op, "angle_deg"));
    } else {
      out = gaussian_blur(img, param(op, "sigma"));
    }
  } else if (op.name == "noise") {
    out = add_gaussian_noise(img, param(op, "sigma"), seed);
  } else if (op.name == "jpeg") {
    out = jpeg_roundtrip(img, static_cast<int>(param(op, "quality")));
  } else if (op.name == "haze") {
    out = haze(img, param(op, "airlight"), param(op, "beta"), seed);
  } else if (op.name == "rain") {
    out = rain(img, op, seed);
  } else if (op.name == "raindrop") {
    out = raindrop(img, op, seed);
  } else if (op.name == "lowlight") {
    out = lowlight(img, param(op, "gain"), param(op, "gamma"));
  } else {
    throw TaxonomyError("unknown degradation operator '" + op.name + "'");
  }
  return clamp01(std::move(out));
}

Image apply(const DegradationSpec& spec, const Image& clean) {
  spec.validate();
  Image img = clean;
  for (std::size_t i = 0; i < spec.operators.size(); ++i) {
    img = apply_operator(spec.operators[i], img, derive_seed(spec.seed, {i}));
  }
  return img;
}

std::vector<double> gaussian_kernel_1d(double sigma) {
  if (!(sigma > 1e-6)) return {1.0};
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  return k;
}

Image gaussian_blur(const Image& img, double sigma) {
  const auto k = gaussian_kernel_1d(sigma);
  if (k.size() == 1) return img;
  return convolve_separable(img, k);
}

Image motion_blur(const Image& img, int length, double angle_deg) {
  if (length <= 1) return img;
  const int ksize = length | 1;
  const int r = ksize / 2;
  std::vector<double> kernel(static_cast<std::size_t>(ksize) * ksize, 0.0);
  const double th = angle_deg * std::numbers::pi / 180.0;
  const double dx = std::cos(th);
  const double dy = std::sin(th);
  const double half = (length - 1) / 2.0;
  const int samples = 8 * length;
  for (int i = 0; i <= samples; ++i) {
    const double s = -half + 2.0 * half * i / samples;
    const double px = r + s * dx;
    const double py = r + s * dy;
    const int ix = static_cast<int>(std::floor(px));
    const int iy = static_cast<int>(std::floor(py));
    const double fx = px - ix;
    const double fy = py - iy;
    for (int oy = 0; oy <= 1; ++oy)
      for (int ox = 0; ox <= 1; ++ox) {
        const int xx = ix + ox;
        const int yy = iy + oy;
        if (xx < 0 || yy < 0 || xx >= ksize || yy >= ksize) continue;
        kernel[static_cast<std::size_t>(yy) * ksize + xx] += (ox ? fx : 1 - fx) * (oy ? fy : 1 - fy);
      }
  }
  double sum = 0.0;
  for (double v : kernel) sum += v;
  for (double& v : kernel) v /= sum;
  return convolve2d(img, kernel, ksize);
}

Image lowlight(const Image& img, double gain, double gamma) {
  Image out = img;
  for (double& v : out.values()) v = gain * std::pow(std::max(v, 0.0), gamma);
  return out;
}

Image haze(const Image& img, double airlight, double beta, std::uint64_t seed) {
  Rng rng(seed);
  const int h = img.height();
  const int w = img.width();
  const auto field = smooth_field(h, w, rng, 2);
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // Depth grows towards the top of the frame, modulated by the field.
      const double depth = 0.3 + 0.4 * (1.0 - static_cast<double>(y) / std::max(1, h - 1)) +
                           0.3 * field[static_cast<std::size_t>(y) * w + x];
      const double t = std::exp(-beta * depth);
      for (int c = 0; c < Image::kChannels; ++c)
        out.at(c, y, x) = img.at(c, y, x) * t + airlight * (1.0 - t);
    }
  return out;
}

Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed) {
  Rng rng(seed);
  Image out = img;
  for (double& v : out.values()) v += sigma * rng.normal();
  return out;
}

Image procedural_image(int height, int width, std::uint64_t seed) {
  Rng rng(seed);
  Image img(height, width);
  for (int c = 0; c < Image::kChannels; ++c) {
    const auto f = smooth_field(height, width, rng, 3);
    const double base = rng.uniform(0.2, 0.8);
    const double amp = rng.uniform(0.1, 0.3);
    auto plane = img.plane(c);
    for (std::size_t i = 0; i < plane.size(); ++i) plane[i] = base + amp * (f[i] - 0.5);
  }
  const int shapes = static_cast<int>(rng.uniform_int(3, 6));
  for (int s = 0; s < shapes; ++s) {
    const bool circle = rng.bernoulli(0.5);
    const double cx = rng.uniform(0.0, width);
    const double cy = rng.uniform(0.0, height);
    const double ext = rng.uniform(0.08, 0.3) * std::min(height, width);
    const double ext2 = rng.uniform(0.08, 0.3) * std::min(height, width);
    double color[3];
    for (double& v : color) v = rng.uniform(0.05, 0.95);
    const double alpha = rng.uniform(0.6, 1.0);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double px = x + 0.5 - cx;
        const double py = y + 0.5 - cy;
        const bool inside = circle ? (px * px + py * py <= ext * ext)
                                   : (std::abs(px) <= ext && std::abs(py) <= ext2);
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = (1 - alpha) * img.at(c, y, x) + alpha * color[c];
      }
  }
  for (double& v : img.values()) v = std::clamp(v, 0.05, 0.95);
  return img;
}

void to_json(nlohmann::json& j, const DegradationSpec& s) {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& op : s.operators) ops.push_back({{"name", op.name}, {"params", op.params}});
  j = {{"category", s.category}, {"operators", ops}, {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, DegradationSpec& s) {
  s.category = j.at("category").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.operators.clear();
  for (const auto& op : j.at("operators")) {
    s.operators.push_back({op.at("name").get<std::string>(),
                           op.at("params").get<std::map<std::string, double>>()});
  }
}

}  // namespace restorekit
