#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "restorekit/degrade.hpp"
#include "restorekit/error.hpp"

namespace restorekit {

namespace {

constexpr std::array<int, 64> kLuma = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr std::array<int, 64> kChroma = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

struct DctBasis {
  // basis[u][x] = C(u)/2 * cos((2x+1) u pi / 16)
  double m[8][8];
  DctBasis() {
    for (int u = 0; u < 8; ++u)
      for (int x = 0; x < 8; ++x) {
        const double cu = u == 0 ? std::numbers::sqrt2 / 2.0 : 1.0;
        m[u][x] = 0.5 * cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
  }
};

const DctBasis& basis() {
  static const DctBasis b;
  return b;
}

void fdct8x8(const double in[64], double out[64]) {
  const auto& b = basis().m;
  double tmp[64];
  for (int y = 0; y < 8; ++y)
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int x = 0; x < 8; ++x) acc += b[u][x] * in[y * 8 + x];
      tmp[y * 8 + u] = acc;
    }
  for (int v = 0; v < 8; ++v)
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int y = 0; y < 8; ++y) acc += b[v][y] * tmp[y * 8 + u];
      out[v * 8 + u] = acc;
    }
}

void idct8x8(const double in[64], double out[64]) {
  const auto& b = basis().m;
  double tmp[64];
  for (int v = 0; v < 8; ++v)
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int u = 0; u < 8; ++u) acc += b[u][x] * in[v * 8 + u];
      tmp[v * 8 + x] = acc;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int v = 0; v < 8; ++v) acc += b[v][y] * tmp[v * 8 + x];
      out[y * 8 + x] = acc;
    }
}

double clamp255(double v) { return std::clamp(std::round(v), 0.0, 255.0); }

}  // namespace

std::array<int, 64> jpeg_quant_table(int quality, bool chroma) {
  if (quality < 1 || quality > 100) {
    throw ConfigError("jpeg quality must be in [1,100], got " + std::to_string(quality));
  }
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  const auto& base = chroma ? kChroma : kLuma;
  std::array<int, 64> q{};
  for (int i = 0; i < 64; ++i) q[i] = std::clamp((base[i] * scale + 50) / 100, 1, 255);
  return q;
}

Image jpeg_roundtrip(const Image& img, int quality) {
  const std::array<int, 64> qtab[3] = {jpeg_quant_table(quality, false), jpeg_quant_table(quality, true),
                                       jpeg_quant_table(quality, true)};
  const int h = img.height();
  const int w = img.width();
  const int ph = (h + 7) / 8 * 8;
  const int pw = (w + 7) / 8 * 8;

  // 8-bit samples, edge-replicated to whole blocks, converted to YCbCr.
  std::vector<double> ycc[3];
  for (auto& p : ycc) p.assign(static_cast<std::size_t>(ph) * pw, 0.0);
  for (int y = 0; y < ph; ++y)
    for (int x = 0; x < pw; ++x) {
      const int sy = std::min(y, h - 1);
      const int sx = std::min(x, w - 1);
      const double r = clamp255(img.at(0, sy, sx) * 255.0);
      const double g = clamp255(img.at(1, sy, sx) * 255.0);
      const double b = clamp255(img.at(2, sy, sx) * 255.0);
      const std::size_t i = static_cast<std::size_t>(y) * pw + x;
      ycc[0][i] = clamp255(0.299 * r + 0.587 * g + 0.114 * b);
      ycc[1][i] = clamp255(-0.168735892 * r - 0.331264108 * g + 0.5 * b + 128.0);
      ycc[2][i] = clamp255(0.5 * r - 0.418687589 * g - 0.081312411 * b + 128.0);
    }

  double block[64], coef[64];
  for (int c = 0; c < 3; ++c)
    for (int by = 0; by < ph; by += 8)
      for (int bx = 0; bx < pw; bx += 8) {
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x) block[y * 8 + x] = ycc[c][static_cast<std::size_t>(by + y) * pw + bx + x] - 128.0;
        fdct8x8(block, coef);
        for (int k = 0; k < 64; ++k) coef[k] = std::round(coef[k] / qtab[c][k]) * qtab[c][k];
        idct8x8(coef, block);
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            ycc[c][static_cast<std::size_t>(by + y) * pw + bx + x] = clamp255(block[y * 8 + x] + 128.0);
      }

  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * pw + x;
      const double Y = ycc[0][i];
      const double cb = ycc[1][i] - 128.0;
      const double cr = ycc[2][i] - 128.0;
      out.at(0, y, x) = clamp255(Y + 1.402 * cr) / 255.0;
      out.at(1, y, x) = clamp255(Y - 0.344136286 * cb - 0.714136286 * cr) / 255.0;
      out.at(2, y, x) = clamp255(Y + 1.772 * cb) / 255.0;
    }
  return out;
}

}  // namespace restorekit
