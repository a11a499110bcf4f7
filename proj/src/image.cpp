#include "restorekit/image.hpp"

#include <algorithm>
#include <cmath>

#include "restorekit/error.hpp"

namespace restorekit {

Image::Image(int height, int width, double fill)
    : height_(height),
      width_(width),
      data_(static_cast<std::size_t>(kChannels) * height * width, fill) {
  if (height < 0 || width < 0) throw ShapeError("negative image dimensions");
}

Image Image::crop(int y, int x, int h, int w) const {
  if (y < 0 || x < 0 || h < 0 || w < 0 || y + h > height_ || x + w > width_) {
    throw ShapeError("crop rectangle outside image");
  }
  Image out(h, w);
  for (int c = 0; c < kChannels; ++c)
    for (int r = 0; r < h; ++r)
      std::copy_n(data_.data() + (static_cast<std::size_t>(c) * height_ + y + r) * width_ + x, w,
                  &out.at(c, r, 0));
  return out;
}

void Image::paste(const Image& src, int y, int x) {
  if (y < 0 || x < 0 || y + src.height_ > height_ || x + src.width_ > width_) {
    throw ShapeError("paste rectangle outside image");
  }
  for (int c = 0; c < kChannels; ++c)
    for (int r = 0; r < src.height_; ++r)
      std::copy_n(src.data_.data() + (static_cast<std::size_t>(c) * src.height_ + r) * src.width_,
                  src.width_, &at(c, y + r, x));
}

Image& Image::operator+=(const Image& rhs) {
  require_same_shape(*this, rhs, "image add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
  return *this;
}

Image& Image::operator-=(const Image& rhs) {
  require_same_shape(*this, rhs, "image subtract");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
  return *this;
}

Image& Image::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Image& Image::operator+=(double s) {
  for (double& v : data_) v += s;
  return *this;
}

Image operator+(Image lhs, const Image& rhs) { return lhs += rhs; }
Image operator-(Image lhs, const Image& rhs) { return lhs -= rhs; }
Image operator*(Image lhs, double s) { return lhs *= s; }
Image operator*(double s, Image rhs) { return rhs *= s; }

void require_same_shape(const Image& a, const Image& b, const std::string& what) {
  if (!a.same_shape(b)) {
    throw ShapeError(what + ": shape mismatch " + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs " + std::to_string(b.height()) +
                     "x" + std::to_string(b.width()));
  }
}

Image clamp01(Image img) {
  for (double& v : img.values()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

bool all_finite(const Image& img) {
  return std::all_of(img.values().begin(), img.values().end(),
                     [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Image& a, const Image& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
  return m;
}

Image quantize8(Image img) {
  for (double& v : img.values()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
  return img;
}

}  // namespace restorekit
