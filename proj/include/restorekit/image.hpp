#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace restorekit {

/// H×W×3 real-valued image, stored planar (channel-major). Pixel values are
/// nominally in [0,1]; residuals and intermediate diffusion states may leave
/// that range.
class Image {
 public:
  static constexpr int kChannels = 3;

  Image() = default;
  Image(int height, int width, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  std::span<double> plane(int c) {
    return {data_.data() + static_cast<std::size_t>(c) * height_ * width_,
            static_cast<std::size_t>(height_) * width_};
  }
  std::span<const double> plane(int c) const {
    return {data_.data() + static_cast<std::size_t>(c) * height_ * width_,
            static_cast<std::size_t>(height_) * width_};
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  /// Copy of the rectangle [y, y+h) × [x, x+w).
  Image crop(int y, int x, int h, int w) const;
  void paste(const Image& src, int y, int x);

  Image& operator+=(const Image& rhs);
  Image& operator-=(const Image& rhs);
  Image& operator*=(double s);
  Image& operator+=(double s);

  bool operator==(const Image& rhs) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

Image operator+(Image lhs, const Image& rhs);
Image operator-(Image lhs, const Image& rhs);
Image operator*(Image lhs, double s);
Image operator*(double s, Image rhs);

/// Throws ShapeError naming `what` when the shapes differ.
void require_same_shape(const Image& a, const Image& b, const std::string& what);

Image clamp01(Image img);
bool all_finite(const Image& img);
double max_abs_diff(const Image& a, const Image& b);

/// Round every pixel to the nearest 8-bit level, as storing to PNG would.
Image quantize8(Image img);

}  // namespace restorekit
