#pragma once

#include <cstdint>

#include "restorekit/diffusion.hpp"
#include "restorekit/image.hpp"
#include "restorekit/rng.hpp"

namespace restorekit::testing {

inline Image random_image(int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Image img(h, w);
  Rng rng(seed);
  for (double& v : img.values()) v = rng.uniform(lo, hi);
  return img;
}

inline Image constant_image(int h, int w, double v) { return Image(h, w, v); }

/// Returns the true residual I_LQ - I_HQ regardless of its inputs.
class OracleDenoiser : public Denoiser {
 public:
  explicit OracleDenoiser(Image hq) : hq_(std::move(hq)) {}
  Image predict(const Image&, const Image& lq, int) const override { return lq - hq_; }

 private:
  Image hq_;
};

class ZeroDenoiser : public Denoiser {
 public:
  Image predict(const Image& x, const Image&, int) const override { return Image(x.height(), x.width()); }
};

}  // namespace restorekit::testing
