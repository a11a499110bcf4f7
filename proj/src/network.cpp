#include "restorekit/network.hpp"

#include <cmath>
#include <string>

#include "restorekit/error.hpp"
#include "restorekit/rng.hpp"

namespace restorekit {

std::vector<double> time_embedding(int t, int dim) {
  if (dim <= 0 || dim % 2 != 0) {
    throw ConfigError("time embedding dim must be positive and even, got " + std::to_string(dim));
  }
  if (t < 0) throw ConfigError("time embedding requires t >= 0");
  std::vector<double> v(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
    v[2 * i] = std::sin(t * freq);
    v[2 * i + 1] = std::cos(t * freq);
  }
  return v;
}

void UNetSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0) throw ConfigError("network channels must be positive");
  if (base_channels <= 0) throw ConfigError("denoiser.base_channels must be positive");
  if (depth < 1 || depth > 4) throw ConfigError("denoiser.depth must be in [1,4]");
  if (time_embed_dim < 0 || time_embed_dim % 2 != 0) {
    throw ConfigError("denoiser.time_embed_dim must be even and non-negative");
  }
}

UNet::UNet(UNetSpec spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
  spec_.validate();
  auto ch = [&](int level) { return spec_.base_channels << level; };
  const int D = spec_.time_embed_dim;
  if (D > 0) time_mlp_ = make_dense("time.mlp", D, D);

  int cin = spec_.in_channels;
  for (int l = 0; l < spec_.depth; ++l) {
    const std::string p = "enc" + std::to_string(l);
    enc_a_.push_back(make_conv(p + ".a", cin, ch(l)));
    if (D > 0) time_proj_.push_back(make_dense(p + ".time", D, ch(l)));
    enc_b_.push_back(make_conv(p + ".b", ch(l), ch(l)));
    cin = ch(l);
  }
  mid_a_ = make_conv("mid.a", cin, ch(spec_.depth));
  if (D > 0) time_proj_.push_back(make_dense("mid.time", D, ch(spec_.depth)));
  mid_b_ = make_conv("mid.b", ch(spec_.depth), ch(spec_.depth));

  dec_up_.resize(spec_.depth);
  dec_merge_.resize(spec_.depth);
  for (int l = spec_.depth - 1; l >= 0; --l) {
    const std::string p = "dec" + std::to_string(l);
    dec_up_[l] = make_conv(p + ".up", ch(l + 1), ch(l));
    dec_merge_[l] = make_conv(p + ".merge", 2 * ch(l), ch(l));
  }
  out_ = make_conv("out", ch(0), spec_.out_channels, 0.1);
}

UNet::UNet(const UNet& other) : UNet(other.spec_, other.seed_) {
  assign_parameters(params_, other.params_);
}

UNet& UNet::operator=(const UNet& other) {
  if (this != &other) {
    UNet copy(other);
    *this = std::move(copy);
  }
  return *this;
}

UNet::Conv UNet::make_conv(const std::string& name, int cin, int cout, double gain) {
  const std::uint64_t s = derive_seed(seed_, {params_.items().size()});
  const double bound = gain * std::sqrt(3.0 / (cin * 9.0));
  Conv c;
  c.weight = params_.add(name + ".weight", nn::init_uniform({cout, cin, 3, 3}, bound, s));
  c.bias = params_.add(name + ".bias", nn::Tensor({1, cout, 1, 1}));
  return c;
}

UNet::Dense UNet::make_dense(const std::string& name, int din, int dout) {
  const std::uint64_t s = derive_seed(seed_, {params_.items().size()});
  Dense d;
  d.weight = params_.add(name + ".weight", nn::init_uniform({dout, din, 1, 1}, std::sqrt(3.0 / din), s));
  d.bias = params_.add(name + ".bias", nn::Tensor({1, dout, 1, 1}));
  return d;
}

nn::Var UNet::apply(const Conv& c, const nn::Var& x) const {
  return nn::conv2d(x, c.weight, c.bias);
}

nn::Var UNet::forward(const nn::Var& x, std::span<const int> timesteps) const {
  using namespace nn;
  const Shape xs = x->value.shape();
  if (xs.c != spec_.in_channels) {
    throw ShapeError("UNet expects " + std::to_string(spec_.in_channels) + " input channels, got " +
                     to_string(xs));
  }
  const int m = size_multiple();
  if (xs.h % m != 0 || xs.w % m != 0) {
    throw ShapeError("UNet input size must be a multiple of " + std::to_string(m) + ": " +
                     to_string(xs));
  }

  Var temb;
  if (spec_.time_embed_dim > 0) {
    if (static_cast<int>(timesteps.size()) != xs.n) throw ShapeError("UNet: one timestep per sample");
    const int D = spec_.time_embed_dim;
    Tensor e({xs.n, D, 1, 1});
    for (int n = 0; n < xs.n; ++n) {
      auto v = time_embedding(timesteps[n], D);
      std::copy(v.begin(), v.end(), e.sample(n));
    }
    temb = silu(linear(constant(std::move(e)), time_mlp_.weight, time_mlp_.bias));
  }
  auto time_bias = [&](const Var& h, int level) {
    if (!temb) return h;
    const Dense& d = time_proj_[level];
    return add_channel_bias(h, linear(temb, d.weight, d.bias));
  };

  Var h = x;
  std::vector<Var> skips;
  for (int l = 0; l < spec_.depth; ++l) {
    h = silu(time_bias(apply(enc_a_[l], h), l));
    h = silu(apply(enc_b_[l], h));
    skips.push_back(h);
    h = avg_pool2(h);
  }
  h = silu(time_bias(apply(mid_a_, h), spec_.depth));
  h = silu(apply(mid_b_, h));
  for (int l = spec_.depth - 1; l >= 0; --l) {
    h = silu(apply(dec_up_[l], upsample2(h)));
    h = silu(apply(dec_merge_[l], concat_channels(h, skips[l])));
  }
  return apply(out_, h);
}

nn::Tensor pad_to_multiple(const nn::Tensor& x, int m) {
  const nn::Shape s = x.shape();
  const int h = (s.h + m - 1) / m * m;
  const int w = (s.w + m - 1) / m * m;
  if (h == s.h && w == s.w) return x;
  nn::Tensor out({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          out.at(n, c, y, xx) = x.at(n, c, std::min(y, s.h - 1), std::min(xx, s.w - 1));
  return out;
}

nn::Tensor crop_tensor(const nn::Tensor& x, int h, int w) {
  const nn::Shape s = x.shape();
  if (h == s.h && w == s.w) return x;
  nn::Tensor out({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) out.at(n, c, y, xx) = x.at(n, c, y, xx);
  return out;
}

void assign_parameters(nn::ParameterSet& dst, const nn::ParameterSet& src) {
  if (dst.items().size() != src.items().size()) {
    throw ShapeError("parameter count mismatch: " + std::to_string(dst.items().size()) + " vs " +
                     std::to_string(src.items().size()));
  }
  for (std::size_t i = 0; i < dst.items().size(); ++i) {
    auto& d = dst.items()[i];
    const auto& s = src.items()[i];
    if (d.name != s.name || !(d.var->value.shape() == s.var->value.shape())) {
      throw ShapeError("parameter mismatch at " + d.name + " vs " + s.name);
    }
    d.var->value = s.var->value;
  }
}

}  // namespace restorekit
