#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "restorekit/nn.hpp"

namespace restorekit {

/// Sinusoidal embedding: entry 2i is sin(t*w_i), entry 2i+1 is cos(t*w_i),
/// with w_i = 10000^(-2i/dim). Throws ConfigError on odd dim or negative t.
std::vector<double> time_embedding(int t, int dim);

struct UNetSpec {
  int in_channels = 6;
  int out_channels = 3;
  int base_channels = 16;
  int depth = 2;
  /// 0 disables timestep conditioning.
  int time_embed_dim = 32;

  void validate() const;
  bool operator==(const UNetSpec&) const = default;
};

/// Small encoder-decoder with skip connections. Level l has base*2^l channels;
/// downsampling is 2x2 average pooling and upsampling is nearest-neighbour.
/// Timestep conditioning adds a learned per-channel bias after the first
/// convolution of every encoder level and of the bottleneck.
class UNet {
 public:
  UNet(UNetSpec spec, std::uint64_t seed);
  // Copies are deep: the copy owns fresh parameter nodes with equal values.
  UNet(const UNet& other);
  UNet& operator=(const UNet& other);
  UNet(UNet&&) noexcept = default;
  UNet& operator=(UNet&&) noexcept = default;

  const UNetSpec& spec() const { return spec_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  /// x: [N, in_channels, H, W] with H, W divisible by 2^depth.
  nn::Var forward(const nn::Var& x, std::span<const int> timesteps) const;

  /// Spatial multiple the input must satisfy.
  int size_multiple() const { return 1 << spec_.depth; }

 private:
  struct Conv {
    nn::Var weight, bias;
  };
  struct Dense {
    nn::Var weight, bias;
  };

  Conv make_conv(const std::string& name, int cin, int cout, double gain = 1.0);
  Dense make_dense(const std::string& name, int din, int dout);
  nn::Var apply(const Conv& c, const nn::Var& x) const;

  UNetSpec spec_;
  std::uint64_t seed_;
  nn::ParameterSet params_;
  std::vector<Conv> enc_a_, enc_b_, dec_up_, dec_merge_;
  Conv mid_a_, mid_b_, out_;
  Dense time_mlp_;
  std::vector<Dense> time_proj_;  // one per encoder level, plus the bottleneck
};

/// Pad an NCHW tensor by edge replication so H and W are multiples of m.
nn::Tensor pad_to_multiple(const nn::Tensor& x, int m);
/// Inverse of pad_to_multiple: keep the top-left h x w window.
nn::Tensor crop_tensor(const nn::Tensor& x, int h, int w);

/// Copy parameter values from `src` into `dst`; names and shapes must match.
void assign_parameters(nn::ParameterSet& dst, const nn::ParameterSet& src);

}  // namespace restorekit
