#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "json.hpp"
#include "restorekit/diffusion.hpp"
#include "restorekit/network.hpp"
#include "restorekit/schedule.hpp"

namespace restorekit {

struct DenoiserConfig {
  int base_channels = 16;
  int depth = 2;
  int time_embed_dim = 32;

  void validate() const;
  UNetSpec network_spec() const;
  bool operator==(const DenoiserConfig&) const = default;
};

/// Metadata stored alongside generalist weights.
struct RunMeta {
  ScheduleConfig schedule;
  std::string strategy = "il_ic";
  std::int64_t iteration = 0;
  int phase = 0;
  std::uint64_t seed = 0;
  bool operator==(const RunMeta&) const = default;
};

/// The trainable residual predictor R_theta. Input to the network is the
/// channel concatenation [I_t, I_LQ]; the timestep enters through the
/// network's sinusoidal embedding.
class ResidualDenoiser : public Denoiser {
 public:
  ResidualDenoiser(DenoiserConfig config, std::uint64_t seed);

  const DenoiserConfig& config() const { return config_; }
  UNet& net() { return net_; }
  const UNet& net() const { return net_; }
  nn::ParameterSet& params() { return net_.params(); }
  const nn::ParameterSet& params() const { return net_.params(); }

  Image predict(const Image& x_t, const Image& lq, int t) const override;

  /// Batched forward with autograd; x_t and lq are [N,3,H,W] with H, W a
  /// multiple of 2^depth.
  nn::Var forward(const nn::Tensor& x_t, const nn::Tensor& lq, std::span<const int> t) const;

 private:
  DenoiserConfig config_;
  UNet net_;
};

ResidualDenoiser build_denoiser(const DenoiserConfig& config, std::uint64_t seed);

std::string save_checkpoint(const ResidualDenoiser& denoiser, const RunMeta& meta);

struct LoadedDenoiser {
  ResidualDenoiser denoiser;
  RunMeta meta;
};

LoadedDenoiser load_checkpoint(std::string_view bytes);

void to_json(nlohmann::json& j, const ScheduleConfig& c);
void from_json(const nlohmann::json& j, ScheduleConfig& c);
void to_json(nlohmann::json& j, const DenoiserConfig& c);
void from_json(const nlohmann::json& j, DenoiserConfig& c);
void to_json(nlohmann::json& j, const RunMeta& m);
void from_json(const nlohmann::json& j, RunMeta& m);

}  // namespace restorekit
