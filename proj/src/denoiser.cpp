#include "restorekit/denoiser.hpp"

#include "restorekit/checkpoint.hpp"
#include "restorekit/error.hpp"

namespace restorekit {

void DenoiserConfig::validate() const {
  if (time_embed_dim <= 0) throw ConfigError("denoiser.time_embed_dim must be positive");
  network_spec().validate();
}

UNetSpec DenoiserConfig::network_spec() const {
  return {.in_channels = 6,
          .out_channels = 3,
          .base_channels = base_channels,
          .depth = depth,
          .time_embed_dim = time_embed_dim};
}

ResidualDenoiser::ResidualDenoiser(DenoiserConfig config, std::uint64_t seed)
    : config_((config.validate(), config)), net_(config.network_spec(), seed) {}

nn::Var ResidualDenoiser::forward(const nn::Tensor& x_t, const nn::Tensor& lq,
                                  std::span<const int> t) const {
  nn::Var input = nn::concat_channels(nn::constant(x_t), nn::constant(lq));
  return net_.forward(input, t);
}

Image ResidualDenoiser::predict(const Image& x_t, const Image& lq, int t) const {
  require_same_shape(x_t, lq, "denoiser predict");
  const int m = net_.size_multiple();
  const nn::Tensor xs = pad_to_multiple(nn::stack_images(std::span<const Image>(&x_t, 1)), m);
  const nn::Tensor ls = pad_to_multiple(nn::stack_images(std::span<const Image>(&lq, 1)), m);
  const int ts[1] = {t};
  nn::Var out = forward(xs, ls, ts);
  return nn::image_from_tensor(crop_tensor(out->value, x_t.height(), x_t.width()), 0);
}

ResidualDenoiser build_denoiser(const DenoiserConfig& config, std::uint64_t seed) {
  return ResidualDenoiser(config, seed);
}

void to_json(nlohmann::json& j, const ScheduleConfig& c) {
  j = {{"T", c.T}, {"gamma_T", c.gamma_T}, {"shape", to_string(c.shape)}, {"delta_max", c.delta_max}};
}

void from_json(const nlohmann::json& j, ScheduleConfig& c) {
  c.T = j.at("T").get<int>();
  c.gamma_T = j.at("gamma_T").get<double>();
  c.shape = schedule_shape_from_string(j.at("shape").get<std::string>());
  c.delta_max = j.at("delta_max").get<double>();
}

void to_json(nlohmann::json& j, const DenoiserConfig& c) {
  j = {{"base_channels", c.base_channels}, {"depth", c.depth}, {"time_embed_dim", c.time_embed_dim}};
}

void from_json(const nlohmann::json& j, DenoiserConfig& c) {
  c.base_channels = j.at("base_channels").get<int>();
  c.depth = j.at("depth").get<int>();
  c.time_embed_dim = j.at("time_embed_dim").get<int>();
}

void to_json(nlohmann::json& j, const RunMeta& m) {
  j = {{"schedule", m.schedule},
       {"strategy", m.strategy},
       {"iteration", m.iteration},
       {"phase", m.phase},
       {"seed", m.seed}};
}

void from_json(const nlohmann::json& j, RunMeta& m) {
  m.schedule = j.at("schedule").get<ScheduleConfig>();
  m.strategy = j.at("strategy").get<std::string>();
  m.iteration = j.at("iteration").get<std::int64_t>();
  m.phase = j.at("phase").get<int>();
  m.seed = j.at("seed").get<std::uint64_t>();
}

std::string save_checkpoint(const ResidualDenoiser& denoiser, const RunMeta& meta) {
  nlohmann::json header = {{"kind", "denoiser"}, {"model", denoiser.config()}, {"run", meta}};
  return encode_checkpoint(denoiser.params(), std::move(header));
}

LoadedDenoiser load_checkpoint(std::string_view bytes) {
  CheckpointData data = decode_checkpoint(bytes);
  if (data.header.value("kind", "") != "denoiser") {
    throw CheckpointError("checkpoint kind is '" + data.header.value("kind", "") +
                          "', expected 'denoiser'");
  }
  try {
    auto config = data.header.at("model").get<DenoiserConfig>();
    auto meta = data.header.at("run").get<RunMeta>();
    ResidualDenoiser denoiser(config, 0);
    assign_parameters(denoiser.params(), data.params);
    return {std::move(denoiser), std::move(meta)};
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed denoiser header: ") + e.what());
  } catch (const ShapeError& e) {
    throw CheckpointError(std::string("checkpoint tensors do not match the model: ") + e.what());
  }
}

}  // namespace restorekit
