#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "restorekit/degrade.hpp"
#include "restorekit/diffusion.hpp"
#include "restorekit/network.hpp"

namespace restorekit {

enum class Family { kIllumination, kWeather, kDetail };

/// Classifier outputs: the three families plus "clean", in this order.
enum class RouteClass { kIllumination = 0, kWeather = 1, kDetail = 2, kClean = 3 };
inline constexpr int kRouteCount = 4;

const std::array<Family, 3>& all_families();
const char* to_string(Family f);
const char* to_string(RouteClass r);
Family family_from_string(const std::string& name);

/// Any lowlight component routes to illumination; otherwise rain, raindrop or
/// haze routes to weather; blur, noise and JPEG mixtures route to detail.
Family family_of(const std::string& category);
RouteClass route_class_of(Family f);

/// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> v);

/// Anything that scores an input over the four route classes.
class Router {
 public:
  virtual ~Router() = default;
  virtual std::array<double, kRouteCount> logits(const Image& lq) const = 0;
  std::array<double, kRouteCount> probabilities(const Image& lq) const;
  RouteClass route(const Image& lq) const;
};

struct ClassifierConfig {
  int base_channels = 8;
  int levels = 2;
  void validate() const;
  bool operator==(const ClassifierConfig&) const = default;
};

/// Small CNN: `levels` blocks of conv-SiLU-pool, a final conv, global average
/// pooling and a linear layer onto the route classes.
class DegradationClassifier : public Router {
 public:
  DegradationClassifier(ClassifierConfig config, std::uint64_t seed);
  DegradationClassifier(const DegradationClassifier& other);
  DegradationClassifier& operator=(const DegradationClassifier& other);
  DegradationClassifier(DegradationClassifier&&) noexcept = default;
  DegradationClassifier& operator=(DegradationClassifier&&) noexcept = default;

  const ClassifierConfig& config() const { return config_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }

  /// x: [N,3,H,W] with H, W multiples of 2^levels. Returns [N,4,1,1].
  nn::Var forward(const nn::Tensor& x) const;
  std::array<double, kRouteCount> logits(const Image& lq) const override;

 private:
  void build(std::uint64_t seed);

  ClassifierConfig config_;
  std::uint64_t seed_;
  nn::ParameterSet params_;
  std::vector<nn::Var> conv_w_, conv_b_;
  nn::Var head_w_, head_b_;
};

struct SpecialistConfig {
  int base_channels = 8;
  int depth = 2;
  void validate() const;
  bool operator==(const SpecialistConfig&) const = default;
};

/// Single-pass refiner: output = input + f([input, I_LQ]).
class Specialist {
 public:
  Specialist(Family family, SpecialistConfig config, std::uint64_t seed);

  Family family() const { return family_; }
  const SpecialistConfig& config() const { return config_; }
  nn::ParameterSet& params() { return net_.params(); }
  const nn::ParameterSet& params() const { return net_.params(); }
  const UNet& net() const { return net_; }

  /// input, lq: [N,3,H,W] with H, W multiples of the network's size multiple.
  nn::Var forward(const nn::Tensor& input, const nn::Tensor& lq) const;
  /// Any image size; the result is not clamped.
  Image refine(const Image& input, const Image& lq) const;

 private:
  Family family_;
  SpecialistConfig config_;
  UNet net_;
};

struct ExpertTrainConfig {
  int batch_size = 8;
  int patch_size = 32;
  int iterations = 400;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  /// Sampler settings used to produce the generalist outputs specialists refine.
  int sample_steps = 4;
  bool operator==(const ExpertTrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const ExpertTrainConfig& c);
void from_json(const nlohmann::json& j, ExpertTrainConfig& c);
void to_json(nlohmann::json& j, const ClassifierConfig& c);
void from_json(const nlohmann::json& j, ClassifierConfig& c);
void to_json(nlohmann::json& j, const SpecialistConfig& c);
void from_json(const nlohmann::json& j, SpecialistConfig& c);

/// Label 0..2 is the family of the pair's category; the HQ side of every
/// training pair provides the "clean" examples. Classes are sampled uniformly.
DegradationClassifier train_classifier(const PairedDataset& data, const ClassifierConfig& config,
                                       const ExpertTrainConfig& train);

/// Generalist restorations of the dataset's train rows (full images), seeded per row.
std::vector<Image> generalist_outputs(const Denoiser& generalist, const SchedulePlan& plan,
                                      const PairedDataset& data, const std::vector<std::size_t>& rows,
                                      int steps, std::uint64_t seed);

/// Fit a specialist on (G(I_LQ), I_LQ) -> I_HQ over the family's train rows.
/// Throws ConfigError if the family has no train rows.
Specialist train_specialist(Family family, const Denoiser& generalist, const SchedulePlan& plan,
                            const PairedDataset& data, const SpecialistConfig& config,
                            const ExpertTrainConfig& train);

/// All-zero weights, so refine() returns its input unchanged. Stands in for
/// families with no training data.
Specialist passthrough_specialist(Family family, const SpecialistConfig& config);

struct ExpertPool;

/// Classifier plus one specialist per family. Families without train rows get
/// a passthrough specialist and are listed in `untrained`.
ExpertPool train_expert_pool(const Denoiser& generalist, const SchedulePlan& plan, const PairedDataset& data,
                             const ClassifierConfig& classifier, const ExpertTrainConfig& classifier_train,
                             const SpecialistConfig& specialist, const ExpertTrainConfig& specialist_train,
                             std::vector<Family>* untrained = nullptr);

struct ExpertPool {
  std::shared_ptr<const Router> router;
  std::map<Family, std::shared_ptr<const Specialist>> experts;

  /// Router present and exactly one expert for each family.
  bool complete() const;
  const Specialist& expert(Family f) const;
};

std::string save_classifier(const DegradationClassifier& c);
DegradationClassifier load_classifier(std::string_view bytes);
std::string save_specialist(const Specialist& s);
Specialist load_specialist(std::string_view bytes);

/// Writes classifier.ckpt, expert_<family>.ckpt and pool.json (family ->
/// checkpoint path) under dir. The router must be a DegradationClassifier.
void save_pool(const ExpertPool& pool, const std::filesystem::path& dir);
ExpertPool load_pool(const std::filesystem::path& dir);

enum class PipelineVariant { kOnlyG, kOnlyS, kS1ThenS2, kSThenG, kGThenS };

const char* to_string(PipelineVariant v);
PipelineVariant pipeline_variant_from_string(const std::string& name);
const std::array<PipelineVariant, 5>& all_pipeline_variants();

/// What a pipeline call did; used by tests and reports.
struct PipelineTrace {
  int diffusion_calls = 0;
  RouteClass route = RouteClass::kClean;
  std::vector<Family> specialists;
};

/// Restore one image. G_then_S (the default) samples with the generalist,
/// routes on I_LQ and refines the sample with the chosen specialist; the clean
/// route passes the sample through unchanged. Output is clamped to [0,1].
/// Throws ConfigError when the variant needs a model that is missing.
Image pipeline_restore(PipelineVariant variant, const ExpertPool& pool, const Denoiser* generalist,
                       const SchedulePlan& plan, const Image& lq, int steps = 4, std::uint64_t seed = 0,
                       PipelineTrace* trace = nullptr);

}  // namespace restorekit
