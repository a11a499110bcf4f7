#include "restorekit/experts.hpp"

#include <algorithm>
#include <cmath>

#include "restorekit/checkpoint.hpp"
#include "restorekit/error.hpp"
#include "restorekit/io.hpp"
#include "restorekit/rng.hpp"

namespace restorekit {

namespace fs = std::filesystem;

namespace {

constexpr std::array<Family, 3> kFamilies = {Family::kIllumination, Family::kWeather, Family::kDetail};

std::vector<std::size_t> train_rows(const PairedDataset& data) { return data.indices(Split::kTrain); }

std::vector<std::size_t> family_rows(const PairedDataset& data, Family f) {
  std::vector<std::size_t> out;
  for (std::size_t r : train_rows(data)) {
    if (family_of(data.manifest.rows[r].category) == f) out.push_back(r);
  }
  return out;
}

std::size_t pick(Rng& rng, const std::vector<std::size_t>& v) {
  return v[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(v.size()) - 1))];
}

// Random aligned crop origin for a patch of size p; the image must be at least p on each side.
std::pair<int, int> crop_origin(Rng& rng, const Image& img, int p, const std::string& id) {
  if (img.height() < p || img.width() < p) {
    throw ConfigError("image " + id + " is smaller than the patch size " + std::to_string(p));
  }
  const int y = static_cast<int>(rng.uniform_int(0, img.height() - p));
  const int x = static_cast<int>(rng.uniform_int(0, img.width() - p));
  return {y, x};
}

void put(nn::Tensor& t, int slot, const Image& img) {
  std::copy(img.values().begin(), img.values().end(), t.sample(slot));
}

void check_train(const ExpertTrainConfig& t) {
  if (t.batch_size < 1 || t.patch_size < 1 || t.iterations < 0 || !(t.lr > 0.0) || t.sample_steps < 1) {
    throw ConfigError("invalid expert training configuration");
  }
}

template <typename T>
T require_header(const nlohmann::json& header, const char* key, const char* kind) {
  try {
    return header.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed ") + kind + " header: " + e.what());
  }
}

void expect_kind(const CheckpointData& data, const std::string& kind) {
  const std::string got = data.header.value("kind", "");
  if (got != kind) throw CheckpointError("checkpoint kind is '" + got + "', expected '" + kind + "'");
}

}  // namespace

const std::array<Family, 3>& all_families() { return kFamilies; }

const char* to_string(Family f) {
  switch (f) {
    case Family::kIllumination: return "illumination";
    case Family::kWeather: return "weather";
    case Family::kDetail: return "detail";
  }
  return "?";
}

const char* to_string(RouteClass r) {
  return r == RouteClass::kClean ? "clean" : to_string(static_cast<Family>(static_cast<int>(r)));
}

Family family_from_string(const std::string& name) {
  for (Family f : kFamilies)
    if (name == to_string(f)) return f;
  throw ConfigError("unknown expert family '" + name + "'");
}

Family family_of(const std::string& category) {
  const auto letters = category_letters(category);
  auto has = [&](const char* l) { return std::find(letters.begin(), letters.end(), l) != letters.end(); };
  if (has("L")) return Family::kIllumination;
  if (has("R") || has("RD") || has("H")) return Family::kWeather;
  return Family::kDetail;
}

RouteClass route_class_of(Family f) { return static_cast<RouteClass>(static_cast<int>(f)); }

int argmax(std::span<const double> v) {
  if (v.empty()) throw ShapeError("argmax of an empty vector");
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::array<double, kRouteCount> Router::probabilities(const Image& lq) const {
  const auto l = logits(lq);
  const auto p = nn::softmax(l);
  std::array<double, kRouteCount> out{};
  std::copy(p.begin(), p.end(), out.begin());
  return out;
}

RouteClass Router::route(const Image& lq) const {
  const auto l = logits(lq);
  return static_cast<RouteClass>(argmax(l));
}

void ClassifierConfig::validate() const {
  if (base_channels < 1) throw ConfigError("classifier base_channels must be >= 1");
  if (levels < 1 || levels > 4) throw ConfigError("classifier levels must be in [1,4]");
}

namespace {

// Append x minus its 3x3 box mean (edge-replicated) as extra channels.
nn::Tensor with_detail_channels(const nn::Tensor& x) {
  const nn::Shape s = x.shape();
  nn::Tensor out({s.n, 2 * s.c, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int xx = 0; xx < s.w; ++xx) {
          double acc = 0.0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              acc += x.at(n, c, std::clamp(y + dy, 0, s.h - 1), std::clamp(xx + dx, 0, s.w - 1));
            }
          const double v = x.at(n, c, y, xx);
          out.at(n, c, y, xx) = v;
          out.at(n, s.c + c, y, xx) = v - acc / 9.0;
        }
  return out;
}

}  // namespace

DegradationClassifier::DegradationClassifier(ClassifierConfig config, std::uint64_t seed)
    : config_(config), seed_(seed) {
  config_.validate();
  build(seed);
}

DegradationClassifier::DegradationClassifier(const DegradationClassifier& other)
    : DegradationClassifier(other.config_, other.seed_) {
  assign_parameters(params_, other.params_);
}

DegradationClassifier& DegradationClassifier::operator=(const DegradationClassifier& other) {
  if (this != &other) {
    DegradationClassifier copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void DegradationClassifier::build(std::uint64_t seed) {
  int cin = 2 * Image::kChannels;
  int features = 0;
  for (int l = 0; l <= config_.levels; ++l) {
    const int cout = config_.base_channels << std::min(l, config_.levels - 1);
    const std::string name = "conv" + std::to_string(l);
    const double bound = std::sqrt(3.0 / (cin * 9.0));
    conv_w_.push_back(params_.add(name + ".weight",
                                  nn::init_uniform({cout, cin, 3, 3}, bound, derive_seed(seed, {params_.items().size()}))));
    conv_b_.push_back(params_.add(name + ".bias", nn::Tensor({1, cout, 1, 1})));
    features += cout;
    cin = cout;
  }
  features += cin;
  head_w_ = params_.add("head.weight", nn::init_uniform({kRouteCount, features, 1, 1}, std::sqrt(3.0 / features),
                                                        derive_seed(seed, {params_.items().size()})));
  head_b_ = params_.add("head.bias", nn::Tensor({1, kRouteCount, 1, 1}));
}

nn::Var DegradationClassifier::forward(const nn::Tensor& x) const {
  // Head input: log filter energies of every conv response plus the pooled
  // final activations.
  nn::Var h = nn::constant(with_detail_channels(x));
  nn::Var feats;
  for (int l = 0; l <= config_.levels; ++l) {
    nn::Var r = nn::conv2d(h, conv_w_[l], conv_b_[l]);
    nn::Var energy = nn::log1p(nn::global_avg_pool(nn::square(r)));
    feats = feats ? nn::concat_channels(feats, energy) : energy;
    h = nn::silu(r);
    if (l < config_.levels) h = nn::avg_pool2(h);
  }
  feats = nn::concat_channels(feats, nn::global_avg_pool(h));
  return nn::linear(feats, head_w_, head_b_);
}

std::array<double, kRouteCount> DegradationClassifier::logits(const Image& lq) const {
  const nn::Tensor x = pad_to_multiple(nn::stack_images(std::span<const Image>(&lq, 1)), 1 << config_.levels);
  const nn::Var out = forward(x);
  std::array<double, kRouteCount> l{};
  std::copy_n(out->value.data(), kRouteCount, l.begin());
  return l;
}

void SpecialistConfig::validate() const {
  if (base_channels < 1) throw ConfigError("specialist base_channels must be >= 1");
  if (depth < 1 || depth > 4) throw ConfigError("specialist depth must be in [1,4]");
}

namespace {
UNetSpec specialist_spec(const SpecialistConfig& c) {
  c.validate();
  return {2 * Image::kChannels, Image::kChannels, c.base_channels, c.depth, 0};
}
}  // namespace

Specialist::Specialist(Family family, SpecialistConfig config, std::uint64_t seed)
    : family_(family), config_(config), net_(specialist_spec(config), seed) {}

nn::Var Specialist::forward(const nn::Tensor& input, const nn::Tensor& lq) const {
  nn::Var in = nn::constant(input);
  nn::Var delta = net_.forward(nn::concat_channels(in, nn::constant(lq)), {});
  return nn::add(in, delta);
}

Image Specialist::refine(const Image& input, const Image& lq) const {
  require_same_shape(input, lq, "specialist refine");
  const int m = net_.size_multiple();
  const nn::Tensor a = pad_to_multiple(nn::stack_images(std::span<const Image>(&input, 1)), m);
  const nn::Tensor b = pad_to_multiple(nn::stack_images(std::span<const Image>(&lq, 1)), m);
  const nn::Var out = forward(a, b);
  return nn::image_from_tensor(crop_tensor(out->value, input.height(), input.width()), 0);
}

void to_json(nlohmann::json& j, const ExpertTrainConfig& c) {
  j = {{"batch_size", c.batch_size}, {"patch_size", c.patch_size}, {"iterations", c.iterations},
       {"lr", c.lr},                 {"seed", c.seed},             {"sample_steps", c.sample_steps}};
}

void from_json(const nlohmann::json& j, ExpertTrainConfig& c) {
  const ExpertTrainConfig d;
  c.batch_size = j.value("batch_size", d.batch_size);
  c.patch_size = j.value("patch_size", d.patch_size);
  c.iterations = j.value("iterations", d.iterations);
  c.lr = j.value("lr", d.lr);
  c.seed = j.value("seed", d.seed);
  c.sample_steps = j.value("sample_steps", d.sample_steps);
}

void to_json(nlohmann::json& j, const ClassifierConfig& c) {
  j = {{"base_channels", c.base_channels}, {"levels", c.levels}};
}

void from_json(const nlohmann::json& j, ClassifierConfig& c) {
  const ClassifierConfig d;
  c.base_channels = j.value("base_channels", d.base_channels);
  c.levels = j.value("levels", d.levels);
}

void to_json(nlohmann::json& j, const SpecialistConfig& c) {
  j = {{"base_channels", c.base_channels}, {"depth", c.depth}};
}

void from_json(const nlohmann::json& j, SpecialistConfig& c) {
  const SpecialistConfig d;
  c.base_channels = j.value("base_channels", d.base_channels);
  c.depth = j.value("depth", d.depth);
}

DegradationClassifier train_classifier(const PairedDataset& data, const ClassifierConfig& config,
                                       const ExpertTrainConfig& train) {
  check_train(train);
  const int m = 1 << config.levels;
  if (train.patch_size % m != 0) {
    throw ConfigError("classifier patch size must be a multiple of " + std::to_string(m));
  }
  const auto all = train_rows(data);
  if (all.empty()) throw ConfigError("classifier training needs train rows");
  std::vector<std::vector<std::size_t>> by_label(kRouteCount);
  for (Family f : kFamilies) by_label[static_cast<int>(f)] = family_rows(data, f);
  by_label[static_cast<int>(RouteClass::kClean)] = all;
  std::vector<int> labels_present;
  for (int l = 0; l < kRouteCount; ++l)
    if (!by_label[l].empty()) labels_present.push_back(l);

  DegradationClassifier clf(config, derive_seed(train.seed, {0x636c66}));
  nn::Adam adam(clf.params(), {});
  const int B = train.batch_size;
  const int P = train.patch_size;
  for (int it = 0; it < train.iterations; ++it) {
    Rng rng(derive_seed(train.seed, {static_cast<std::uint64_t>(it), 1}));
    nn::Tensor x({B, Image::kChannels, P, P});
    std::vector<int> labels(B);
    for (int s = 0; s < B; ++s) {
      const int label = labels_present[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(labels_present.size()) - 1))];
      const std::size_t row = pick(rng, by_label[label]);
      const Image& src = label == static_cast<int>(RouteClass::kClean) ? data.hq[row] : data.lq[row];
      const auto [y, xx] = crop_origin(rng, src, P, data.manifest.rows[row].pair_id);
      put(x, s, src.crop(y, xx, P, P));
      labels[s] = label;
    }
    nn::Var loss = nn::softmax_cross_entropy(clf.forward(x), labels);
    if (!std::isfinite(loss->value.values()[0])) {
      throw TrainingError("non-finite classifier loss at iteration " + std::to_string(it));
    }
    clf.params().zero_grad();
    nn::backward(loss);
    adam.step(train.lr);
  }
  return clf;
}

std::vector<Image> generalist_outputs(const Denoiser& generalist, const SchedulePlan& plan,
                                      const PairedDataset& data, const std::vector<std::size_t>& rows,
                                      int steps, std::uint64_t seed) {
  std::vector<Image> out;
  out.reserve(rows.size());
  for (std::size_t r : rows) out.push_back(sample(plan, generalist, data.lq[r], steps, derive_seed(seed, {r})));
  return out;
}

Specialist train_specialist(Family family, const Denoiser& generalist, const SchedulePlan& plan,
                            const PairedDataset& data, const SpecialistConfig& config,
                            const ExpertTrainConfig& train) {
  check_train(train);
  const auto rows = family_rows(data, family);
  if (rows.empty()) {
    throw ConfigError(std::string("no training rows for the ") + to_string(family) + " family");
  }
  Specialist spec(family, config, derive_seed(train.seed, {0x737063, static_cast<std::uint64_t>(family)}));
  const int m = spec.net().size_multiple();
  if (train.patch_size % m != 0) {
    throw ConfigError("specialist patch size must be a multiple of " + std::to_string(m));
  }
  const auto g_out = generalist_outputs(generalist, plan, data, rows, train.sample_steps, train.seed);

  nn::Adam adam(spec.params(), {});
  const int B = train.batch_size;
  const int P = train.patch_size;
  const std::vector<std::size_t> slots = [&] {
    std::vector<std::size_t> v(rows.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
    return v;
  }();
  for (int it = 0; it < train.iterations; ++it) {
    Rng rng(derive_seed(train.seed, {static_cast<std::uint64_t>(it), 2, static_cast<std::uint64_t>(family)}));
    nn::Tensor in({B, Image::kChannels, P, P}), lq({B, Image::kChannels, P, P}), hq({B, Image::kChannels, P, P});
    for (int s = 0; s < B; ++s) {
      const std::size_t k = pick(rng, slots);
      const std::size_t row = rows[k];
      const auto [y, x] = crop_origin(rng, data.lq[row], P, data.manifest.rows[row].pair_id);
      put(in, s, g_out[k].crop(y, x, P, P));
      put(lq, s, data.lq[row].crop(y, x, P, P));
      put(hq, s, data.hq[row].crop(y, x, P, P));
    }
    nn::Var loss = nn::l1_loss(spec.forward(in, lq), hq);
    if (!std::isfinite(loss->value.values()[0])) {
      throw TrainingError("non-finite specialist loss at iteration " + std::to_string(it));
    }
    spec.params().zero_grad();
    nn::backward(loss);
    adam.step(train.lr);
  }
  return spec;
}

Specialist passthrough_specialist(Family family, const SpecialistConfig& config) {
  Specialist s(family, config, 0);
  for (auto& p : s.params().items()) p.var->value.fill(0.0);
  return s;
}

ExpertPool train_expert_pool(const Denoiser& generalist, const SchedulePlan& plan, const PairedDataset& data,
                             const ClassifierConfig& classifier, const ExpertTrainConfig& classifier_train,
                             const SpecialistConfig& specialist, const ExpertTrainConfig& specialist_train,
                             std::vector<Family>* untrained) {
  ExpertPool pool;
  pool.router = std::make_shared<DegradationClassifier>(train_classifier(data, classifier, classifier_train));
  if (untrained) untrained->clear();
  for (Family f : kFamilies) {
    if (family_rows(data, f).empty()) {
      pool.experts[f] = std::make_shared<Specialist>(passthrough_specialist(f, specialist));
      if (untrained) untrained->push_back(f);
    } else {
      pool.experts[f] = std::make_shared<Specialist>(
          train_specialist(f, generalist, plan, data, specialist, specialist_train));
    }
  }
  return pool;
}

bool ExpertPool::complete() const {
  if (!router) return false;
  for (Family f : kFamilies) {
    auto it = experts.find(f);
    if (it == experts.end() || !it->second || it->second->family() != f) return false;
  }
  return experts.size() == kFamilies.size();
}

const Specialist& ExpertPool::expert(Family f) const {
  auto it = experts.find(f);
  if (it == experts.end() || !it->second) {
    throw ConfigError(std::string("expert pool has no ") + to_string(f) + " specialist");
  }
  return *it->second;
}

std::string save_classifier(const DegradationClassifier& c) {
  return encode_checkpoint(c.params(), {{"kind", "classifier"}, {"model", c.config()}});
}

DegradationClassifier load_classifier(std::string_view bytes) {
  const CheckpointData data = decode_checkpoint(bytes);
  expect_kind(data, "classifier");
  DegradationClassifier c(require_header<ClassifierConfig>(data.header, "model", "classifier"), 0);
  try {
    assign_parameters(c.params(), data.params);
  } catch (const ShapeError& e) {
    throw CheckpointError(std::string("classifier tensors do not match the model: ") + e.what());
  }
  return c;
}

std::string save_specialist(const Specialist& s) {
  return encode_checkpoint(s.params(),
                           {{"kind", "specialist"}, {"family", to_string(s.family())}, {"model", s.config()}});
}

Specialist load_specialist(std::string_view bytes) {
  const CheckpointData data = decode_checkpoint(bytes);
  expect_kind(data, "specialist");
  const auto family = require_header<std::string>(data.header, "family", "specialist");
  Specialist s(family_from_string(family), require_header<SpecialistConfig>(data.header, "model", "specialist"), 0);
  try {
    assign_parameters(s.params(), data.params);
  } catch (const ShapeError& e) {
    throw CheckpointError(std::string("specialist tensors do not match the model: ") + e.what());
  }
  return s;
}

void save_pool(const ExpertPool& pool, const fs::path& dir) {
  if (!pool.complete()) throw ConfigError("expert pool is incomplete");
  const auto* clf = dynamic_cast<const DegradationClassifier*>(pool.router.get());
  if (!clf) throw ConfigError("only a trained classifier router can be saved");
  nlohmann::json manifest = {{"classifier", "classifier.ckpt"}, {"experts", nlohmann::json::object()}};
  write_file_atomic(dir / "classifier.ckpt", save_classifier(*clf));
  for (Family f : kFamilies) {
    const std::string name = std::string("expert_") + to_string(f) + ".ckpt";
    write_file_atomic(dir / name, save_specialist(pool.expert(f)));
    manifest["experts"][to_string(f)] = name;
  }
  write_file_atomic(dir / "pool.json", manifest.dump(2) + "\n");
}

ExpertPool load_pool(const fs::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / "pool.json"));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed pool.json: " + std::string(e.what()));
  }
  ExpertPool pool;
  try {
    pool.router = std::make_shared<DegradationClassifier>(
        load_classifier(read_file(dir / manifest.at("classifier").get<std::string>())));
    for (const auto& [family, path] : manifest.at("experts").items()) {
      auto s = std::make_shared<Specialist>(load_specialist(read_file(dir / path.get<std::string>())));
      if (to_string(s->family()) != family) {
        throw ValidationError("pool.json maps " + family + " to a " + to_string(s->family()) + " specialist");
      }
      pool.experts[s->family()] = std::move(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed pool.json: " + std::string(e.what()));
  }
  if (!pool.complete()) throw ValidationError("pool.json does not list one expert per family");
  return pool;
}

namespace {
constexpr std::array<PipelineVariant, 5> kVariants = {PipelineVariant::kOnlyG, PipelineVariant::kOnlyS,
                                                      PipelineVariant::kS1ThenS2, PipelineVariant::kSThenG,
                                                      PipelineVariant::kGThenS};
}

const char* to_string(PipelineVariant v) {
  switch (v) {
    case PipelineVariant::kOnlyG: return "only_G";
    case PipelineVariant::kOnlyS: return "only_S";
    case PipelineVariant::kS1ThenS2: return "S1_then_S2";
    case PipelineVariant::kSThenG: return "S_then_G";
    case PipelineVariant::kGThenS: return "G_then_S";
  }
  return "?";
}

PipelineVariant pipeline_variant_from_string(const std::string& name) {
  for (auto v : kVariants)
    if (name == to_string(v)) return v;
  throw ConfigError("unknown pipeline variant '" + name + "'");
}

const std::array<PipelineVariant, 5>& all_pipeline_variants() { return kVariants; }

Image pipeline_restore(PipelineVariant variant, const ExpertPool& pool, const Denoiser* generalist,
                       const SchedulePlan& plan, const Image& lq, int steps, std::uint64_t seed,
                       PipelineTrace* trace) {
  const bool needs_g = variant != PipelineVariant::kOnlyS && variant != PipelineVariant::kS1ThenS2;
  const bool needs_s = variant != PipelineVariant::kOnlyG;
  if (needs_g && !generalist) throw ConfigError(std::string(to_string(variant)) + " needs a generalist model");
  if (needs_s && !pool.complete()) {
    throw ConfigError(std::string(to_string(variant)) + " needs a router and one specialist per family");
  }
  PipelineTrace local;
  PipelineTrace& tr = trace ? *trace : local;
  tr = {};

  auto run_g = [&](const Image& cond) {
    ++tr.diffusion_calls;
    return sample(plan, *generalist, cond, steps, seed);
  };
  // Refine `input` with the routed specialist; the clean route is the identity.
  auto run_s = [&](const Image& input) {
    tr.route = pool.router->route(lq);
    if (tr.route == RouteClass::kClean) return input;
    const Family f = static_cast<Family>(static_cast<int>(tr.route));
    tr.specialists.push_back(f);
    return pool.expert(f).refine(input, lq);
  };

  Image out;
  switch (variant) {
    case PipelineVariant::kOnlyG:
      out = run_g(lq);
      break;
    case PipelineVariant::kOnlyS:
      out = run_s(lq);
      break;
    case PipelineVariant::kGThenS:
      out = run_s(run_g(lq));
      break;
    case PipelineVariant::kSThenG:
      out = run_g(clamp01(run_s(lq)));
      break;
    case PipelineVariant::kS1ThenS2: {
      const auto probs = pool.router->probabilities(lq);
      tr.route = static_cast<RouteClass>(argmax(probs));
      if (tr.route == RouteClass::kClean) {
        out = lq;
        break;
      }
      std::array<int, 3> order = {0, 1, 2};
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });
      Image cur = lq;
      for (int k = 0; k < 2; ++k) {
        const Family f = static_cast<Family>(order[k]);
        tr.specialists.push_back(f);
        cur = clamp01(pool.expert(f).refine(cur, lq));
      }
      out = cur;
      break;
    }
  }
  return clamp01(std::move(out));
}

}  // namespace restorekit
