#include "restorekit/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "restorekit/error.hpp"

namespace restorekit {

const char* to_string(ScheduleShape shape) {
  switch (shape) {
    case ScheduleShape::kLinear:
      return "linear";
    case ScheduleShape::kCosine:
      return "cosine";
  }
  return "?";
}

ScheduleShape schedule_shape_from_string(const std::string& name) {
  if (name == "linear") return ScheduleShape::kLinear;
  if (name == "cosine") return ScheduleShape::kCosine;
  throw ConfigError("unknown schedule shape '" + name + "' (expected linear|cosine)");
}

void ScheduleConfig::validate() const {
  if (T < 1) throw ConfigError("schedule.T must be >= 1, got " + std::to_string(T));
  if (!(gamma_T >= 0.0 && gamma_T <= 1.0)) {
    throw ConfigError("schedule.gamma_T must be in [0,1], got " + std::to_string(gamma_T));
  }
  if (!(delta_max >= 0.0) || !std::isfinite(delta_max)) {
    throw ConfigError("schedule.delta_max must be >= 0, got " + std::to_string(delta_max));
  }
}

namespace {

// Ramp from 0 at t=0 to exactly 1 at t=T.
double ramp(ScheduleShape shape, int t, int T) {
  if (t == 0) return 0.0;
  if (t == T) return 1.0;
  const double u = static_cast<double>(t) / T;
  switch (shape) {
    case ScheduleShape::kLinear:
      return u;
    case ScheduleShape::kCosine:
      return 0.5 * (1.0 - std::cos(std::numbers::pi * u));
  }
  return u;
}

}  // namespace

SchedulePlan build_schedule(const ScheduleConfig& config) {
  config.validate();
  const int T = config.T;
  SchedulePlan plan;
  plan.config_ = config;
  plan.alpha_.assign(T + 1, 0.0);
  plan.beta_.assign(T + 1, 0.0);
  plan.delta_.assign(T + 1, 0.0);
  plan.alpha_bar_.assign(T + 1, 0.0);
  plan.beta_bar_.assign(T + 1, 0.0);
  plan.delta_bar_.assign(T + 1, 0.0);
  plan.gamma_bar_.assign(T + 1, 1.0);

  const double beta_total = 1.0 - config.gamma_T;
  for (int t = 1; t <= T; ++t) {
    const double r = ramp(config.shape, t, T);
    plan.alpha_bar_[t] = r;
    plan.beta_bar_[t] = beta_total * r;
    plan.delta_bar_[t] = config.delta_max * r;
    plan.gamma_bar_[t] = 1.0 - plan.beta_bar_[t];

    plan.alpha_[t] = plan.alpha_bar_[t] - plan.alpha_bar_[t - 1];
    plan.beta_[t] = plan.beta_bar_[t] - plan.beta_bar_[t - 1];
    const double var_step = plan.delta_bar_[t] * plan.delta_bar_[t] -
                            plan.delta_bar_[t - 1] * plan.delta_bar_[t - 1];
    plan.delta_[t] = std::sqrt(std::max(var_step, 0.0));
  }
  return plan;
}

Coeffs coeffs_at(const SchedulePlan& plan, int t) {
  if (t < 0 || t > plan.T()) {
    throw IndexError("timestep " + std::to_string(t) + " outside [0, " +
                     std::to_string(plan.T()) + "]");
  }
  return {plan.alpha_bar()[t], plan.beta_bar()[t], plan.delta_bar()[t], plan.gamma_bar()[t]};
}

std::vector<int> subsample_timesteps(const SchedulePlan& plan, int k) {
  const int T = plan.T();
  if (k < 1 || k > T) {
    throw ConfigError("sampling steps must be in [1, " + std::to_string(T) + "], got " +
                      std::to_string(k));
  }
  std::vector<int> steps(k + 1);
  for (int i = 0; i <= k; ++i) {
    steps[i] = static_cast<int>(std::lround(static_cast<double>(T) * (k - i) / k));
  }
  return steps;
}

}  // namespace restorekit
