#pragma once

#include <string>
#include <vector>

namespace restorekit {

enum class ScheduleShape { kLinear, kCosine };

const char* to_string(ScheduleShape shape);
ScheduleShape schedule_shape_from_string(const std::string& name);

struct ScheduleConfig {
  int T = 100;
  /// Weight of the degraded image in the terminal state I_T.
  double gamma_T = 0.3;
  ScheduleShape shape = ScheduleShape::kLinear;
  /// Terminal noise scale delta_bar_T, on the [0,1] pixel scale.
  double delta_max = 0.05;

  /// Throws ConfigError on T < 1, gamma_T outside [0,1], delta_max < 0.
  void validate() const;
  bool operator==(const ScheduleConfig&) const = default;
};

/// Cumulative coefficients at one timestep.
struct Coeffs {
  double alpha_bar;
  double beta_bar;
  double delta_bar;
  double gamma_bar;

  /// Weight of I_LQ in the closed-form I_t.
  double lq_weight() const { return alpha_bar - beta_bar; }
  /// Weight of I_HQ in the closed-form I_t.
  double hq_weight() const { return 1.0 - alpha_bar; }
};

/// Per-step and cumulative residual-diffusion coefficients. Immutable once
/// built. Per-step arrays are indexed 1..T (index 0 holds zero); cumulative
/// arrays are indexed 0..T.
class SchedulePlan {
 public:
  const ScheduleConfig& config() const { return config_; }
  int T() const { return config_.T; }

  double alpha(int t) const { return alpha_.at(t); }
  double beta(int t) const { return beta_.at(t); }
  double delta(int t) const { return delta_.at(t); }

  const std::vector<double>& alpha_bar() const { return alpha_bar_; }
  const std::vector<double>& beta_bar() const { return beta_bar_; }
  const std::vector<double>& delta_bar() const { return delta_bar_; }
  const std::vector<double>& gamma_bar() const { return gamma_bar_; }

 private:
  friend SchedulePlan build_schedule(const ScheduleConfig& config);

  ScheduleConfig config_;
  std::vector<double> alpha_, beta_, delta_;
  std::vector<double> alpha_bar_, beta_bar_, delta_bar_, gamma_bar_;
};

SchedulePlan build_schedule(const ScheduleConfig& config);

/// Throws IndexError unless 0 <= t <= T.
Coeffs coeffs_at(const SchedulePlan& plan, int t);

/// k+1 strictly decreasing timesteps from T to 0, uniformly spaced.
std::vector<int> subsample_timesteps(const SchedulePlan& plan, int k);

}  // namespace restorekit
