#include "doctest.h"
#include "restorekit/error.hpp"
#include "restorekit/schedule.hpp"

#include <cmath>

using namespace restorekit;

namespace {

void check_invariants(const SchedulePlan& plan) {
  const int T = plan.T();
  const auto& a = plan.alpha_bar();
  const auto& b = plan.beta_bar();
  const auto& d = plan.delta_bar();
  const auto& g = plan.gamma_bar();
  CHECK(a[0] == 0.0);
  CHECK(b[0] == 0.0);
  CHECK(d[0] == 0.0);
  CHECK(std::abs(a[T] - 1.0) <= 1e-9);
  CHECK(std::abs(b[T] - (1.0 - plan.config().gamma_T)) <= 1e-12);
  CHECK(std::abs(g[T] - plan.config().gamma_T) <= 1e-12);
  double sa = 0, sb = 0, sd2 = 0;
  for (int t = 1; t <= T; ++t) {
    CHECK(a[t] >= a[t - 1]);
    CHECK(b[t] >= b[t - 1]);
    CHECK(d[t] >= d[t - 1]);
    CHECK(g[t] <= g[t - 1]);
    CHECK(g[t] >= 0.0);
    CHECK(g[t] <= 1.0);
    CHECK(g[t] == 1.0 - b[t]);
    sa += plan.alpha(t);
    sb += plan.beta(t);
    sd2 += plan.delta(t) * plan.delta(t);
    CHECK(std::abs(sa - a[t]) <= 1e-9);
    CHECK(std::abs(sb - b[t]) <= 1e-9);
    CHECK(std::abs(std::sqrt(sd2) - d[t]) <= 1e-9);
  }
}

}  // namespace

TEST_CASE("linear schedule with gamma 0.3 and T=4") {
  const auto plan = build_schedule({.T = 4, .gamma_T = 0.3, .shape = ScheduleShape::kLinear, .delta_max = 0.05});
  const double abar[] = {0, .25, .5, .75, 1};
  const double bbar[] = {0, .175, .35, .525, .7};
  for (int t = 0; t <= 4; ++t) {
    CHECK(plan.alpha_bar()[t] == doctest::Approx(abar[t]).epsilon(1e-12));
    CHECK(plan.beta_bar()[t] == doctest::Approx(bbar[t]).epsilon(1e-12));
  }
  const Coeffs end = coeffs_at(plan, 4);
  CHECK(end.hq_weight() == 0.0);
  CHECK(end.lq_weight() == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(coeffs_at(plan, 2).alpha_bar == 0.5);
}

TEST_CASE("T=1 endpoint schedule") {
  const auto plan = build_schedule({.T = 1, .gamma_T = 0.0, .shape = ScheduleShape::kLinear, .delta_max = 0.0});
  CHECK(plan.alpha_bar() == std::vector<double>{0, 1});
  CHECK(plan.beta_bar() == std::vector<double>{0, 1});
  CHECK(plan.delta_bar() == std::vector<double>{0, 0});
}

TEST_CASE("coefficients at t=0 are (0,0,0,1)") {
  for (auto shape : {ScheduleShape::kLinear, ScheduleShape::kCosine}) {
    const auto plan = build_schedule({.T = 10, .gamma_T = 0.4, .shape = shape, .delta_max = 0.1});
    const Coeffs c = coeffs_at(plan, 0);
    CHECK(c.alpha_bar == 0.0);
    CHECK(c.beta_bar == 0.0);
    CHECK(c.delta_bar == 0.0);
    CHECK(c.gamma_bar == 1.0);
  }
}

TEST_CASE("invariants over a grid of T, gamma and shapes") {
  for (int T : {1, 4, 10, 100, 1000})
    for (double gamma : {0.0, 0.3, 1.0})
      for (auto shape : {ScheduleShape::kLinear, ScheduleShape::kCosine}) {
        CAPTURE(T);
        CAPTURE(gamma);
        check_invariants(build_schedule({.T = T, .gamma_T = gamma, .shape = shape, .delta_max = 0.05}));
      }
}

TEST_CASE("linear ramp for delta_bar") {
  const auto plan = build_schedule({.T = 10, .gamma_T = 0.3, .shape = ScheduleShape::kLinear, .delta_max = 0.2});
  for (int t = 0; t <= 10; ++t) CHECK(plan.delta_bar()[t] == doctest::Approx(0.2 * t / 10).epsilon(1e-12));
}

TEST_CASE("cosine shape eases in and out") {
  const auto plan = build_schedule({.T = 100, .gamma_T = 0.3, .shape = ScheduleShape::kCosine, .delta_max = 0.05});
  CHECK(plan.alpha(1) < plan.alpha(50));
  CHECK(plan.alpha(100) < plan.alpha(50));
  CHECK(plan.alpha_bar()[50] == doctest::Approx(0.5));
}

TEST_CASE("invalid configurations are rejected") {
  CHECK_THROWS_AS(build_schedule({.T = 0}), ConfigError);
  CHECK_THROWS_AS(build_schedule({.T = 4, .gamma_T = -0.1}), ConfigError);
  CHECK_THROWS_AS(build_schedule({.T = 4, .gamma_T = 1.5}), ConfigError);
  CHECK_THROWS_AS(build_schedule({.T = 4, .gamma_T = 0.3, .delta_max = -1}), ConfigError);
  CHECK_THROWS_AS(schedule_shape_from_string("sigmoid"), ConfigError);
}

TEST_CASE("coeffs_at rejects out-of-range timesteps") {
  const auto plan = build_schedule({.T = 4});
  CHECK_THROWS_AS(coeffs_at(plan, -1), IndexError);
  CHECK_THROWS_AS(coeffs_at(plan, 5), IndexError);
}

TEST_CASE("subsample_timesteps") {
  CHECK(subsample_timesteps(build_schedule({.T = 1000}), 4) == std::vector<int>{1000, 750, 500, 250, 0});
  CHECK(subsample_timesteps(build_schedule({.T = 4}), 4) == std::vector<int>{4, 3, 2, 1, 0});
  CHECK(subsample_timesteps(build_schedule({.T = 10}), 1) == std::vector<int>{10, 0});
  CHECK_THROWS_AS(subsample_timesteps(build_schedule({.T = 4}), 0), ConfigError);
  CHECK_THROWS_AS(subsample_timesteps(build_schedule({.T = 4}), 5), ConfigError);

  for (int T : {1, 3, 7, 10, 99, 100})
    for (int k = 1; k <= std::min(T, 12); ++k) {
      const auto ts = subsample_timesteps(build_schedule({.T = T}), k);
      REQUIRE(ts.size() == static_cast<std::size_t>(k + 1));
      CHECK(ts.front() == T);
      CHECK(ts.back() == 0);
      for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
    }
}
