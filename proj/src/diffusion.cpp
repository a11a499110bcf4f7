#include "restorekit/diffusion.hpp"

#include <cmath>
#include <string>

#include "restorekit/error.hpp"
#include "restorekit/rng.hpp"

namespace restorekit {

namespace {

// out = a*x + b*y + c*z, elementwise.
Image combine(double a, const Image& x, double b, const Image& y, double c, const Image& z) {
  Image out(x.height(), x.width());
  auto o = out.values();
  auto xv = x.values();
  auto yv = y.values();
  auto zv = z.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * xv[i] + b * yv[i] + c * zv[i];
  return out;
}

}  // namespace

ResidualTarget make_residual(const Image& lq, const Image& hq) {
  require_same_shape(lq, hq, "make_residual");
  return {lq - hq};
}

Image forward_sample(const SchedulePlan& plan, const Image& hq, const Image& lq, int t,
                     const Image& noise) {
  require_same_shape(hq, lq, "forward_sample");
  require_same_shape(hq, noise, "forward_sample noise");
  const Coeffs k = coeffs_at(plan, t);
  return combine(k.lq_weight(), lq, k.hq_weight(), hq, k.delta_bar, noise);
}

Image forward_step(const SchedulePlan& plan, const Image& prev, const Image& lq,
                   const Image& hq, int t, const Image& step_noise) {
  require_same_shape(prev, lq, "forward_step");
  require_same_shape(prev, hq, "forward_step");
  require_same_shape(prev, step_noise, "forward_step noise");
  if (t < 1 || t > plan.T()) {
    throw IndexError("forward_step timestep " + std::to_string(t) + " outside [1, " +
                     std::to_string(plan.T()) + "]");
  }
  Image out = combine(plan.alpha(t) - plan.beta(t), lq, -plan.alpha(t), hq, plan.delta(t),
                      step_noise);
  out += prev;
  return out;
}

double training_loss(const Image& predicted, const ResidualTarget& target) {
  require_same_shape(predicted, target.residual, "training_loss");
  auto p = predicted.values();
  auto r = target.residual.values();
  if (p.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - r[i]);
  return sum / static_cast<double>(p.size());
}

Image training_loss_gradient(const Image& predicted, const ResidualTarget& target) {
  require_same_shape(predicted, target.residual, "training_loss_gradient");
  Image g(predicted.height(), predicted.width());
  auto gv = g.values();
  auto p = predicted.values();
  auto r = target.residual.values();
  const double inv_n = 1.0 / static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p[i] - r[i];
    gv[i] = d > 0 ? inv_n : (d < 0 ? -inv_n : 0.0);
  }
  return g;
}

DiffusionState init_inference_state(const SchedulePlan& plan, const Image& lq,
                                    const Image& noise) {
  require_same_shape(lq, noise, "init_inference_state");
  const Coeffs k = coeffs_at(plan, plan.T());
  Image img(lq.height(), lq.width());
  auto o = img.values();
  auto l = lq.values();
  auto n = noise.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = k.gamma_bar * l[i] + k.delta_bar * n[i];
  return {std::move(img), plan.T()};
}

DiffusionState reverse_step(const SchedulePlan& plan, const DiffusionState& state,
                            const Image& lq, const Image& residual_hat, int t_next) {
  if (t_next >= state.t) {
    throw OrderingError("reverse_step requires t_next < t (t=" + std::to_string(state.t) +
                        ", t_next=" + std::to_string(t_next) + ")");
  }
  require_same_shape(state.image, lq, "reverse_step");
  require_same_shape(state.image, residual_hat, "reverse_step residual");
  const Coeffs now = coeffs_at(plan, state.t);
  const Coeffs next = coeffs_at(plan, t_next);

  Image out(lq.height(), lq.width());
  auto o = out.values();
  auto x = state.image.values();
  auto l = lq.values();
  auto r = residual_hat.values();
  const bool has_noise = now.delta_bar > 0.0;
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double hq_hat = l[i] - r[i];
    double eps_hat = 0.0;
    if (has_noise) {
      eps_hat = (x[i] - now.lq_weight() * l[i] - now.hq_weight() * hq_hat) / now.delta_bar;
    }
    o[i] = next.lq_weight() * l[i] + next.hq_weight() * hq_hat + next.delta_bar * eps_hat;
  }
  return {std::move(out), t_next};
}

Image gaussian_image(int height, int width, std::uint64_t seed) {
  Image img(height, width);
  Rng rng(seed);
  for (double& v : img.values()) v = rng.normal();
  return img;
}

Image sample(const SchedulePlan& plan, const Denoiser& denoiser, const Image& lq, int steps,
             std::uint64_t seed) {
  const std::vector<int> ts = subsample_timesteps(plan, steps);
  DiffusionState state =
      init_inference_state(plan, lq, gaussian_image(lq.height(), lq.width(), seed));
  for (std::size_t i = 1; i < ts.size(); ++i) {
    Image r_hat = denoiser.predict(state.image, lq, state.t);
    require_same_shape(r_hat, lq, "denoiser output");
    state = reverse_step(plan, state, lq, r_hat, ts[i]);
  }
  return clamp01(std::move(state.image));
}

}  // namespace restorekit
