#pragma once

#include <cstdint>

#include "restorekit/image.hpp"
#include "restorekit/schedule.hpp"

namespace restorekit {

/// Residual predictor R_theta(I_t, I_LQ, t). Implementations must be
/// deterministic in evaluation mode and return an image of the input shape.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Image predict(const Image& x_t, const Image& lq, int t) const = 0;
};

struct ResidualTarget {
  Image residual;  // I_LQ - I_HQ
};

ResidualTarget make_residual(const Image& lq, const Image& hq);

struct DiffusionState {
  Image image;
  int t = 0;
};

/// Closed-form I_t = (abar_t - bbar_t) I_LQ + (1 - abar_t) I_HQ + dbar_t eps.
Image forward_sample(const SchedulePlan& plan, const Image& hq, const Image& lq, int t,
                     const Image& noise);

/// One step of the recursion
/// I_t = I_{t-1} + (alpha_t - beta_t) I_LQ - alpha_t I_HQ + delta_t eps_{t-1}.
Image forward_step(const SchedulePlan& plan, const Image& prev, const Image& lq,
                   const Image& hq, int t, const Image& step_noise);

/// Mean absolute error over all elements.
double training_loss(const Image& predicted, const ResidualTarget& target);

/// Subgradient of training_loss w.r.t. the prediction (sign(diff) / N, 0 at kinks).
Image training_loss_gradient(const Image& predicted, const ResidualTarget& target);

/// I_T = gamma_bar_T I_LQ + delta_bar_T eps; takes no HQ input.
DiffusionState init_inference_state(const SchedulePlan& plan, const Image& lq,
                                    const Image& noise);

/// Deterministic trajectory-consistent step from state.t to t_next < state.t.
DiffusionState reverse_step(const SchedulePlan& plan, const DiffusionState& state,
                            const Image& lq, const Image& residual_hat, int t_next);

/// Few-step sampler: init from I_LQ, step along subsample_timesteps(plan, steps),
/// clamp the final image to [0,1].
Image sample(const SchedulePlan& plan, const Denoiser& denoiser, const Image& lq,
             int steps = 4, std::uint64_t seed = 0);

/// Standard-normal image drawn from `seed`.
Image gaussian_image(int height, int width, std::uint64_t seed);

}  // namespace restorekit
