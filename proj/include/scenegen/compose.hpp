#pragma once

#include <cmath>
#include <cstdint>
#include <functional>

#include "scenegen/diffusion.hpp"
#include "scenegen/guidance.hpp"

namespace scenegen {

// Loss and gradient w.r.t. the clean-image estimate.
using GuidanceTerm = std::function<LossGrad(const ImageBuffer& x0_hat)>;

inline GuidanceTerm make_guidance_term(const GuidanceSpec& spec, const EmbeddingOracle& oracle,
                                       const PerceptualMetric* perceptual = nullptr) {
  spec.validate();
  return [&spec, &oracle, perceptual](const ImageBuffer& x0_hat) {
    return guidance_loss_and_grad(x0_hat, spec, oracle, perceptual);
  };
}

struct ComposeOptions {
  int steps = 50;     // strided DDIM steps
  int n_inner = 1;    // sampling iterations per timestep
  std::uint64_t seed = 0;
  Condition condition;
};

// Masked guided sampling. Starting from x_init noised to the top timestep,
// each step estimates x0, shifts the noise estimate along the guidance
// gradient, takes a DDIM step for the foreground, and pastes the foreground
// into a freshly noised copy of x_init at the destination noise level:
//
//   eps_hat = eps_theta(x_t) + scale * sqrt(1 - a_t) * dL/dx0_hat
//   x_fg    = ddim_step(x_t, t, t_prev, eps_hat)
//   x_prev  = m * x_fg + (1 - m) * forward_noise(x_init, t_prev, z)
//
// Adding the gradient to eps moves x0_hat downhill on L. At the final step
// t_prev is the clean step, so outside the mask the result equals x_init.
// With n_inner > 1 the step is repeated after re-noising x_prev back to t.
inline ImageBuffer guided_compose(const ImageBuffer& x_init, const Mask& mask, const GuidanceTerm& guidance,
                                  double scale, const DenoiserBackend& backend, const NoiseSchedule& sched,
                                  const ComposeOptions& opts) {
  if (mask.width != x_init.width || mask.height != x_init.height)
    throw Error(Errc::shape_mismatch, "guided_compose: mask does not match image");
  require(opts.n_inner >= 1, Errc::precondition, "guided_compose: n_inner must be >= 1");
  require(std::isfinite(scale) && scale >= 0, Errc::precondition, "guided_compose: scale must be finite and >= 0");
  const std::vector<int> ts = sched.strided(opts.steps);
  Rng rng(opts.seed);

  const int plane = x_init.plane();
  const auto blend = [&](const ImageBuffer& fg, const ImageBuffer& bg) {
    ImageBuffer out = fg;
    for (int c = 0; c < out.channels; ++c)
      for (int p = 0; p < plane; ++p) {
        const std::size_t i = static_cast<std::size_t>(c) * plane + p;
        const double m = mask.data[static_cast<std::size_t>(p)] ? 1.0 : 0.0;
        out.data[i] = m * fg.data[i] + (1.0 - m) * bg.data[i];
      }
    return out;
  };

  ImageBuffer x = forward_noise(x_init, ts.back(), gaussian_like(x_init, rng), sched);
  for (std::size_t i = ts.size(); i-- > 0;) {
    const int t = ts[i];
    const int t_prev = i > 0 ? ts[i - 1] : 0;
    const double a = sched.alpha(t);
    for (int iter = 0; iter < opts.n_inner; ++iter) {
      ImageBuffer eps = backend.predict_noise(x, t, sched, opts.condition);
      if (scale != 0.0) {
        const ImageBuffer x0_hat = predict_x0(x, t, eps, sched);
        const LossGrad lg = guidance(x0_hat);
        require_same_shape(lg.grad, x, "guidance gradient");
        const double k = scale * std::sqrt(1.0 - a);
        for (std::size_t j = 0; j < eps.size(); ++j) eps.data[j] += k * lg.grad.data[j];
      }
      const ImageBuffer x_fg = ddim_step(x, t, t_prev, eps, sched);
      const ImageBuffer bg = forward_noise(x_init, t_prev, gaussian_like(x_init, rng), sched);
      ImageBuffer next = blend(x_fg, bg);
      if (!next.all_finite()) throw NonFiniteStateError(t);
      if (iter + 1 < opts.n_inner) {
        const double ratio = a / sched.alpha(t_prev);
        const double sr = std::sqrt(ratio), sn = std::sqrt(1.0 - ratio);
        for (auto& v : next.data) v = sr * v + sn * rng.normal();
        x = std::move(next);
      } else {
        x = std::move(next);
      }
    }
  }
  return x;
}

inline ImageBuffer guided_compose(const ImageBuffer& x_init, const GuidanceSpec& spec, const EmbeddingOracle& oracle,
                                  const PerceptualMetric* perceptual, const DenoiserBackend& backend,
                                  const NoiseSchedule& sched, const ComposeOptions& opts) {
  return guided_compose(x_init, spec.mask, make_guidance_term(spec, oracle, perceptual), spec.scale, backend, sched,
                        opts);
}

}  // namespace scenegen
