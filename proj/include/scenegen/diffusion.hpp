#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "scenegen/error.hpp"
#include "scenegen/geometry.hpp"
#include "scenegen/image.hpp"
#include "scenegen/rng.hpp"
#include "scenegen/schedule.hpp"

namespace scenegen {

// x_t = sqrt(a_t) x0 + sqrt(1 - a_t) eps
inline ImageBuffer forward_noise(const ImageBuffer& x0, int t, const ImageBuffer& eps, const NoiseSchedule& sched) {
  require_same_shape(x0, eps, "forward_noise");
  const double a = sched.alpha(t);
  const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
  ImageBuffer out = x0;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = sa * x0.data[i] + sn * eps.data[i];
  return out;
}

// x0_hat = (x_t - sqrt(1 - a_t) eps_hat) / sqrt(a_t)
inline ImageBuffer predict_x0(const ImageBuffer& x_t, int t, const ImageBuffer& eps_hat, const NoiseSchedule& sched) {
  require_same_shape(x_t, eps_hat, "predict_x0");
  const double a = sched.alpha(t);
  const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
  ImageBuffer out = x_t;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = (x_t.data[i] - sn * eps_hat.data[i]) / sa;
  return out;
}

// Deterministic DDIM update from t to t_prev (t_prev = 0 lands on x0_hat).
inline ImageBuffer ddim_step(const ImageBuffer& x_t, int t, int t_prev, const ImageBuffer& eps_hat,
                             const NoiseSchedule& sched) {
  require_same_shape(x_t, eps_hat, "ddim_step");
  if (t_prev >= t)
    throw Error(Errc::bad_timestep_order, "t_prev=" + std::to_string(t_prev) + " must precede t=" + std::to_string(t));
  const double a_prev = sched.alpha(t_prev);
  const double sa = std::sqrt(a_prev), sn = std::sqrt(1.0 - a_prev);
  ImageBuffer out = predict_x0(x_t, t, eps_hat, sched);
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = sa * out.data[i] + sn * eps_hat.data[i];
  return out;
}

// Optional conditioning payload passed to a denoiser. The toy backend uses
// the embedding to reweight its components and restricts the posterior to
// `region` when one is given; other backends may ignore either field.
struct Condition {
  std::optional<std::vector<double>> embedding;
  const Mask* region = nullptr;
  double strength = 0.0;
};

class DenoiserBackend {
 public:
  virtual ~DenoiserBackend() = default;
  // Noise estimate eps_theta(x_t, t); output has the shape of x_t.
  virtual ImageBuffer predict_noise(const ImageBuffer& x_t, int t, const NoiseSchedule& sched,
                                    const Condition& cond) const = 0;
};

struct MixtureComponent {
  double weight = 1.0;
  ImageBuffer mean;
  double stddev = 0.0;
  std::vector<double> key;  // conditioning key (embedding space); may be empty
  std::string label;
};

namespace detail {
inline double cosine_sim(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) return 0.0;
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}
}  // namespace detail

// Isotropic Gaussian mixture prior over images, sum_i w_i N(mu_i, s_i^2 I).
// Under x_t = sqrt(a) x0 + sqrt(1-a) eps, component i gives
//   x_t | i ~ N(sqrt(a) mu_i, v_i I),  v_i = a s_i^2 + 1 - a
//   E[x0 | x_t, i] = mu_i + sqrt(a) s_i^2 / v_i (x_t - sqrt(a) mu_i)
// and the exact posterior-mean noise is
//   eps_hat = (x_t - sqrt(a) E[x0 | x_t]) / sqrt(1 - a).
class ToyGaussianMixtureBackend final : public DenoiserBackend {
 public:
  explicit ToyGaussianMixtureBackend(std::vector<MixtureComponent> components) : components_(std::move(components)) {
    require(!components_.empty(), Errc::precondition, "mixture needs at least one component");
    double total = 0.0;
    for (const auto& c : components_) {
      require(c.weight > 0.0, Errc::precondition, "mixture weights must be positive");
      require(c.stddev >= 0.0, Errc::precondition, "mixture stddev must be >= 0");
      require(c.mean.same_shape(components_.front().mean), Errc::shape_mismatch, "mixture means differ in shape");
      total += c.weight;
    }
    require(std::abs(total - 1.0) < 1e-9, Errc::precondition, "mixture weights must sum to 1");
  }

  const std::vector<MixtureComponent>& components() const noexcept { return components_; }

  // Posterior component probabilities given x_t (log-domain normalized).
  std::vector<double> responsibilities(const ImageBuffer& x_t, int t, const NoiseSchedule& sched,
                                       const Condition& cond = {}) const {
    require_same_shape(x_t, components_.front().mean, "toy_eps");
    if (cond.region)
      require(cond.region->width == x_t.width && cond.region->height == x_t.height, Errc::shape_mismatch,
              "condition region does not match image");
    const double a = sched.alpha(t);
    const double sa = std::sqrt(a);
    const int plane = x_t.plane();
    std::vector<double> logp(components_.size());
    for (std::size_t i = 0; i < components_.size(); ++i) {
      const auto& comp = components_[i];
      const double v = a * comp.stddev * comp.stddev + (1.0 - a);
      double sq = 0.0;
      std::size_t n = 0;
      for (int c = 0; c < x_t.channels; ++c)
        for (int p = 0; p < plane; ++p) {
          if (cond.region && !cond.region->data[static_cast<std::size_t>(p)]) continue;
          const std::size_t idx = static_cast<std::size_t>(c) * plane + p;
          const double d = x_t.data[idx] - sa * comp.mean.data[idx];
          sq += d * d;
          ++n;
        }
      double lp = std::log(comp.weight) - 0.5 * static_cast<double>(n) * std::log(v) - 0.5 * sq / v;
      if (cond.embedding && !comp.key.empty()) lp += cond.strength * detail::cosine_sim(*cond.embedding, comp.key);
      logp[i] = lp;
    }
    const double mx = *std::max_element(logp.begin(), logp.end());
    double z = 0.0;
    for (auto& l : logp) z += (l = std::exp(l - mx));
    for (auto& l : logp) l /= z;
    return logp;
  }

  ImageBuffer posterior_mean(const ImageBuffer& x_t, int t, const NoiseSchedule& sched,
                             const Condition& cond = {}) const {
    const auto r = responsibilities(x_t, t, sched, cond);
    const double a = sched.alpha(t);
    const double sa = std::sqrt(a);
    ImageBuffer out(x_t.channels, x_t.height, x_t.width);
    for (std::size_t i = 0; i < components_.size(); ++i) {
      if (r[i] == 0.0) continue;
      const auto& comp = components_[i];
      const double v = a * comp.stddev * comp.stddev + (1.0 - a);
      const double gain = sa * comp.stddev * comp.stddev / v;
      for (std::size_t k = 0; k < out.size(); ++k)
        out.data[k] += r[i] * (comp.mean.data[k] + gain * (x_t.data[k] - sa * comp.mean.data[k]));
    }
    return out;
  }

  ImageBuffer predict_noise(const ImageBuffer& x_t, int t, const NoiseSchedule& sched,
                            const Condition& cond) const override {
    require(t >= 1, Errc::precondition, "toy_eps: t must be >= 1");
    const ImageBuffer mean = posterior_mean(x_t, t, sched, cond);
    const double a = sched.alpha(t);
    const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
    ImageBuffer eps = x_t;
    for (std::size_t k = 0; k < eps.size(); ++k) eps.data[k] = (x_t.data[k] - sa * mean.data[k]) / sn;
    return eps;
  }

  // Exact draw from one component.
  ImageBuffer sample_component(std::size_t i, Rng& rng) const {
    const auto& comp = components_.at(i);
    ImageBuffer out = comp.mean;
    if (comp.stddev > 0)
      for (auto& v : out.data) v += comp.stddev * rng.normal();
    return out;
  }

  // Component whose key is most cosine-similar to `embedding`; ties go to
  // the lower index. Returns nullopt when no component carries a key.
  std::optional<std::size_t> nearest_component(const std::vector<double>& embedding) const {
    std::optional<std::size_t> best;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < components_.size(); ++i) {
      if (components_[i].key.empty()) continue;
      const double s = detail::cosine_sim(embedding, components_[i].key);
      if (s > best_sim) best_sim = s, best = i;
    }
    return best;
  }

 private:
  std::vector<MixtureComponent> components_;
};

inline ImageBuffer toy_eps(const ToyGaussianMixtureBackend& backend, const ImageBuffer& x_t, int t,
                           const NoiseSchedule& sched) {
  return backend.predict_noise(x_t, t, sched, {});
}

// Deterministic DDIM from timesteps[start] down to the clean step.
// `timesteps` is ascending (NoiseSchedule::strided).
inline ImageBuffer ddim_sample(ImageBuffer x, const DenoiserBackend& backend, const NoiseSchedule& sched,
                               const std::vector<int>& timesteps, const Condition& cond = {},
                               std::optional<std::size_t> start = std::nullopt) {
  require(!timesteps.empty(), Errc::precondition, "ddim_sample: no timesteps");
  const std::size_t top = start.value_or(timesteps.size() - 1);
  require(top < timesteps.size(), Errc::precondition, "ddim_sample: start index out of range");
  for (std::size_t i = top + 1; i-- > 0;) {
    const int t = timesteps[i];
    const int t_prev = i > 0 ? timesteps[i - 1] : 0;
    const ImageBuffer eps = backend.predict_noise(x, t, sched, cond);
    x = ddim_step(x, t, t_prev, eps, sched);
    if (!x.all_finite()) throw NonFiniteStateError(t);
  }
  return x;
}

}  // namespace scenegen
