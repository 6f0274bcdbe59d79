#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "scenegen/error.hpp"

namespace scenegen {

// Discrete variance schedule. alpha(t) is the cumulative product
// prod_{s<=t} (1 - beta_s); alpha(0) = 1 is the virtual clean step.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02) {
    require(steps >= 1, Errc::precondition, "schedule needs at least one step");
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i)
      betas[i] = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (steps - 1);
    return NoiseSchedule(std::move(betas));
  }

  explicit NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
    require(!betas_.empty(), Errc::precondition, "schedule needs at least one beta");
    alphas_cum_.reserve(betas_.size());
    double a = 1.0;
    for (double b : betas_) {
      require(b > 0.0 && b < 1.0, Errc::precondition, "beta outside (0,1)");
      a *= 1.0 - b;
      alphas_cum_.push_back(a);
    }
  }

  int steps() const noexcept { return static_cast<int>(betas_.size()); }
  const std::vector<double>& betas() const noexcept { return betas_; }
  const std::vector<double>& alphas_cum() const noexcept { return alphas_cum_; }

  double alpha(int t) const {
    if (t == 0) return 1.0;
    require(t >= 1 && t <= steps(), Errc::precondition, "timestep " + std::to_string(t) + " outside [0,T]");
    return alphas_cum_[static_cast<std::size_t>(t - 1)];
  }

  // n ascending timesteps in [1, T] with both endpoints, spaced
  // quadratically so low-noise steps are denser.
  std::vector<int> strided(int n) const {
    require(n >= 1 && n <= steps(), Errc::precondition, "strided: step count outside [1,T]");
    std::vector<int> ts;
    ts.reserve(static_cast<std::size_t>(n));
    if (n == 1) return {steps()};
    for (int i = 0; i < n; ++i) {
      const double f = static_cast<double>(i) / (n - 1);
      int t = 1 + static_cast<int>(std::lround(f * f * (steps() - 1)));
      if (!ts.empty()) t = std::max(t, ts.back() + 1);
      ts.push_back(t);
    }
    // Forced increments near the start can only overshoot by a few steps;
    // pull the tail back so the top endpoint is exactly T.
    ts.back() = steps();
    for (int i = n - 2; i >= 0 && ts[i] >= ts[i + 1]; --i) ts[i] = ts[i + 1] - 1;
    return ts;
  }

 private:
  std::vector<double> betas_;
  std::vector<double> alphas_cum_;
};

}  // namespace scenegen
