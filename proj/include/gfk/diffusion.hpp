// Copyright 2026 The gfk Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GFK_DIFFUSION_HPP
#define GFK_DIFFUSION_HPP

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "gfk/gaussian_mixture.hpp"
#include "gfk/linalg.hpp"

/**
 * \file
 * \brief Ornstein-Uhlenbeck noising of a Gaussian mixture and its
 * Euler-Maruyama time reversal.
 *
 * Noising: dX = a X dt + b dW. Every closed form below is the exact OU
 * transition; only the reverse-time sampler is discretised.
 */

namespace gfk {

/**
 * \brief OU constants and time grid `0 = t_0 < ... < t_N = T`.
 *
 * Transition index `i` in [0, N) refers to the interval [t_i, t_{i+1}];
 * denoising covariance index `k` in [1, N] refers to [t_{k-1}, t_k].
 */
class DiffusionSchedule {
 public:
  DiffusionSchedule() : DiffusionSchedule(-1.0, std::numbers::sqrt2, uniform_grid(100, 2.0)) {}

  DiffusionSchedule(double drift, double diffusion, std::vector<double> grid)
      : drift_{drift}, diffusion_{diffusion}, grid_{std::move(grid)} {
    if (!(drift_ < 0.0)) {
      throw Error("DiffusionSchedule: drift constant must be negative");
    }
    if (!(diffusion_ > 0.0)) {
      throw Error("DiffusionSchedule: diffusion constant must be positive");
    }
    if (grid_.size() < 2 || grid_.front() != 0.0) {
      throw Error("DiffusionSchedule: grid must start at 0 and have at least one step");
    }
    for (std::size_t i = 1; i < grid_.size(); ++i) {
      if (!(grid_[i] > grid_[i - 1])) {
        throw Error("DiffusionSchedule: grid must be strictly increasing");
      }
    }
  }

  static DiffusionSchedule uniform(int steps = 100, double horizon = 2.0, double drift = -1.0,
                                   double diffusion = std::numbers::sqrt2) {
    return {drift, diffusion, uniform_grid(steps, horizon)};
  }

  static std::vector<double> uniform_grid(int steps, double horizon) {
    if (steps < 1 || !(horizon > 0.0)) {
      throw Error("DiffusionSchedule: need steps >= 1 and a positive horizon");
    }
    std::vector<double> grid(static_cast<std::size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k) {
      grid[static_cast<std::size_t>(k)] = horizon * static_cast<double>(k) / static_cast<double>(steps);
    }
    grid.back() = horizon;
    return grid;
  }

  double drift() const { return drift_; }
  double diffusion() const { return diffusion_; }
  int steps() const { return static_cast<int>(grid_.size()) - 1; }
  double horizon() const { return grid_.back(); }
  double time(int k) const { return grid_.at(static_cast<std::size_t>(k)); }
  const std::vector<double>& grid() const { return grid_; }

  /// t_k - t_{k-1}, k in [1, N].
  double dt(int k) const { return time(k) - time(k - 1); }

  /// exp(a t): mean contraction over a span t.
  double mean_factor(double t) const { return std::exp(drift_ * t); }

  /// (b^2 / 2a)(exp(2 a t) - 1): variance accumulated over a span t.
  double noise_variance(double t) const {
    return diffusion_ * diffusion_ / (2.0 * drift_) * std::expm1(2.0 * drift_ * t);
  }

  double stationary_variance() const { return -diffusion_ * diffusion_ / (2.0 * drift_); }

  /// A_i over [t_i, t_{i+1}], i in [0, N).
  double transition(int i) const { return mean_factor(dt(i + 1)); }

  /// Sigma_i over [t_i, t_{i+1}], i in [0, N).
  double transition_variance(int i) const { return noise_variance(dt(i + 1)); }

  /// C_k = b^2 (t_k - t_{k-1}), k in [1, N].
  double denoise_variance(int k) const { return diffusion_ * diffusion_ * dt(k); }

  /// Eigenvalue map theta -> exp(2 a t) theta + noise_variance(t).
  double noised_eigenvalue(double theta, double t) const {
    return std::exp(2.0 * drift_ * t) * theta + noise_variance(t);
  }

 private:
  double drift_;
  double diffusion_;
  std::vector<double> grid_;
};

/// The marginal p_t of the noising process started at `gm`.
inline GaussianMixture noised_marginal(const GaussianMixture& gm, const DiffusionSchedule& sched, double t) {
  if (t < 0.0 || t > sched.horizon() * (1.0 + 1e-12)) {
    throw Error("noised_marginal: t outside [0, T]");
  }
  if (t == 0.0) {
    return gm;
  }
  return gm.transformed(sched.mean_factor(t), [&](double theta) { return sched.noised_eigenvalue(theta, t); });
}

/// grad log p_t(x).
inline VectorXd score(const GaussianMixture& gm, const DiffusionSchedule& sched, double t,
                      const Eigen::Ref<const VectorXd>& x) {
  return MixtureDensity(noised_marginal(gm, sched, t)).score(x);
}

/// (Hessian of log p_t at x) * v, without forming the Hessian.
inline VectorXd score_hessian_vector_product(const GaussianMixture& gm, const DiffusionSchedule& sched, double t,
                                             const Eigen::Ref<const VectorXd>& x,
                                             const Eigen::Ref<const VectorXd>& v) {
  VectorXd s(x.size());
  VectorXd hv(x.size());
  MixtureDensity(noised_marginal(gm, sched, t)).score_hvp(x, v, s, hv);
  return hv;
}

/**
 * \brief Prior mixture plus schedule with the noised densities at every grid
 * time precomputed. This is the diffusion model the samplers run on.
 *
 * Denoising step `k` in [1, N] moves a particle from noising time t_{N-k+1}
 * to t_{N-k}; `twist_index(k)` and `source_index(k)` centralise that mapping.
 */
class DiffusionPrior {
 public:
  DiffusionPrior(GaussianMixture prior, DiffusionSchedule sched) : prior_{std::move(prior)}, sched_{std::move(sched)} {
    densities_.reserve(static_cast<std::size_t>(sched_.steps()) + 1);
    for (int n = 0; n <= sched_.steps(); ++n) {
      densities_.emplace_back(noised_marginal(prior_, sched_, sched_.time(n)));
    }
  }

  const GaussianMixture& prior() const { return prior_; }
  const DiffusionSchedule& schedule() const { return sched_; }
  int steps() const { return sched_.steps(); }
  Index dim() const { return prior_.dim(); }

  /// Noising index of the particle produced by denoising step k.
  int twist_index(int k) const { return sched_.steps() - k; }
  /// Noising index of the particle consumed by denoising step k.
  int source_index(int k) const { return sched_.steps() - k + 1; }

  /// Density of p_{t_n}.
  const MixtureDensity& density(int n) const { return densities_.at(static_cast<std::size_t>(n)); }

  /// The reference distribution p_T.
  GaussianMixture reference() const { return noised_marginal(prior_, sched_, sched_.horizon()); }

  /// Euler-Maruyama step covariance coefficient of denoising step k.
  double step_variance(int k) const { return sched_.denoise_variance(source_index(k)); }

  /**
   * \brief Mean r of denoising step k from u:
   * u + dt (-a u + b^2 score(u)) with the score at the source time.
   */
  VectorXd denoise_mean(int k, const Eigen::Ref<const VectorXd>& u) const {
    VectorXd s(u.size());
    density(source_index(k)).score(u, s);
    return denoise_mean_from_score(k, u, s);
  }

  VectorXd denoise_mean_from_score(int k, const Eigen::Ref<const VectorXd>& u,
                                   const Eigen::Ref<const VectorXd>& score_u) const {
    check_step(k);
    const double h = sched_.dt(source_index(k));
    const double b2 = sched_.diffusion() * sched_.diffusion();
    return (1.0 - sched_.drift() * h) * u + (h * b2) * score_u;
  }

  /// Column-wise denoise_mean_from_score, written into `out`.
  void denoise_means_from_scores(int k, const Eigen::Ref<const MatrixXd>& u, const Eigen::Ref<const MatrixXd>& scores,
                                 MatrixXd& out) const {
    check_step(k);
    const double h = sched_.dt(source_index(k));
    const double b2 = sched_.diffusion() * sched_.diffusion();
    out = (1.0 - sched_.drift() * h) * u + (h * b2) * scores;
  }

  /// Column-wise denoise_mean, written into `out` (must not alias `u`).
  void denoise_means(int k, const Eigen::Ref<const MatrixXd>& u, MatrixXd& out) const {
    check_step(k);
    density(source_index(k)).scores(u, out);
    const double h = sched_.dt(source_index(k));
    const double b2 = sched_.diffusion() * sched_.diffusion();
    out = (1.0 - sched_.drift() * h) * u + (h * b2) * out;
  }

  /// E[X_0 | X_{t_n} = x] from the score at grid time t_n.
  VectorXd tweedie_from_score(int n, const Eigen::Ref<const VectorXd>& x,
                              const Eigen::Ref<const VectorXd>& score_x) const {
    const double t = sched_.time(n);
    if (t == 0.0) {
      return x;
    }
    return (x + sched_.noise_variance(t) * score_x) / sched_.mean_factor(t);
  }

  void check_step(int k) const {
    if (k < 1 || k > sched_.steps()) {
      throw Error("denoising step index out of range");
    }
  }

 private:
  GaussianMixture prior_;
  DiffusionSchedule sched_;
  std::vector<MixtureDensity> densities_;
};

/// One Euler-Maruyama mean step r_k(u) of the reverse SDE.
inline VectorXd denoise_mean(const GaussianMixture& gm, const DiffusionSchedule& sched, int k,
                             const Eigen::Ref<const VectorXd>& u) {
  if (k < 1 || k > sched.steps()) {
    throw Error("denoise_mean: step index out of range");
  }
  const int source = sched.steps() - k + 1;
  const double h = sched.dt(source);
  const double b2 = sched.diffusion() * sched.diffusion();
  const VectorXd s = score(gm, sched, sched.time(source), u);
  return (1.0 - sched.drift() * h) * u + (h * b2) * s;
}

/// Tweedie denoiser E[X_0 | X_t = x] = exp(-a t)(x + sigma_t^2 score).
inline VectorXd tweedie_denoise(const GaussianMixture& gm, const DiffusionSchedule& sched, double t,
                                const Eigen::Ref<const VectorXd>& x) {
  if (t == 0.0) {
    return x;
  }
  const VectorXd s = score(gm, sched, t, x);
  return (x + sched.noise_variance(t) * s) / sched.mean_factor(t);
}

/**
 * \brief Unconditional sampler: J draws from p_T pushed through the N
 * Euler-Maruyama denoising steps. Column j uses the keyed streams
 * (seed, step, j).
 */
inline MatrixXd sample_unconditional(const DiffusionPrior& model, Index count, std::uint64_t seed) {
  MatrixXd u = gm_sample(model.reference(), count, derive_seed(seed, 0));
  MatrixXd next;
  for (int k = 1; k <= model.steps(); ++k) {
    const double root = std::sqrt(model.step_variance(k));
    model.denoise_means(k, u, next);
    for (Index j = 0; j < count; ++j) {
      Stream rng(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(j));
      rng.fill_normal(u.col(j));
    }
    u = next + root * u;
  }
  return u;
}

}  // namespace gfk

#endif  // GFK_DIFFUSION_HPP
