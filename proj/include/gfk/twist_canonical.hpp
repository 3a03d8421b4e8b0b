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

#ifndef GFK_TWIST_CANONICAL_HPP
#define GFK_TWIST_CANONICAL_HPP

#include <cmath>
#include <cstdint>
#include <utility>

#include "gfk/diffusion.hpp"
#include "gfk/gaussian_mixture.hpp"
#include "gfk/linalg.hpp"
#include "gfk/rng.hpp"
#include "gfk/smc.hpp"

/**
 * \file
 * \brief Baselines built on the Tweedie-approximated canonical twisting
 * l(u) = N(y; H E[X_0 | X_t = u] + b, R): guided trajectories without
 * weights (DPS) and the twisted SMC sampler (TDS).
 */

namespace gfk {

/**
 * \brief Size of the guidance shift added to each Euler mean.
 *
 * Without normalization the shift is `scale * C * grad`, the Euler step of
 * the guided reverse SDE. With normalization it is
 * `scale * grad / (|y - H x0 - b| + epsilon)`.
 */
struct GuidanceConfig {
  double scale = 1.0;
  bool normalize = false;
  double epsilon = 1e-6;

  static GuidanceConfig tds() { return {1.0, false, 1e-6}; }
  static GuidanceConfig dps() { return {1.0, true, 1e-6}; }

  void validate() const {
    if (!(scale >= 0.0) || !std::isfinite(scale)) {
      throw Error("GuidanceConfig: scale must be finite and nonnegative");
    }
    if (!(epsilon > 0.0)) {
      throw Error("GuidanceConfig: epsilon must be positive");
    }
  }

  VectorXd shift(double step_variance, const Eigen::Ref<const VectorXd>& gradient, double residual_norm) const {
    if (normalize) {
      return (scale / (residual_norm + epsilon)) * gradient;
    }
    return (scale * step_variance) * gradient;
  }
};

/// Canonical-twist value and gradient at one point.
struct CanonicalTwistPoint {
  double log_value = 0.0;
  VectorXd gradient;
  double residual_norm = 0.0;
};

/// Canonical twist over a batch of columns.
struct CanonicalTwistBatch {
  VectorXd log_value;
  MatrixXd gradient;  // empty unless requested
  VectorXd residual_norm;
  MatrixXd score;     // score of p_t at each column (empty at t = 0)

  Index size() const { return log_value.size(); }
};

namespace detail {

/// x0 = exp(-a t)(u + sigma_t^2 s); log N(y; H x0 + b, R) and, when asked,
/// its gradient exp(-a t)(w + sigma_t^2 Hess w) with w = H^T R^{-1} residual.
/// `density` is p_t (unused at t = 0).
inline void canonical_twist(const MixtureDensity& density, const DiffusionSchedule& sched, double t,
                            const LinearGaussianObservation& obs, const Eigen::Ref<const VectorXd>& y,
                            const Eigen::Ref<const MatrixXd>& u, bool with_gradient, CanonicalTwistBatch& out) {
  const Index count = u.cols();
  out.log_value.resize(count);
  out.residual_norm.resize(count);
  if (with_gradient) {
    out.gradient.resize(u.rows(), count);
  }
  const bool identity = t == 0.0;
  if (identity) {
    out.score.resize(0, 0);
  } else {
    out.score.resize(u.rows(), count);
  }
  const double var = identity ? 0.0 : sched.noise_variance(t);
  const double inv_scale = identity ? 1.0 : 1.0 / sched.mean_factor(t);
  MixtureDensity::Batch batch;
  for (Index start = 0; start < count; start += MixtureDensity::kBlock) {
    const Index width = std::min(MixtureDensity::kBlock, count - start);
    const auto block = u.middleCols(start, width);
    MatrixXd x0;
    if (identity) {
      x0 = block;
    } else {
      density.evaluate(block, batch);
      out.score.middleCols(start, width) = batch.score;
      x0 = inv_scale * (block + var * batch.score);
    }
    MatrixXd residual = -(obs.H() * x0);
    residual.colwise() += y - obs.b();
    out.log_value.segment(start, width) = obs.R_factor().log_densities(residual);
    out.residual_norm.segment(start, width) = residual.colwise().norm().transpose();
    if (with_gradient) {
      const MatrixXd w = obs.H().transpose() * obs.R_factor().solve(residual);
      if (identity) {
        out.gradient.middleCols(start, width) = w;
      } else {
        out.gradient.middleCols(start, width) = inv_scale * (w + var * density.hvp(batch, w));
      }
    }
  }
}

inline CanonicalTwistPoint canonical_twist(const MixtureDensity& density, const DiffusionSchedule& sched, double t,
                                           const LinearGaussianObservation& obs, const Eigen::Ref<const VectorXd>& y,
                                           const Eigen::Ref<const VectorXd>& u, bool with_gradient) {
  CanonicalTwistBatch batch;
  canonical_twist(density, sched, t, obs, y, u, with_gradient, batch);
  CanonicalTwistPoint out;
  out.log_value = batch.log_value(0);
  out.residual_norm = batch.residual_norm(0);
  if (with_gradient) {
    out.gradient = batch.gradient.col(0);
  }
  return out;
}

}  // namespace detail

/// log N(y; H tweedie(u) + b, R) at noising time t.
inline double canonical_twist_logpdf(const ProblemInstance& instance, const DiffusionSchedule& sched, double t,
                                     const Eigen::Ref<const VectorXd>& y, const Eigen::Ref<const VectorXd>& u) {
  const MixtureDensity density(noised_marginal(instance.prior, sched, t));
  return detail::canonical_twist(density, sched, t, instance.observation, y, u, false).log_value;
}

/// Gradient in u of canonical_twist_logpdf, via a Hessian-vector product.
inline VectorXd canonical_twist_gradient(const ProblemInstance& instance, const DiffusionSchedule& sched, double t,
                                         const Eigen::Ref<const VectorXd>& y, const Eigen::Ref<const VectorXd>& u) {
  const MixtureDensity density(noised_marginal(instance.prior, sched, t));
  return detail::canonical_twist(density, sched, t, instance.observation, y, u, true).gradient;
}

/**
 * \brief Twisted model with the canonical Tweedie twisting: M_0 = p_T,
 * G_0 = l_0, proposal N(r + shift, C I) with the guidance shift taken at the
 * incoming particle, and G_k = l_k(u_k) q(u_k | u_{k-1}) /
 * (l_{k-1}(u_{k-1}) M(u_k | u_{k-1})).
 *
 * The twist evaluated at new particles in log_potential is kept, with its
 * gradient, for the next propose. Holds a pointer to `prior`, which must
 * outlive this object.
 */
class TdsModel {
 public:
  TdsModel(const DiffusionPrior& prior, LinearGaussianObservation obs, VectorXd y,
           GuidanceConfig config = GuidanceConfig::tds())
      : prior_{&prior}, obs_{std::move(obs)}, y_{std::move(y)}, config_{config}, reference_{prior.reference()} {
    config_.validate();
    if (obs_.state_dim() != prior.dim() || y_.size() != obs_.obs_dim()) {
      throw Error("TdsModel: inconsistent shapes");
    }
  }

  Index dim() const { return prior_->dim(); }
  int steps() const { return prior_->steps(); }
  const GuidanceConfig& config() const { return config_; }

  /// Canonical twist at grid (noising) index n.
  CanonicalTwistPoint twist_at(int n, const Eigen::Ref<const VectorXd>& u, bool with_gradient) const {
    const DiffusionSchedule& sched = prior_->schedule();
    return detail::canonical_twist(prior_->density(n), sched, sched.time(n), obs_, y_, u, with_gradient);
  }

  void twists_at(int n, const Eigen::Ref<const MatrixXd>& u, bool with_gradient, CanonicalTwistBatch& out) const {
    const DiffusionSchedule& sched = prior_->schedule();
    detail::canonical_twist(prior_->density(n), sched, sched.time(n), obs_, y_, u, with_gradient, out);
  }

  void sample_initial(MatrixXd& out, std::uint64_t seed) const { out = gm_sample(reference_, out.cols(), seed); }

  void initial_log_potential(const MatrixXd& particles, VectorXd& out) {
    store(steps(), particles);
    out = cache_.log_value;
  }

  /// Denoising mean r and guided mean of step k from u_prev.
  std::pair<VectorXd, VectorXd> proposal_means(int k, const Eigen::Ref<const VectorXd>& u_prev) const {
    CanonicalTwistBatch tw;
    twists_at(prior_->source_index(k), u_prev, true, tw);
    MatrixXd means;
    prior_->denoise_means_from_scores(k, u_prev, tw.score, means);
    VectorXd r = means.col(0);
    VectorXd mu = r + config_.shift(prior_->step_variance(k), tw.gradient.col(0), tw.residual_norm(0));
    return {std::move(r), std::move(mu)};
  }

  void propose(int k, const MatrixXd& prev, MatrixXd& next, std::uint64_t seed) {
    const int source = prior_->source_index(k);
    if (!(cache_index_ == source && cached_.cols() == prev.cols() && cached_ == prev)) {
      store(source, prev);
    }
    const double c = prior_->step_variance(k);
    prior_->denoise_means_from_scores(k, prev, cache_.score, means_);
    guided_.resize(prev.rows(), prev.cols());
    for (Index j = 0; j < prev.cols(); ++j) {
      guided_.col(j) = means_.col(j) + config_.shift(c, cache_.gradient.col(j), cache_.residual_norm(j));
    }
    log_twist_prev_ = cache_.log_value;
    next.resize(prev.rows(), prev.cols());
    for (Index j = 0; j < prev.cols(); ++j) {
      Stream rng(seed, static_cast<std::uint64_t>(j));
      rng.fill_normal(next.col(j));
    }
    next = guided_ + std::sqrt(c) * next;
  }

  void log_potential(int k, const MatrixXd& next, const MatrixXd& /*prev*/, VectorXd& out) {
    const double c = prior_->step_variance(k);
    store(prior_->twist_index(k), next);
    const VectorXd log_ratio =
        -0.5 * ((next - means_).colwise().squaredNorm() - (next - guided_).colwise().squaredNorm()).transpose() / c;
    out = cache_.log_value - log_twist_prev_ + log_ratio;
  }

  void resampled(const std::vector<Index>& ancestors) {
    const auto count = static_cast<Index>(ancestors.size());
    CanonicalTwistBatch moved;
    moved.log_value.resize(count);
    moved.residual_norm.resize(count);
    moved.gradient.resize(cache_.gradient.rows(), count);
    moved.score.resize(cache_.score.rows(), count);
    MatrixXd positions(cached_.rows(), count);
    for (Index j = 0; j < count; ++j) {
      const Index a = ancestors[static_cast<std::size_t>(j)];
      moved.log_value(j) = cache_.log_value(a);
      moved.residual_norm(j) = cache_.residual_norm(a);
      moved.gradient.col(j) = cache_.gradient.col(a);
      if (cache_.score.size() > 0) {
        moved.score.col(j) = cache_.score.col(a);
      }
      positions.col(j) = cached_.col(a);
    }
    cache_ = std::move(moved);
    cached_ = std::move(positions);
  }

 private:
  void store(int n, const MatrixXd& positions) {
    twists_at(n, positions, true, cache_);
    cached_ = positions;
    cache_index_ = n;
  }

  const DiffusionPrior* prior_;
  LinearGaussianObservation obs_;
  VectorXd y_;
  GuidanceConfig config_;
  GaussianMixture reference_;
  CanonicalTwistBatch cache_;  // twist at `cached_`, grid index cache_index_
  MatrixXd cached_;
  int cache_index_ = -1;
  MatrixXd means_;
  MatrixXd guided_;
  VectorXd log_twist_prev_;
};

static_assert(FeynmanKacModel<TdsModel>);

inline TdsModel build_tds_model(const DiffusionPrior& prior, const LinearGaussianObservation& obs,
                                const Eigen::Ref<const VectorXd>& y, GuidanceConfig config = GuidanceConfig::tds()) {
  return TdsModel(prior, obs, y, config);
}

/**
 * \brief DPS: J independent guided denoising trajectories from p_T, no
 * importance weights. Column j at step k draws from Stream(step seed, j),
 * matching the TDS proposal with the same configuration.
 */
inline MatrixXd dps_sample(const DiffusionPrior& prior, const LinearGaussianObservation& obs,
                           const Eigen::Ref<const VectorXd>& y, Index count, std::uint64_t seed,
                           GuidanceConfig config = GuidanceConfig::dps()) {
  TdsModel model(prior, obs, y, config);
  MatrixXd current(prior.dim(), count);
  model.sample_initial(current, derive_seed(seed, smc_keys::kInitial));
  MatrixXd next;
  for (int k = 1; k <= prior.steps(); ++k) {
    model.propose(k, current, next, derive_seed(seed, static_cast<std::uint64_t>(k)));
    current.swap(next);
  }
  return current;
}

}  // namespace gfk

#endif  // GFK_TWIST_CANONICAL_HPP
