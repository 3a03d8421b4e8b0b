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

#ifndef GFK_SMC_HPP
#define GFK_SMC_HPP

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "gfk/linalg.hpp"
#include "gfk/rng.hpp"

/**
 * \file
 * \brief Feynman-Kac models and the adaptive-resampling SMC sampler.
 */

namespace gfk {

/// Raised when every particle carries zero weight.
class DegeneracyError : public Error {
 public:
  explicit DegeneracyError(int step)
      : Error("all particle weights vanished at step " + std::to_string(step)), step_{step} {}

  int step() const { return step_; }

 private:
  int step_;
};

/**
 * \brief A Feynman-Kac model over a cloud stored column-wise (d x J).
 *
 * `propose(k, prev, next, seed)` fills `next` with draws from M_{k|k-1};
 * particle j must take its randomness from `Stream(seed, j)` (the seed is
 * already specific to the run and step) so the result is independent of how
 * the loop is scheduled. `log_potential` is called
 * right after `propose` for the same step and may reuse quantities cached
 * there. A model may also provide `resampled(ancestors)`, called after each
 * resampling with the ancestor index of every new particle.
 */
template <typename M>
concept FeynmanKacModel = requires(M& model, const M& cmodel, int k, const MatrixXd& prev, MatrixXd& next,
                                   VectorXd& out, std::uint64_t seed) {
  { cmodel.dim() } -> std::convertible_to<Index>;
  { cmodel.steps() } -> std::convertible_to<int>;
  model.sample_initial(next, seed);
  model.initial_log_potential(prev, out);
  model.propose(k, prev, next, seed);
  model.log_potential(k, next, prev, out);
};

enum class ResamplingScheme { stratified, systematic, multinomial };

struct ResamplingPolicy {
  ResamplingScheme scheme = ResamplingScheme::stratified;
  double threshold_fraction = 0.7;

  void validate() const {
    if (!(threshold_fraction > 0.0 && threshold_fraction <= 1.0)) {
      throw Error("ResamplingPolicy: threshold fraction must lie in (0, 1]");
    }
  }
};

struct ParticleCloud {
  MatrixXd positions;  // d x J
  VectorXd log_weights;
  VectorXd normalized_weights;
  double ess = 0.0;
  int step = 0;
  std::vector<int> resampled_at;
  double log_normalizer_estimate = 0.0;
  std::vector<double> ess_trace;  // one entry per step 0..N, after weighting

  Index size() const { return positions.cols(); }
  Index dim() const { return positions.rows(); }
};

/// 1 / sum w^2, clamped to [1, J].
inline double ess(const Eigen::Ref<const VectorXd>& normalized_weights) {
  const double value = 1.0 / normalized_weights.squaredNorm();
  return std::clamp(value, 1.0, static_cast<double>(normalized_weights.size()));
}

struct Normalized {
  VectorXd weights;
  double log_mean = 0.0;
};

/**
 * \brief Normalizes log-weights. `log_mean` is log((1/J) sum exp(lw)).
 * Throws DegeneracyError(step) if no entry is finite.
 */
inline Normalized log_normalize(const Eigen::Ref<const VectorXd>& log_weights, int step = -1) {
  const double top = log_weights.maxCoeff();
  if (!std::isfinite(top)) {
    if (top == std::numeric_limits<double>::infinity()) {
      throw Error("log_normalize: infinite log-weight");
    }
    throw DegeneracyError(step);
  }
  Normalized out;
  out.weights = (log_weights.array() - top).exp();
  const double total = out.weights.sum();
  out.weights /= total;
  out.log_mean = top + std::log(total / static_cast<double>(log_weights.size()));
  return out;
}

/**
 * \brief Ancestor indices for normalized weights. Stratified draws one uniform
 * per stratum [j/J, (j+1)/J); systematic shares one offset; multinomial sorts
 * J i.i.d. uniforms. All three invert the same cumulative sum.
 */
inline std::vector<Index> resample(const Eigen::Ref<const VectorXd>& weights, ResamplingScheme scheme, Stream& rng) {
  const Index n = weights.size();
  std::vector<double> points(static_cast<std::size_t>(n));
  const double inv_n = 1.0 / static_cast<double>(n);
  switch (scheme) {
    case ResamplingScheme::stratified:
      for (Index j = 0; j < n; ++j) {
        points[static_cast<std::size_t>(j)] = (static_cast<double>(j) + rng.uniform()) * inv_n;
      }
      break;
    case ResamplingScheme::systematic: {
      const double offset = rng.uniform();
      for (Index j = 0; j < n; ++j) {
        points[static_cast<std::size_t>(j)] = (static_cast<double>(j) + offset) * inv_n;
      }
      break;
    }
    case ResamplingScheme::multinomial:
      for (auto& p : points) {
        p = rng.uniform();
      }
      std::sort(points.begin(), points.end());
      break;
  }

  std::vector<double> cumulative(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (Index i = 0; i < n; ++i) {
    acc += weights(i);
    cumulative[static_cast<std::size_t>(i)] = acc;
  }
  for (auto& c : cumulative) {
    c /= acc;
  }
  cumulative.back() = 1.0;

  std::vector<Index> ancestors(static_cast<std::size_t>(n));
  Index i = 0;
  for (Index j = 0; j < n; ++j) {
    const double u = points[static_cast<std::size_t>(j)];
    while (cumulative[static_cast<std::size_t>(i)] <= u) {
      ++i;
    }
    ancestors[static_cast<std::size_t>(j)] = i;
  }
  return ancestors;
}

inline std::vector<Index> resample(const ParticleCloud& cloud, const ResamplingPolicy& policy, Stream& rng) {
  return resample(cloud.normalized_weights, policy.scheme, rng);
}

/// Stream keys used by run_smc; models see only the per-step seeds.
namespace smc_keys {
inline constexpr std::uint64_t kInitial = 0x1A17;
inline constexpr std::uint64_t kResample = 0x2E5A;
}  // namespace smc_keys

/**
 * \brief Runs the adaptive SMC sampler on `model` with J particles.
 *
 * Step 0 draws from M_0 and weights by G_0. Each later step resamples when
 * the ESS of the incoming weights is below threshold_fraction * J, proposes,
 * multiplies by G_k and normalizes. The log-normalizer accumulates
 * log sum_j w_{k-1}^j G_k^j at every step.
 */
template <FeynmanKacModel Model>
ParticleCloud run_smc(Model& model, Index num_particles, const ResamplingPolicy& policy, std::uint64_t seed) {
  if (num_particles < 2) {
    throw Error("run_smc: need at least two particles");
  }
  policy.validate();
  const Index d = model.dim();
  const int steps = model.steps();

  ParticleCloud cloud;
  cloud.positions.resize(d, num_particles);
  model.sample_initial(cloud.positions, derive_seed(seed, smc_keys::kInitial));
  VectorXd increment(num_particles);
  model.initial_log_potential(cloud.positions, increment);

  auto normalized = log_normalize(increment, 0);
  cloud.log_normalizer_estimate = normalized.log_mean;
  cloud.normalized_weights = std::move(normalized.weights);
  cloud.log_weights = cloud.normalized_weights.array().log();
  cloud.ess = ess(cloud.normalized_weights);
  cloud.ess_trace.push_back(cloud.ess);

  const double threshold = policy.threshold_fraction * static_cast<double>(num_particles);
  const double log_uniform = -std::log(static_cast<double>(num_particles));
  MatrixXd next(d, num_particles);
  MatrixXd scratch;
  for (int k = 1; k <= steps; ++k) {
    if (cloud.ess < threshold) {
      Stream rng(seed, smc_keys::kResample, static_cast<std::uint64_t>(k));
      const auto ancestors = resample(cloud.normalized_weights, policy.scheme, rng);
      scratch.resize(d, num_particles);
      for (Index j = 0; j < num_particles; ++j) {
        scratch.col(j) = cloud.positions.col(ancestors[static_cast<std::size_t>(j)]);
      }
      cloud.positions.swap(scratch);
      if constexpr (requires { model.resampled(ancestors); }) {
        model.resampled(ancestors);
      }
      cloud.log_weights.setConstant(log_uniform);
      cloud.normalized_weights.setConstant(1.0 / static_cast<double>(num_particles));
      cloud.resampled_at.push_back(k);
    }

    model.propose(k, cloud.positions, next, derive_seed(seed, static_cast<std::uint64_t>(k)));
    model.log_potential(k, next, cloud.positions, increment);

    const VectorXd unnormalized = cloud.log_weights + increment;
    normalized = log_normalize(unnormalized, k);
    // log sum_j w_{k-1}^j G_k^j with w_{k-1} normalized
    cloud.log_normalizer_estimate += normalized.log_mean + std::log(static_cast<double>(num_particles));
    cloud.normalized_weights = std::move(normalized.weights);
    cloud.log_weights = cloud.normalized_weights.array().log();
    cloud.ess = ess(cloud.normalized_weights);
    cloud.ess_trace.push_back(cloud.ess);
    cloud.positions.swap(next);
    cloud.step = k;
  }
  return cloud;
}

}  // namespace gfk

#endif  // GFK_SMC_HPP
