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


#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

namespace gfk {
namespace {

using testing::fd_gradient;
using testing::random_mixture;
using testing::random_spd;
using testing::random_vector;
using testing::rel_err;

TEST(DiffusionSchedule, RejectsInvalidConstants) {
  EXPECT_THROW(DiffusionSchedule(1.0, 1.0, {0.0, 1.0}), Error);
  EXPECT_THROW(DiffusionSchedule(-1.0, 0.0, {0.0, 1.0}), Error);
  EXPECT_THROW(DiffusionSchedule(-1.0, 1.0, {0.5, 1.0}), Error);
  EXPECT_THROW(DiffusionSchedule(-1.0, 1.0, {0.0, 1.0, 1.0}), Error);
  EXPECT_THROW(DiffusionSchedule::uniform(0), Error);
}

TEST(DiffusionSchedule, DefaultsLeaveStandardNormalInvariant) {
  const auto sched = DiffusionSchedule::uniform();
  EXPECT_EQ(sched.steps(), 100);
  EXPECT_DOUBLE_EQ(sched.horizon(), 2.0);
  EXPECT_NEAR(sched.stationary_variance(), 1.0, 1e-15);
  for (int i = 0; i < sched.steps(); ++i) {
    const double a = sched.transition(i);
    EXPECT_NEAR(a * a + sched.transition_variance(i), 1.0, 1e-12);
    EXPECT_GT(sched.transition_variance(i), 0.0);
    EXPECT_GT(sched.denoise_variance(i + 1), 0.0);
  }
}

TEST(DiffusionSchedule, SemigroupComposes) {
  const DiffusionSchedule sched(-0.7, 1.3, {0.0, 0.3, 1.0, 2.5});
  const double t1 = 0.4;
  const double t2 = 1.1;
  EXPECT_NEAR(sched.mean_factor(t1) * sched.mean_factor(t2), sched.mean_factor(t1 + t2), 1e-12);
  const double composed = sched.mean_factor(t2) * sched.mean_factor(t2) * sched.noise_variance(t1) + sched.noise_variance(t2);
  EXPECT_NEAR(composed, sched.noise_variance(t1 + t2), 1e-12);
  EXPECT_NEAR(sched.dt(2), 0.7, 1e-15);
  EXPECT_NEAR(sched.denoise_variance(3), 1.69 * 1.5, 1e-12);
}

TEST(NoisedMarginal, IdentityAtZeroAndStationaryLimit) {
  Stream rng(1);
  const auto gm = random_mixture(rng, 3, 2);
  const auto sched = DiffusionSchedule::uniform(10, 40.0);
  const auto same = noised_marginal(gm, sched, 0.0);
  EXPECT_EQ(same.mean(1), gm.mean(1));
  EXPECT_EQ(same.covariance(0), gm.covariance(0));
  const auto far = noised_marginal(gm, sched, 40.0);
  for (Index i = 0; i < 2; ++i) {
    EXPECT_LT((far.eigenvalues(i).array() - 1.0).abs().maxCoeff(), 1e-12);
    EXPECT_LT(far.mean(i).norm(), 1e-12);
  }
  EXPECT_THROW(noised_marginal(gm, sched, 41.0), Error);
  EXPECT_THROW(noised_marginal(gm, sched, -1.0), Error);
}

TEST(NoisedMarginal, MatchesForwardSimulation) {
  // exact map at t = 2 vs Euler-Maruyama simulation of the OU SDE
  const auto sched = DiffusionSchedule::uniform();
  MatrixXd cov(2, 2);
  cov << 3.0, 1.2, 1.2, 2.0;
  const VectorXd m = VectorXd::Zero(2);
  const GaussianMixture gm(VectorXd::Ones(1), {m}, {cov});
  const auto noised = noised_marginal(gm, sched, 2.0);
  const MatrixXd expected = std::exp(-4.0) * cov + (1.0 - std::exp(-4.0)) * MatrixXd::Identity(2, 2);
  EXPECT_LT((noised.covariance(0) - expected).cwiseAbs().maxCoeff(), 1e-12);

  const Index n = 100000;
  const int steps = 800;
  const double h = 2.0 / steps;
  MatrixXd x = gm_sample(gm, n, 3);
  Stream rng(4);
  MatrixXd noise(2, n);
  for (int s = 0; s < steps; ++s) {
    rng.fill_normal(noise);
    x += -h * x + std::sqrt(2.0 * h) * noise;
  }
  const MatrixXd centered = x.colwise() - x.rowwise().mean();
  const MatrixXd sample_cov = centered * centered.transpose() / static_cast<double>(n - 1);
  EXPECT_LT(((sample_cov - expected).array() / expected.array().abs().max(0.3)).abs().maxCoeff(), 0.02);
}

TEST(NoisedMarginal, OneDimensionalQuadratureNormalizes) {
  Stream rng(5);
  const auto gm = random_mixture(rng, 1, 3, 6.0);
  const auto sched = DiffusionSchedule::uniform();
  const MixtureDensity density(noised_marginal(gm, sched, 0.37));
  const double total = testing::trapezoid(
      [&](double x) { return std::exp(density.log_density(VectorXd::Constant(1, x))); }, -30.0, 30.0, 30000);
  EXPECT_NEAR(total, 1.0, 1e-4);
}

TEST(Score, StandardNormal) {
  const auto sched = DiffusionSchedule::uniform();
  Stream rng(6);
  const VectorXd x = random_vector(rng, 5);
  const VectorXd v = random_vector(rng, 5);
  EXPECT_LT((score(testing::standard_normal(5), sched, 0.8, x) + x).norm(), 1e-12);
  EXPECT_LT((score_hessian_vector_product(testing::standard_normal(5), sched, 0.8, x, v) + v).norm(), 1e-12);
}

TEST(Score, FiniteDifferences) {
  const auto inst = generate_instance(8, 1, 4, 7);
  const auto sched = DiffusionSchedule::uniform();
  Stream rng(8);
  for (double t : {0.0, 0.05, 1.0}) {
    const MixtureDensity density(noised_marginal(inst.prior, sched, t));
    for (int trial = 0; trial < 100; ++trial) {
      // near a component so responsibilities are not saturated
      const VectorXd x = std::exp(-t) * inst.prior.mean(trial % 4) + random_vector(rng, 8, 1.5);
      const VectorXd fd = fd_gradient([&](const VectorXd& p) { return density.log_density(p); }, x);
      EXPECT_LT(rel_err(score(inst.prior, sched, t, x), fd), 1e-5) << "t=" << t << " trial " << trial;
    }
  }
}

TEST(Score, VanishesAtIsolatedComponentMean) {
  MatrixXd cov = MatrixXd::Identity(3, 3);
  const GaussianMixture gm(VectorXd::Constant(2, 0.5), {VectorXd::Constant(3, -50.0), VectorXd::Constant(3, 50.0)},
                           {cov, cov});
  EXPECT_LT(score(gm, DiffusionSchedule::uniform(), 0.0, VectorXd::Constant(3, 50.0)).norm(), 1e-6);
}

TEST(ScoreHvp, FiniteDifferencesAndSymmetry) {
  const auto inst = generate_instance(6, 1, 3, 9);
  const auto sched = DiffusionSchedule::uniform();
  Stream rng(10);
  const double eps = 1e-5;
  for (double t : {0.0, 0.4}) {
    for (int trial = 0; trial < 50; ++trial) {
      const VectorXd x = std::exp(-t) * inst.prior.mean(trial % 3) + random_vector(rng, 6, 1.5);
      const VectorXd v = random_vector(rng, 6);
      const VectorXd u = random_vector(rng, 6);
      const VectorXd hv = score_hessian_vector_product(inst.prior, sched, t, x, v);
      const VectorXd fd =
          (score(inst.prior, sched, t, x + eps * v) - score(inst.prior, sched, t, x - eps * v)) / (2.0 * eps);
      EXPECT_LT(rel_err(hv, fd), 1e-4);
      const VectorXd hu = score_hessian_vector_product(inst.prior, sched, t, x, u);
      EXPECT_NEAR(u.dot(hv), v.dot(hu), 1e-10 * (1.0 + std::abs(u.dot(hv))));
    }
  }
}

TEST(DenoiseMean, DriftOnlyWhenScoreVanishes) {
  const auto sched = DiffusionSchedule::uniform();
  // a very wide component has a negligible score near the origin
  const GaussianMixture wide(VectorXd::Ones(1), {VectorXd::Zero(2)}, {1e14 * MatrixXd::Identity(2, 2)});
  VectorXd u(2);
  u << 0.3, -1.2;
  const VectorXd r = denoise_mean(wide, sched, 10, u);
  EXPECT_LT((r - u * (1.0 + sched.dt(91))).norm(), 1e-12);
  EXPECT_THROW(denoise_mean(wide, sched, 0, u), Error);
  EXPECT_THROW(denoise_mean(wide, sched, 101, u), Error);
}

TEST(DenoiseMean, BatchMatchesPointwise) {
  const auto inst = generate_instance(10, 1, 3, 11);
  const DiffusionPrior prior(inst.prior, DiffusionSchedule::uniform());
  MatrixXd u(10, 5);
  Stream rng(12);
  rng.fill_normal(u);
  MatrixXd out;
  prior.denoise_means(37, u, out);
  for (Index j = 0; j < 5; ++j) {
    EXPECT_LT((out.col(j) - prior.denoise_mean(37, u.col(j))).norm(), 1e-12);
    EXPECT_LT((out.col(j) - denoise_mean(inst.prior, prior.schedule(), 37, u.col(j))).norm(), 1e-12);
  }
}

TEST(DiffusionPrior, IndexContract) {
  const auto inst = generate_instance(4, 1, 2, 13);
  const DiffusionPrior prior(inst.prior, DiffusionSchedule(-1.0, std::sqrt(2.0), {0.0, 0.1, 0.4, 1.0}));
  EXPECT_EQ(prior.twist_index(1), 2);
  EXPECT_EQ(prior.source_index(1), 3);
  EXPECT_EQ(prior.twist_index(3), 0);
  // step 1 leaves t_3 = 1.0 for t_2 = 0.4
  EXPECT_NEAR(prior.step_variance(1), 2.0 * 0.6, 1e-12);
  EXPECT_NEAR(prior.step_variance(3), 2.0 * 0.1, 1e-12);
  EXPECT_THROW(prior.check_step(0), Error);
}

TEST(DenoiseChain, StationaryPriorStaysStandardNormal) {
  const DiffusionPrior prior(testing::standard_normal(3), DiffusionSchedule::uniform());
  const MatrixXd x = sample_unconditional(prior, 100000, 14);
  const MatrixXd centered = x.colwise() - x.rowwise().mean();
  const MatrixXd cov = centered * centered.transpose() / static_cast<double>(x.cols() - 1);
  EXPECT_LT((cov - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 0.05);
}

TEST(Tweedie, MatchesGaussianConditional) {
  Stream rng(15);
  const Index d = 4;
  const MatrixXd lam = random_spd(rng, d);
  const VectorXd m = random_vector(rng, d, 2.0);
  const GaussianMixture gm(VectorXd::Ones(1), {m}, {lam});
  const auto sched = DiffusionSchedule::uniform();
  const double t = 0.7;
  const double alpha = std::exp(-t);
  const double var = 1.0 - std::exp(-2.0 * t);
  const VectorXd x = random_vector(rng, d);
  const MatrixXd marg = alpha * alpha * lam + var * MatrixXd::Identity(d, d);
  const VectorXd expected = m + alpha * lam * marg.ldlt().solve(x - alpha * m);
  EXPECT_LT((tweedie_denoise(gm, sched, t, x) - expected).norm(), 1e-8);
  EXPECT_LT((tweedie_denoise(gm, sched, t, alpha * m) - m).norm(), 1e-8);
  EXPECT_EQ(tweedie_denoise(gm, sched, 0.0, x), x);
  const double small = 1e-6;
  EXPECT_LT((tweedie_denoise(gm, sched, small, x) - x).norm(), 100.0 * small * (1.0 + x.norm()));
}

}  // namespace
}  // namespace gfk
