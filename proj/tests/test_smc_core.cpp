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
#include <limits>

#include "test_support.hpp"

namespace gfk {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(Ess, HandValues) {
  EXPECT_DOUBLE_EQ(ess(VectorXd::Constant(100, 0.01)), 100.0);
  EXPECT_DOUBLE_EQ(ess(VectorXd::Unit(7, 3)), 1.0);
  VectorXd w(3);
  w << 0.5, 0.25, 0.25;
  EXPECT_NEAR(ess(w), 1.0 / 0.375, 1e-14);
}

TEST(LogNormalize, EqualAndInfiniteEntries) {
  const auto eq = log_normalize(VectorXd::Constant(4, -3.5));
  EXPECT_LT((eq.weights.array() - 0.25).abs().maxCoeff(), 1e-15);
  EXPECT_NEAR(eq.log_mean, -3.5, 1e-15);

  VectorXd lw(2);
  lw << 0.0, -kInf;
  const auto one = log_normalize(lw);
  EXPECT_EQ(one.weights(0), 1.0);
  EXPECT_EQ(one.weights(1), 0.0);
  EXPECT_DOUBLE_EQ(ess(one.weights), 1.0);

  EXPECT_THROW(log_normalize(VectorXd::Constant(3, -kInf), 4), DegeneracyError);
  try {
    log_normalize(VectorXd::Constant(3, -kInf), 4);
  } catch (const DegeneracyError& e) {
    EXPECT_EQ(e.step(), 4);
  }
  lw << 0.0, kInf;
  EXPECT_THROW(log_normalize(lw), Error);
}

TEST(LogNormalize, ExtendedPrecisionOracle) {
  Stream rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd lw(200);
    rng.fill_normal(lw);
    lw *= 30.0;
    const auto got = log_normalize(lw);
    long double top = lw.maxCoeff();
    long double total = 0.0L;
    for (Index j = 0; j < lw.size(); ++j) {
      total += std::exp(static_cast<long double>(lw(j)) - top);
    }
    const long double log_mean = top + std::log(total / 200.0L);
    EXPECT_NEAR(got.log_mean, static_cast<double>(log_mean), 1e-12 * std::max(1.0, std::abs(got.log_mean)));
    for (Index j = 0; j < lw.size(); ++j) {
      const long double w = std::exp(static_cast<long double>(lw(j)) - top) / total;
      EXPECT_NEAR(got.weights(j), static_cast<double>(w), 1e-12);
    }
  }
}

TEST(Resample, UniformWeightsCopyEachOnce) {
  Stream rng(2);
  const auto anc = resample(VectorXd::Constant(64, 1.0 / 64), ResamplingScheme::stratified, rng);
  for (Index j = 0; j < 64; ++j) {
    EXPECT_EQ(anc[static_cast<std::size_t>(j)], j);
  }
}

TEST(Resample, OneHotWeights) {
  for (auto scheme : {ResamplingScheme::stratified, ResamplingScheme::systematic, ResamplingScheme::multinomial}) {
    Stream rng(3);
    for (Index a : resample(VectorXd::Unit(10, 0), scheme, rng)) {
      EXPECT_EQ(a, 0);
    }
  }
}

std::vector<Index> copy_counts(const std::vector<Index>& ancestors, Index n) {
  std::vector<Index> counts(static_cast<std::size_t>(n), 0);
  for (Index a : ancestors) {
    ++counts[static_cast<std::size_t>(a)];
  }
  return counts;
}

TEST(Resample, SystematicCopiesAreFloorOrCeil) {
  Stream rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index n = 5 + trial % 40;
    VectorXd w(n);
    for (Index j = 0; j < n; ++j) {
      w(j) = -std::log(1.0 - rng.uniform());
    }
    w /= w.sum();
    const auto counts = copy_counts(resample(w, ResamplingScheme::systematic, rng), n);
    for (Index j = 0; j < n; ++j) {
      const double expected = static_cast<double>(n) * w(j);
      const auto c = static_cast<double>(counts[static_cast<std::size_t>(j)]);
      EXPECT_TRUE(c == std::floor(expected) || c == std::ceil(expected)) << "trial " << trial;
    }
  }
}

TEST(Resample, StratifiedCopiesWithinOneOfFloorOrCeil) {
  // one uniform per stratum can add or drop one copy beyond floor/ceil
  Stream rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index n = 5 + trial % 40;
    VectorXd w(n);
    for (Index j = 0; j < n; ++j) {
      w(j) = -std::log(1.0 - rng.uniform());
    }
    w /= w.sum();
    const auto counts = copy_counts(resample(w, ResamplingScheme::stratified, rng), n);
    Index total = 0;
    for (Index j = 0; j < n; ++j) {
      const double expected = static_cast<double>(n) * w(j);
      const auto c = static_cast<double>(counts[static_cast<std::size_t>(j)]);
      EXPECT_GE(c, std::floor(expected) - 1.0);
      EXPECT_LE(c, std::ceil(expected) + 1.0);
      total += counts[static_cast<std::size_t>(j)];
    }
    EXPECT_EQ(total, n);
  }
}

TEST(Resample, PreservesWeightedMeanInExpectation) {
  Stream rng(6);
  const Index n = 50;
  VectorXd x(n);
  rng.fill_normal(x);
  VectorXd w(n);
  for (Index j = 0; j < n; ++j) {
    w(j) = rng.uniform() + 0.05;
  }
  w /= w.sum();
  const double target = w.dot(x);
  for (auto scheme : {ResamplingScheme::stratified, ResamplingScheme::systematic, ResamplingScheme::multinomial}) {
    const int draws = 500;
    VectorXd means(draws);
    for (int r = 0; r < draws; ++r) {
      double acc = 0.0;
      for (Index a : resample(w, scheme, rng)) {
        acc += x(a);
      }
      means(r) = acc / static_cast<double>(n);
    }
    const double avg = means.mean();
    const double se = std::sqrt((means.array() - avg).square().sum() / (draws - 1) / draws);
    EXPECT_LT(std::abs(avg - target), 3.0 * se + 1e-12);
  }
}

/// Unconditional denoiser with G = 1.
struct Unconditional {
  const DiffusionPrior* prior;
  GaussianMixture reference;
  MatrixXd means;

  Index dim() const { return prior->dim(); }
  int steps() const { return prior->steps(); }
  void sample_initial(MatrixXd& out, std::uint64_t seed) const { out = gm_sample(reference, out.cols(), seed); }
  void initial_log_potential(const MatrixXd& x, VectorXd& out) const { out = VectorXd::Zero(x.cols()); }
  void propose(int k, const MatrixXd& prev, MatrixXd& next, std::uint64_t seed) {
    prior->denoise_means(k, prev, means);
    next.resize(prev.rows(), prev.cols());
    for (Index j = 0; j < prev.cols(); ++j) {
      Stream rng(seed, static_cast<std::uint64_t>(j));
      rng.fill_normal(next.col(j));
    }
    next = means + std::sqrt(prior->step_variance(k)) * next;
  }
  void log_potential(int, const MatrixXd& next, const MatrixXd&, VectorXd& out) const {
    out = VectorXd::Zero(next.cols());
  }
};

TEST(RunSmc, UnitPotentialsNeverResample) {
  const auto inst = generate_instance(3, 1, 3, 7);
  const DiffusionPrior prior(inst.prior, DiffusionSchedule::uniform(20));
  Unconditional model{&prior, prior.reference(), {}};
  const Index n = 20000;
  const auto cloud = run_smc(model, n, {}, 8);
  EXPECT_TRUE(cloud.resampled_at.empty());
  ASSERT_EQ(cloud.ess_trace.size(), 21u);
  for (double e : cloud.ess_trace) {
    EXPECT_NEAR(e, static_cast<double>(n), 1e-6);
  }
  EXPECT_NEAR(cloud.log_normalizer_estimate, 0.0, 1e-10);

  // same path law as the direct sampler
  const MatrixXd direct = sample_unconditional(prior, n, 9);
  for (Index i = 0; i < 3; ++i) {
    const VectorXd a = cloud.positions.row(i).transpose();
    const VectorXd b = direct.row(i).transpose();
    const double se = std::sqrt(((a.array() - a.mean()).square().sum() + (b.array() - b.mean()).square().sum()) /
                                (static_cast<double>(n) * static_cast<double>(n - 1)));
    EXPECT_LT(std::abs(a.mean() - b.mean()), 3.0 * se);
  }
}

TEST(RunSmc, KalmanEvidence) {
  const auto model = testing::LinearGaussianSsm::simulate(50, 10);
  const double exact = model.kalman_log_evidence();
  double mean_ratio = 0.0;
  const int runs = 200;
  for (int r = 0; r < runs; ++r) {
    auto m = model;
    const auto cloud = run_smc(m, 1024, {}, derive_seed(11, static_cast<std::uint64_t>(r)));
    mean_ratio += std::exp(cloud.log_normalizer_estimate - exact);
  }
  mean_ratio /= runs;
  EXPECT_LT(std::abs(mean_ratio - 1.0), 0.05);
}

TEST(RunSmc, ResamplesExactlyBelowThreshold) {
  auto model = testing::LinearGaussianSsm::simulate(30, 12);
  model.r = 0.05;  // sharp likelihood forces resampling
  for (auto scheme : {ResamplingScheme::stratified, ResamplingScheme::systematic, ResamplingScheme::multinomial}) {
    const ResamplingPolicy policy{scheme, 0.7};
    const Index n = 500;
    const auto cloud = run_smc(model, n, policy, 13);
    ASSERT_EQ(cloud.ess_trace.size(), 31u);
    EXPECT_FALSE(cloud.resampled_at.empty());
    std::size_t next = 0;
    for (int k = 1; k <= 30; ++k) {
      const bool below = cloud.ess_trace[static_cast<std::size_t>(k - 1)] < 0.7 * n;
      const bool resampled = next < cloud.resampled_at.size() && cloud.resampled_at[next] == k;
      EXPECT_EQ(below, resampled) << "step " << k;
      if (resampled) {
        ++next;
      }
    }
    for (double e : cloud.ess_trace) {
      EXPECT_GE(e, 1.0);
      EXPECT_LE(e, static_cast<double>(n));
    }
    EXPECT_NEAR(cloud.normalized_weights.sum(), 1.0, 1e-10);
    EXPECT_NEAR(ess(cloud.normalized_weights), cloud.ess, 1e-9);
  }
}

TEST(RunSmc, BitwiseReproducible) {
  auto model = testing::LinearGaussianSsm::simulate(20, 14);
  const auto a = run_smc(model, 300, {}, 15);
  const auto b = run_smc(model, 300, {}, 15);
  EXPECT_EQ(a.positions, b.positions);
  EXPECT_EQ(a.normalized_weights, b.normalized_weights);
  EXPECT_EQ(a.ess_trace, b.ess_trace);
  EXPECT_EQ(a.log_normalizer_estimate, b.log_normalizer_estimate);
  const auto c = run_smc(model, 300, {}, 16);
  EXPECT_NE(a.positions, c.positions);
}

struct Vanishing {
  Index dim() const { return 1; }
  int steps() const { return 3; }
  void sample_initial(MatrixXd& out, std::uint64_t) const { out.setZero(); }
  void initial_log_potential(const MatrixXd& x, VectorXd& out) const { out = VectorXd::Zero(x.cols()); }
  void propose(int, const MatrixXd& prev, MatrixXd& next, std::uint64_t) const { next = prev; }
  void log_potential(int k, const MatrixXd& next, const MatrixXd&, VectorXd& out) const {
    out = VectorXd::Constant(next.cols(), k == 2 ? -kInf : 0.0);
  }
};

TEST(RunSmc, DegeneracyNamesTheStep) {
  Vanishing model;
  try {
    run_smc(model, 4, {}, 0);
    FAIL() << "expected DegeneracyError";
  } catch (const DegeneracyError& e) {
    EXPECT_EQ(e.step(), 2);
  }
}

TEST(RunSmc, RejectsBadArguments) {
  Vanishing model;
  EXPECT_THROW(run_smc(model, 1, {}, 0), Error);
  EXPECT_THROW(run_smc(model, 4, {ResamplingScheme::stratified, 0.0}, 0), Error);
  EXPECT_THROW(run_smc(model, 4, {ResamplingScheme::stratified, 1.5}, 0), Error);
}

}  // namespace
}  // namespace gfk
