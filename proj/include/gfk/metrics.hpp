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

#ifndef GFK_METRICS_HPP
#define GFK_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "gfk/linalg.hpp"
#include "gfk/rng.hpp"
#include "gfk/smc.hpp"

namespace gfk {

struct SwdConfig {
  Index n_projections = 1000;
  std::uint64_t seed = 0;
};

/// Exact W1 between two empirical measures given sorted atoms.
inline double wasserstein1_sorted(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<std::int64_t>(a.size());
  const auto m = static_cast<std::int64_t>(b.size());
  if (n == m) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      acc += std::abs(a[i] - b[i]);
    }
    return acc / static_cast<double>(n);
  }
  // merged quantile grid; breakpoints i/n and j/m compared as (i*m, j*n)
  double acc = 0.0;
  std::int64_t i = 0;
  std::int64_t j = 0;
  std::int64_t position = 0;  // current quantile times n*m
  while (i < n && j < m) {
    const std::int64_t next_a = (i + 1) * m;
    const std::int64_t next_b = (j + 1) * n;
    const std::int64_t next = std::min(next_a, next_b);
    acc += static_cast<double>(next - position) * std::abs(a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(j)]);
    position = next;
    if (next_a == next) {
      ++i;
    }
    if (next_b == next) {
      ++j;
    }
  }
  return acc / static_cast<double>(n * m);
}

/// Unit directions (columns), normalized Gaussian draws.
inline MatrixXd random_directions(Index dim, Index count, std::uint64_t seed) {
  MatrixXd dirs(dim, count);
  for (Index p = 0; p < count; ++p) {
    Stream rng(seed, hash_tag("swd-direction"), static_cast<std::uint64_t>(p));
    auto col = dirs.col(p);
    do {
      rng.fill_normal(col);
    } while (col.squaredNorm() == 0.0);
    col.normalize();
  }
  return dirs;
}

/**
 * \brief Sliced 1-Wasserstein distance between sample sets stored as columns.
 * Both sets are projected on the same directions.
 */
inline double sliced_wasserstein(const Eigen::Ref<const MatrixXd>& x, const Eigen::Ref<const MatrixXd>& y,
                                 const SwdConfig& config = {}) {
  if (x.rows() != y.rows()) {
    throw Error("sliced_wasserstein: dimension mismatch");
  }
  if (x.cols() < 1 || y.cols() < 1 || config.n_projections < 1) {
    throw Error("sliced_wasserstein: need at least one sample per set and one projection");
  }
  const MatrixXd dirs = random_directions(x.rows(), config.n_projections, config.seed);
  constexpr Index kBlock = 32;
  std::vector<double> a(static_cast<std::size_t>(x.cols()));
  std::vector<double> b(static_cast<std::size_t>(y.cols()));
  double total = 0.0;
  for (Index start = 0; start < config.n_projections; start += kBlock) {
    const Index width = std::min(kBlock, config.n_projections - start);
    const MatrixXd px = dirs.middleCols(start, width).transpose() * x;
    const MatrixXd py = dirs.middleCols(start, width).transpose() * y;
    for (Index p = 0; p < width; ++p) {
      for (Index i = 0; i < x.cols(); ++i) {
        a[static_cast<std::size_t>(i)] = px(p, i);
      }
      for (Index i = 0; i < y.cols(); ++i) {
        b[static_cast<std::size_t>(i)] = py(p, i);
      }
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      total += wasserstein1_sorted(a, b);
    }
  }
  return total / static_cast<double>(config.n_projections);
}

/// Multinomial draw of n particles proportional to the cloud weights.
inline MatrixXd weighted_to_equal(const MatrixXd& positions, const Eigen::Ref<const VectorXd>& weights, Index n,
                                  std::uint64_t seed) {
  if (weights.size() != positions.cols()) {
    throw Error("weighted_to_equal: weight count does not match particle count");
  }
  if (!(weights.sum() > 0.0) || (weights.array() < 0.0).any()) {
    throw Error("weighted_to_equal: weights are degenerate");
  }
  std::discrete_distribution<Index> pick(weights.data(), weights.data() + weights.size());
  Stream rng(seed, hash_tag("weighted-to-equal"));
  MatrixXd out(positions.rows(), n);
  for (Index j = 0; j < n; ++j) {
    out.col(j) = positions.col(pick(rng));
  }
  return out;
}

inline MatrixXd weighted_to_equal(const ParticleCloud& cloud, Index n, std::uint64_t seed) {
  return weighted_to_equal(cloud.positions, cloud.normalized_weights, n, seed);
}

struct HistogramSpec {
  std::pair<Index, Index> dims{0, 1};
  std::pair<Index, Index> bins{50, 50};
  std::pair<double, double> x_range{-10.0, 10.0};
  std::pair<double, double> y_range{-10.0, 10.0};
};

/// 2D counts over columns of `samples`; out-of-range samples are dropped and
/// the upper edge belongs to the last bin.
inline Eigen::MatrixXi marginal_histogram(const Eigen::Ref<const MatrixXd>& samples, const HistogramSpec& spec) {
  const auto [dx, dy] = spec.dims;
  if (dx < 0 || dy < 0 || dx >= samples.rows() || dy >= samples.rows()) {
    throw Error("marginal_histogram: dimension index out of range");
  }
  const auto [bx, by] = spec.bins;
  if (bx < 1 || by < 1 || !(spec.x_range.second > spec.x_range.first) ||
      !(spec.y_range.second > spec.y_range.first)) {
    throw Error("marginal_histogram: invalid bins or range");
  }
  auto bin_of = [](double v, std::pair<double, double> range, Index bins) -> Index {
    if (!(v >= range.first && v <= range.second)) {
      return -1;
    }
    const auto idx = static_cast<Index>(std::floor((v - range.first) / (range.second - range.first) *
                                                   static_cast<double>(bins)));
    return std::min(idx, bins - 1);
  };
  Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(bx, by);
  for (Index j = 0; j < samples.cols(); ++j) {
    const Index ix = bin_of(samples(dx, j), spec.x_range, bx);
    const Index iy = bin_of(samples(dy, j), spec.y_range, by);
    if (ix >= 0 && iy >= 0) {
      ++counts(ix, iy);
    }
  }
  return counts;
}

}  // namespace gfk

#endif  // GFK_METRICS_HPP
