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


// Small fixtures shared by the unit tests.

#ifndef GFK_TESTS_TEST_SUPPORT_HPP
#define GFK_TESTS_TEST_SUPPORT_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

#include "gfk/gfk.hpp"

namespace gfk::testing {

inline VectorXd random_vector(Stream& rng, Index n, double scale = 1.0) {
  VectorXd v(n);
  rng.fill_normal(v);
  return scale * v;
}

inline MatrixXd random_spd(Stream& rng, Index n, double jitter = 0.5) {
  MatrixXd a(n, n);
  rng.fill_normal(a);
  MatrixXd m = a * a.transpose() / static_cast<double>(n);
  m.diagonal().array() += jitter;
  return symmetrized(m);
}

/// Mixture with random means in [-spread, spread] and random full covariances.
inline GaussianMixture random_mixture(Stream& rng, Index d, Index k, double spread = 3.0) {
  VectorXd weights(k);
  std::vector<VectorXd> means;
  std::vector<MatrixXd> covs;
  for (Index i = 0; i < k; ++i) {
    weights(i) = 0.2 + rng.uniform();
    VectorXd m(d);
    for (Index j = 0; j < d; ++j) {
      m(j) = spread * (2.0 * rng.uniform() - 1.0);
    }
    means.push_back(m);
    covs.push_back(random_spd(rng, d));
  }
  return {weights / weights.sum(), means, covs};
}

/// Central-difference gradient of a scalar function.
inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double h = 1e-5) {
  VectorXd g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    VectorXd xp = x;
    VectorXd xm = x;
    xp(i) += h;
    xm(i) -= h;
    g(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline double rel_err(const VectorXd& a, const VectorXd& b) {
  return (a - b).norm() / std::max(1e-300, std::max(a.norm(), b.norm()));
}

/// Trapezoid rule on a uniform grid.
inline double trapezoid(const std::function<double(double)>& f, double lo, double hi, int n) {
  const double h = (hi - lo) / n;
  double acc = 0.5 * (f(lo) + f(hi));
  for (int i = 1; i < n; ++i) {
    acc += f(lo + h * i);
  }
  return acc * h;
}

inline GaussianMixture standard_normal(Index d) {
  return {VectorXd::Ones(1), {VectorXd::Zero(d)}, {MatrixXd::Identity(d, d)}};
}


/// 1D linear-Gaussian state-space model x_k = phi x_{k-1} + N(0, q),
/// y_k = x_k + N(0, r), as a bootstrap Feynman-Kac model.
struct LinearGaussianSsm {
  double phi = 0.9;
  double q = 0.5;
  double r = 0.8;
  double p0 = 1.0;
  std::vector<double> y;  // y_0 .. y_N

  Index dim() const { return 1; }
  int steps() const { return static_cast<int>(y.size()) - 1; }

  static LinearGaussianSsm simulate(int steps, std::uint64_t seed) {
    LinearGaussianSsm m;
    Stream rng(seed);
    double x = std::sqrt(m.p0) * rng.normal();
    for (int k = 0; k <= steps; ++k) {
      if (k > 0) {
        x = m.phi * x + std::sqrt(m.q) * rng.normal();
      }
      m.y.push_back(x + std::sqrt(m.r) * rng.normal());
    }
    return m;
  }

  double log_obs(int k, double x) const {
    const double e = y[static_cast<std::size_t>(k)] - x;
    return -0.5 * (kLog2Pi + std::log(r) + e * e / r);
  }

  void sample_initial(MatrixXd& out, std::uint64_t seed) const {
    for (Index j = 0; j < out.cols(); ++j) {
      Stream rng(seed, static_cast<std::uint64_t>(j));
      out(0, j) = std::sqrt(p0) * rng.normal();
    }
  }
  void initial_log_potential(const MatrixXd& x, VectorXd& out) const {
    out.resize(x.cols());
    for (Index j = 0; j < x.cols(); ++j) {
      out(j) = log_obs(0, x(0, j));
    }
  }
  void propose(int /*k*/, const MatrixXd& prev, MatrixXd& next, std::uint64_t seed) const {
    next.resize(1, prev.cols());
    for (Index j = 0; j < prev.cols(); ++j) {
      Stream rng(seed, static_cast<std::uint64_t>(j));
      next(0, j) = phi * prev(0, j) + std::sqrt(q) * rng.normal();
    }
  }
  void log_potential(int k, const MatrixXd& next, const MatrixXd& /*prev*/, VectorXd& out) const {
    out.resize(next.cols());
    for (Index j = 0; j < next.cols(); ++j) {
      out(j) = log_obs(k, next(0, j));
    }
  }

  /// Kalman-filter log p(y_0, ..., y_N).
  double kalman_log_evidence() const {
    double mean = 0.0;
    double var = p0;
    double total = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (k > 0) {
        mean = phi * mean;
        var = phi * phi * var + q;
      }
      const double s = var + r;
      const double e = y[k] - mean;
      total += -0.5 * (kLog2Pi + std::log(s) + e * e / s);
      const double gain = var / s;
      mean += gain * e;
      var *= 1.0 - gain;
    }
    return total;
  }
};


/// Scalar zeroth-order twist by tensor-grid quadrature (d = c = 1): the
/// operator psi -> int N(y_k; A y_{k-1}, Sigma) psi(y_{k-1}, x_{k-1})
/// N(x_{k-1}; x_k, C_k) applied once and twice to f(y | x) = N(y; h x + b, r).
/// Each integral is a trapezoid sum on a uniform grid, applied axis by axis.
struct ScalarTwistQuadrature {
  double h = 0.8;
  double b = 0.3;
  double r = 0.5;
  std::vector<double> a;      // A_0, A_1
  std::vector<double> sigma;  // Sigma_0, Sigma_1
  std::vector<double> c;      // C_1, C_2
  double half_width = 25.0;
  int points = 1001;

  static double normal(double x, double mean, double var) {
    return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
  }

  VectorXd grid(double center) const {
    return VectorXd::LinSpaced(points, center - half_width, center + half_width);
  }

  static VectorXd trapezoid_weights(const VectorXd& g) {
    const double step = g(1) - g(0);
    VectorXd w = VectorXd::Constant(g.size(), step);
    w(0) *= 0.5;
    w(g.size() - 1) *= 0.5;
    return w;
  }

  /// Kernel matrix K(i, j) = N(row_i; scale * col_j, var), times column weights.
  static MatrixXd kernel(const VectorXd& rows, const VectorXd& cols, double scale, double var) {
    MatrixXd k(rows.size(), cols.size());
    const VectorXd w = trapezoid_weights(cols);
    for (Index j = 0; j < cols.size(); ++j) {
      for (Index i = 0; i < rows.size(); ++i) {
        k(i, j) = normal(rows(i), scale * cols(j), var) * w(j);
      }
    }
    return k;
  }

  /// log of the once-applied operator at (y1, x1).
  double log_once(double y1, double x1) const {
    const VectorXd x0 = grid(x1);
    const VectorXd y0 = grid(0.0);
    const VectorXd wx = trapezoid_weights(x0);
    const VectorXd wy = trapezoid_weights(y0);
    double acc = 0.0;
    for (Index i = 0; i < y0.size(); ++i) {
      double inner = 0.0;
      for (Index j = 0; j < x0.size(); ++j) {
        inner += wx(j) * normal(y0(i), h * x0(j) + b, r) * normal(x0(j), x1, c[0]);
      }
      acc += wy(i) * normal(y1, a[0] * y0(i), sigma[0]) * inner;
    }
    return std::log(acc);
  }

  /// log of the twice-applied operator at (y2, x2), a 4D tensor grid
  /// (y0, x0, y1, x1) contracted one axis at a time.
  double log_twice(double y2, double x2) const {
    const VectorXd xs = grid(x2);  // shared grid for x0 and x1
    const VectorXd ys = grid(0.0);  // shared grid for y0 and y1
    // f(y0 | x0) as a Y x X matrix
    MatrixXd f(ys.size(), xs.size());
    for (Index j = 0; j < xs.size(); ++j) {
      for (Index i = 0; i < ys.size(); ++i) {
        f(i, j) = normal(ys(i), h * xs(j) + b, r);
      }
    }
    // integrate x0: g(y0, x1) = sum_x0 f(y0, x0) N(x0; x1, C1) w
    const VectorXd w0 = trapezoid_weights(xs);
    MatrixXd kx1(xs.size(), xs.size());  // (x0, x1)
    for (Index j = 0; j < xs.size(); ++j) {
      for (Index i = 0; i < xs.size(); ++i) {
        kx1(i, j) = normal(xs(i), xs(j), c[0]) * w0(i);
      }
    }
    const MatrixXd g = f * kx1;
    // integrate y0: p1(y1, x1) = sum_y0 N(y1; A0 y0, S0) w g(y0, x1)
    const MatrixXd p1 = kernel(ys, ys, a[0], sigma[0]) * g;
    // integrate y1 and x1 at the single point (y2, x2)
    const VectorXd wy = trapezoid_weights(ys);
    const VectorXd wx = trapezoid_weights(xs);
    VectorXd ky(ys.size());
    VectorXd kx(xs.size());
    for (Index i = 0; i < ys.size(); ++i) {
      ky(i) = normal(y2, a[1] * ys(i), sigma[1]) * wy(i);
    }
    for (Index j = 0; j < xs.size(); ++j) {
      kx(j) = normal(xs(j), x2, c[1]) * wx(j);
    }
    return std::log(ky.dot(p1 * kx));
  }
};


/// Random bridge coefficients: A_i with spectral norm below one, SPD
/// Sigma_i, and C_k either random scalars or random dense SPD matrices.
inline BridgeProcess random_bridge(Stream& rng, Index c, Index d, int steps, bool dense_c) {
  BridgeProcess p;
  for (int i = 0; i < steps; ++i) {
    MatrixXd a(c, c);
    rng.fill_normal(a);
    a = 0.9 * a / std::max(1.0, a.norm());
    a.diagonal().array() += 0.1;
    p.transition.push_back(a);
    p.transition_cov.push_back(0.1 * random_spd(rng, c, 0.1));
    if (dense_c) {
      p.denoise_cov.push_back(StepCovariance::full(0.05 * random_spd(rng, d, 0.2)));
    } else {
      p.denoise_cov.push_back(StepCovariance::isotropic(0.01 + 0.05 * rng.uniform()));
    }
  }
  return p;
}

inline LinearGaussianObservation random_observation(Stream& rng, Index c, Index d) {
  MatrixXd h(c, d);
  rng.fill_normal(h);
  return {h / std::sqrt(static_cast<double>(d)), random_vector(rng, c), random_spd(rng, c, 0.3)};
}

inline double max_abs_diff(const TwistCoefficients& x, const TwistCoefficients& y) {
  double worst = 0.0;
  for (std::size_t n = 0; n < x.F.size(); ++n) {
    worst = std::max(worst, (x.F[n] - y.F[n]).cwiseAbs().maxCoeff());
    worst = std::max(worst, (x.z[n] - y.z[n]).cwiseAbs().maxCoeff());
    worst = std::max(worst, (x.omega[n] - y.omega[n]).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace gfk::testing

#endif  // GFK_TESTS_TEST_SUPPORT_HPP
