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

#ifndef GFK_LINALG_HPP
#define GFK_LINALG_HPP

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace gfk {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)

inline double log_sum_exp(const Eigen::Ref<const VectorXd>& values) {
  const double top = values.maxCoeff();
  if (!std::isfinite(top)) {
    return top;
  }
  return top + std::log((values.array() - top).exp().sum());
}

inline bool all_finite(const Eigen::Ref<const MatrixXd>& m) { return m.allFinite(); }

inline MatrixXd symmetrized(const Eigen::Ref<const MatrixXd>& m) { return 0.5 * (m + m.transpose()); }

/// Cholesky factor of an SPD matrix with log-determinant. Throws on failure.
class SpdFactor {
 public:
  SpdFactor() = default;

  explicit SpdFactor(const Eigen::Ref<const MatrixXd>& m, const char* what = "matrix") : llt_{m} {
    if (llt_.info() != Eigen::Success) {
      throw Error(std::string(what) + " is not numerically positive definite");
    }
    const auto diag = llt_.matrixLLT().diagonal();
    if ((diag.array() <= 0.0).any() || !diag.allFinite()) {
      throw Error(std::string(what) + " is not numerically positive definite");
    }
    log_det_ = 2.0 * diag.array().log().sum();
  }

  Index size() const { return llt_.rows(); }
  double log_det() const { return log_det_; }

  template <typename Rhs>
  MatrixXd solve(const Eigen::MatrixBase<Rhs>& rhs) const {
    return llt_.solve(rhs);
  }

  /// Returns r^T M^{-1} r.
  double quad(const Eigen::Ref<const VectorXd>& r) const {
    return llt_.matrixL().solve(r).squaredNorm();
  }

  /// log N(r; 0, M) for the residual r.
  double log_density(const Eigen::Ref<const VectorXd>& r) const {
    return -0.5 * (static_cast<double>(r.size()) * kLog2Pi + log_det_ + quad(r));
  }

  /// log N(r_j; 0, M) for every column r_j.
  VectorXd log_densities(const Eigen::Ref<const MatrixXd>& residuals) const {
    const MatrixXd white = llt_.matrixL().solve(residuals);
    return (-0.5 * (static_cast<double>(residuals.rows()) * kLog2Pi + log_det_) -
            0.5 * white.colwise().squaredNorm().array())
        .transpose();
  }

  /// Lower Cholesky factor L with M = L L^T.
  MatrixXd lower() const { return llt_.matrixL(); }

 private:
  Eigen::LLT<MatrixXd> llt_;
  double log_det_ = 0.0;
};

/// log N(y; mean, cov).
inline double gaussian_logpdf(const Eigen::Ref<const VectorXd>& y, const Eigen::Ref<const VectorXd>& mean,
                              const Eigen::Ref<const MatrixXd>& cov) {
  return SpdFactor(cov, "covariance").log_density(y - mean);
}

}  // namespace gfk

#endif  // GFK_LINALG_HPP
