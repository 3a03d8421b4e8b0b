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

#ifndef GFK_GAUSSIAN_MIXTURE_HPP
#define GFK_GAUSSIAN_MIXTURE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gfk/linalg.hpp"
#include "gfk/rng.hpp"

/**
 * \file
 * \brief Gaussian mixtures, linear-Gaussian observations and the conjugate
 * posterior used as ground truth.
 */

namespace gfk {

/**
 * \brief Covariance stored as an isotropic bulk plus a few eigen-directions.
 *
 * Represents `bulk * I + sum_j (values[j] - bulk) e_j e_j^T` where the columns
 * e_j of `vectors` are orthonormal. Built from a full eigendecomposition by
 * collapsing the largest cluster of equal eigenvalues into the bulk, so that a
 * covariance of the form `l l^T + I` costs O(d) to apply instead of O(d^2).
 */
struct SpikedCovariance {
  double bulk = 1.0;
  MatrixXd vectors;  // d x r
  VectorXd values;   // r

  Index dim() const { return vectors.rows(); }
  Index rank() const { return vectors.cols(); }

  double log_det() const {
    return static_cast<double>(dim() - rank()) * std::log(bulk) + values.array().log().sum();
  }

  VectorXd apply(const Eigen::Ref<const VectorXd>& v) const {
    return bulk * v + vectors * ((values.array() - bulk).matrix().asDiagonal() * (vectors.transpose() * v));
  }

  VectorXd apply_inverse(const Eigen::Ref<const VectorXd>& v) const {
    return v / bulk + vectors * ((values.array().inverse() - 1.0 / bulk).matrix().asDiagonal() *
                                 (vectors.transpose() * v));
  }

  /// Maps a standard normal vector to N(0, this).
  VectorXd apply_sqrt(const Eigen::Ref<const VectorXd>& v) const {
    const double root = std::sqrt(bulk);
    return root * v + vectors * ((values.array().sqrt() - root).matrix().asDiagonal() * (vectors.transpose() * v));
  }

  MatrixXd dense() const {
    MatrixXd out = bulk * MatrixXd::Identity(dim(), dim());
    out.noalias() += vectors * (values.array() - bulk).matrix().asDiagonal() * vectors.transpose();
    return out;
  }

  /// Applies `f` to every eigenvalue, eigenvectors unchanged.
  SpikedCovariance mapped(const std::function<double(double)>& f) const {
    return SpikedCovariance{f(bulk), vectors, values.unaryExpr(f)};
  }

  /// Groups equal eigenvalues (relative tolerance) into the bulk.
  static SpikedCovariance from_eigen(const Eigen::Ref<const MatrixXd>& eigenvectors,
                                     const Eigen::Ref<const VectorXd>& eigenvalues) {
    const Index d = eigenvalues.size();
    std::vector<Index> order(static_cast<std::size_t>(d));
    for (Index i = 0; i < d; ++i) {
      order[static_cast<std::size_t>(i)] = i;
    }
    std::sort(order.begin(), order.end(), [&](Index a, Index b) { return eigenvalues(a) < eigenvalues(b); });
    const double tol = 1e-10 * std::max(1.0, eigenvalues.cwiseAbs().maxCoeff());

    // longest run of sorted eigenvalues within tol of the run start
    Index best_begin = 0;
    Index best_len = d > 0 ? 1 : 0;
    for (Index begin = 0, end = 0; begin < d; ++begin) {
      end = std::max(end, begin);
      while (end + 1 < d && eigenvalues(order[static_cast<std::size_t>(end + 1)]) -
                                    eigenvalues(order[static_cast<std::size_t>(begin)]) <=
                                tol) {
        ++end;
      }
      if (end - begin + 1 > best_len) {
        best_len = end - begin + 1;
        best_begin = begin;
      }
    }

    SpikedCovariance out;
    double bulk_sum = 0.0;
    for (Index i = best_begin; i < best_begin + best_len; ++i) {
      bulk_sum += eigenvalues(order[static_cast<std::size_t>(i)]);
    }
    out.bulk = best_len > 0 ? bulk_sum / static_cast<double>(best_len) : 1.0;
    out.vectors.resize(d, d - best_len);
    out.values.resize(d - best_len);
    Index col = 0;
    for (Index i = 0; i < d; ++i) {
      if (i >= best_begin && i < best_begin + best_len) {
        continue;
      }
      const Index src = order[static_cast<std::size_t>(i)];
      out.vectors.col(col) = eigenvectors.col(src);
      out.values(col) = eigenvalues(src);
      ++col;
    }
    return out;
  }
};

/**
 * \brief Weighted collection of full-covariance Gaussian components.
 *
 * Each component keeps its eigendecomposition (E_i, theta_i); the covariance
 * is reconstructed as E_i diag(theta_i) E_i^T on demand.
 */
class GaussianMixture {
 public:
  GaussianMixture() = default;

  /// Builds a mixture from covariances, computing their eigendecompositions.
  GaussianMixture(VectorXd weights, std::vector<VectorXd> means, const std::vector<MatrixXd>& covariances)
      : weights_{std::move(weights)}, means_{std::move(means)} {
    if (covariances.size() != means_.size()) {
      throw Error("GaussianMixture: means and covariances differ in count");
    }
    for (const auto& cov : covariances) {
      if (cov.rows() != cov.cols()) {
        throw Error("GaussianMixture: covariance is not square");
      }
      Eigen::SelfAdjointEigenSolver<MatrixXd> solver(symmetrized(cov));
      if (solver.info() != Eigen::Success) {
        throw Error("GaussianMixture: eigendecomposition failed");
      }
      eigenvectors_.push_back(solver.eigenvectors());
      eigenvalues_.push_back(solver.eigenvalues());
    }
    finish();
  }

  /// Builds a mixture from cached eigenpairs (no decomposition).
  static GaussianMixture from_eigenpairs(VectorXd weights, std::vector<VectorXd> means,
                                         std::vector<MatrixXd> eigenvectors, std::vector<VectorXd> eigenvalues) {
    GaussianMixture gm;
    gm.weights_ = std::move(weights);
    gm.means_ = std::move(means);
    gm.eigenvectors_ = std::move(eigenvectors);
    gm.eigenvalues_ = std::move(eigenvalues);
    if (gm.eigenvectors_.size() != gm.means_.size() || gm.eigenvalues_.size() != gm.means_.size()) {
      throw Error("GaussianMixture: eigenpairs and means differ in count");
    }
    gm.finish();
    return gm;
  }

  Index size() const { return weights_.size(); }
  Index dim() const { return means_.empty() ? 0 : means_.front().size(); }

  const VectorXd& weights() const { return weights_; }
  double weight(Index i) const { return weights_(i); }
  const VectorXd& mean(Index i) const { return means_[static_cast<std::size_t>(i)]; }
  const std::vector<VectorXd>& means() const { return means_; }
  const MatrixXd& eigenvectors(Index i) const { return eigenvectors_[static_cast<std::size_t>(i)]; }
  const VectorXd& eigenvalues(Index i) const { return eigenvalues_[static_cast<std::size_t>(i)]; }
  const SpikedCovariance& spiked(Index i) const { return spiked_[static_cast<std::size_t>(i)]; }

  MatrixXd covariance(Index i) const {
    return eigenvectors(i) * eigenvalues(i).asDiagonal() * eigenvectors(i).transpose();
  }

  VectorXd mixture_mean() const {
    VectorXd out = VectorXd::Zero(dim());
    for (Index i = 0; i < size(); ++i) {
      out += weight(i) * mean(i);
    }
    return out;
  }

  /**
   * \brief Mixture with means scaled by `mean_scale` and every eigenvalue
   * passed through `eigen_map`. Eigenvectors and weights are kept.
   */
  GaussianMixture transformed(double mean_scale, const std::function<double(double)>& eigen_map) const {
    GaussianMixture out = *this;
    for (std::size_t i = 0; i < means_.size(); ++i) {
      out.means_[i] = mean_scale * means_[i];
      out.eigenvalues_[i] = eigenvalues_[i].unaryExpr(eigen_map);
      out.spiked_[i] = spiked_[i].mapped(eigen_map);
    }
    out.validate();
    return out;
  }

 private:
  void finish() {
    validate();
    const double total = weights_.sum();
    weights_ /= total;
    spiked_.clear();
    for (std::size_t i = 0; i < means_.size(); ++i) {
      spiked_.push_back(SpikedCovariance::from_eigen(eigenvectors_[i], eigenvalues_[i]));
    }
  }

  void validate() const {
    if (weights_.size() == 0 || static_cast<std::size_t>(weights_.size()) != means_.size()) {
      throw Error("GaussianMixture: weights and means differ in count");
    }
    if ((weights_.array() < 0.0).any() || !weights_.allFinite()) {
      throw Error("GaussianMixture: weights must be finite and nonnegative");
    }
    if (std::abs(weights_.sum() - 1.0) > 1e-9) {
      throw Error("GaussianMixture: weights must sum to one");
    }
    const Index d = means_.front().size();
    for (std::size_t i = 0; i < means_.size(); ++i) {
      if (means_[i].size() != d || eigenvalues_[i].size() != d || eigenvectors_[i].rows() != d ||
          eigenvectors_[i].cols() != d) {
        throw Error("GaussianMixture: inconsistent component dimension");
      }
      if (!(eigenvalues_[i].array() > 0.0).all()) {
        throw Error("GaussianMixture: covariance eigenvalues must be strictly positive");
      }
    }
  }

  VectorXd weights_;
  std::vector<VectorXd> means_;
  std::vector<MatrixXd> eigenvectors_;
  std::vector<VectorXd> eigenvalues_;
  std::vector<SpikedCovariance> spiked_;
};

/**
 * \brief Log-density, score and Hessian-vector products of a mixture,
 * evaluated through the spiked covariance view. Points are processed in
 * column batches as products with the stacked means and spike vectors; the
 * single-point API is a batch of width one.
 */
class MixtureDensity {
 public:
  MixtureDensity() = default;

  explicit MixtureDensity(const GaussianMixture& gm) : dim_{gm.dim()} {
    const Index k = gm.size();
    log_norm_.resize(k);
    inv_bulk_.resize(k);
    means_.resize(dim_, k);
    mean_norm2_.resize(k);
    Index total = 0;
    for (Index i = 0; i < k; ++i) {
      total += gm.spiked(i).rank();
    }
    vectors_.resize(dim_, total);
    spike_coef_.resize(total);
    vectors_dot_mean_.resize(total);
    owner_.resize(total);
    Index col = 0;
    for (Index i = 0; i < k; ++i) {
      const SpikedCovariance& cov = gm.spiked(i);
      means_.col(i) = gm.mean(i);
      mean_norm2_(i) = gm.mean(i).squaredNorm();
      inv_bulk_(i) = 1.0 / cov.bulk;
      const Index r = cov.rank();
      vectors_.middleCols(col, r) = cov.vectors;
      spike_coef_.segment(col, r) = cov.values.array().inverse() - inv_bulk_(i);
      vectors_dot_mean_.segment(col, r) = cov.vectors.transpose() * gm.mean(i);
      owner_.segment(col, r).setConstant(i);
      col += r;
      log_norm_(i) = std::log(gm.weight(i)) - 0.5 * (static_cast<double>(dim_) * kLog2Pi + cov.log_det());
    }
  }

  Index dim() const { return dim_; }
  Index size() const { return log_norm_.size(); }

  /// Per-column results of evaluate(), kept for Hessian-vector products.
  struct Batch {
    VectorXd log_density;
    MatrixXd score;  // d x B
    MatrixXd resp;   // K x B responsibilities
    MatrixXd x;      // d x B
    MatrixXd proj;   // spike coordinates of x - m_i, stacked over components

    Index size() const { return score.cols(); }
  };

  void evaluate(const Eigen::Ref<const MatrixXd>& x, Batch& out) const {
    if (x.rows() != dim_) {
      throw Error("MixtureDensity: dimension mismatch");
    }
    if (!x.allFinite()) {
      throw Error("MixtureDensity: non-finite input");
    }
    const Index n = x.cols();
    out.x = x;
    out.proj.noalias() = vectors_.transpose() * x;
    out.proj.colwise() -= vectors_dot_mean_;
    const MatrixXd mx = means_.transpose() * x;
    const Eigen::RowVectorXd xx = x.colwise().squaredNorm();

    // log c_i = log_norm_i - (bulk part + spike part) / 2
    MatrixXd& logc = out.resp;
    logc.resize(size(), n);
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < size(); ++i) {
        const double dist2 = std::max(0.0, xx(j) - 2.0 * mx(i, j) + mean_norm2_(i));
        logc(i, j) = log_norm_(i) - 0.5 * inv_bulk_(i) * dist2;
      }
      for (Index r = 0; r < spike_coef_.size(); ++r) {
        logc(owner_(r), j) -= 0.5 * spike_coef_(r) * out.proj(r, j) * out.proj(r, j);
      }
    }
    out.log_density.resize(n);
    for (Index j = 0; j < n; ++j) {
      out.log_density(j) = log_sum_exp(logc.col(j));
    }
    logc.rowwise() -= out.log_density.transpose();
    // responsibilities below exp(-700) are zeroed to keep products out of
    // subnormal range
    out.resp = (logc.array() < -700.0).select(0.0, logc.array().max(-700.0).exp());

    // s = sum_i w_i g_i with g_i = -inv_bulk_i (x - m_i) - V_i diag(coef) proj_i
    const MatrixXd bulk_weights = inv_bulk_.asDiagonal() * out.resp;
    MatrixXd spike_weights(spike_coef_.size(), n);
    for (Index j = 0; j < n; ++j) {
      for (Index r = 0; r < spike_coef_.size(); ++r) {
        spike_weights(r, j) = spike_coef_(r) * out.proj(r, j) * out.resp(owner_(r), j);
      }
    }
    out.score.noalias() = means_ * bulk_weights;
    out.score -= x * bulk_weights.colwise().sum().asDiagonal();
    out.score.noalias() -= vectors_ * spike_weights;
  }

  /// Column j of the result is (Hessian of log p at x_j) v_j, using
  /// sum_i w_i (-P_i v + g_i g_i^T v) - s s^T v.
  MatrixXd hvp(const Batch& at, const Eigen::Ref<const MatrixXd>& v) const {
    if (v.rows() != dim_ || v.cols() != at.size()) {
      throw Error("MixtureDensity: hvp shape mismatch");
    }
    const Index n = v.cols();
    const MatrixXd vq = vectors_.transpose() * v;
    const MatrixXd mv = means_.transpose() * v;
    const Eigen::RowVectorXd xv = at.x.cwiseProduct(v).colwise().sum();
    const Eigen::RowVectorXd sv = at.score.cwiseProduct(v).colwise().sum();

    // c_i = w_i g_i^T v
    MatrixXd c(size(), n);
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < size(); ++i) {
        c(i, j) = -inv_bulk_(i) * (xv(j) - mv(i, j));
      }
      for (Index r = 0; r < spike_coef_.size(); ++r) {
        c(owner_(r), j) -= spike_coef_(r) * at.proj(r, j) * vq(r, j);
      }
    }
    c = c.cwiseProduct(at.resp);

    MatrixXd spike_weights(spike_coef_.size(), n);
    for (Index j = 0; j < n; ++j) {
      for (Index r = 0; r < spike_coef_.size(); ++r) {
        const Index i = owner_(r);
        spike_weights(r, j) = spike_coef_(r) * (vq(r, j) * at.resp(i, j) + at.proj(r, j) * c(i, j));
      }
    }
    const Eigen::RowVectorXd v_weight = inv_bulk_.transpose() * at.resp;
    const MatrixXd cb = inv_bulk_.asDiagonal() * c;
    MatrixXd out = -(v * v_weight.asDiagonal());
    out -= at.x * cb.colwise().sum().asDiagonal();
    out.noalias() += means_ * cb;
    out.noalias() -= vectors_ * spike_weights;
    out -= at.score * sv.asDiagonal();
    return out;
  }

  /// Scores of every column, evaluated in blocks. Returns log-densities.
  VectorXd scores(const Eigen::Ref<const MatrixXd>& x, MatrixXd& out) const {
    out.resize(x.rows(), x.cols());
    VectorXd logp(x.cols());
    Batch batch;
    for (Index start = 0; start < x.cols(); start += kBlock) {
      const Index width = std::min(kBlock, x.cols() - start);
      evaluate(x.middleCols(start, width), batch);
      out.middleCols(start, width) = batch.score;
      logp.segment(start, width) = batch.log_density;
    }
    return logp;
  }

  /// One point: log-density, score and Hessian-vector products.
  class Point {
   public:
    double log_density = 0.0;
    VectorXd score;

    VectorXd hvp(const Eigen::Ref<const VectorXd>& v) const { return owner_->hvp(batch_, v); }

    /// Mixture responsibilities.
    VectorXd responsibilities() const { return batch_.resp.col(0); }

   private:
    friend class MixtureDensity;
    const MixtureDensity* owner_ = nullptr;
    Batch batch_;
  };

  Point at(const Eigen::Ref<const VectorXd>& x) const {
    Point p;
    p.owner_ = this;
    evaluate(x, p.batch_);
    p.log_density = p.batch_.log_density(0);
    p.score = p.batch_.score.col(0);
    return p;
  }

  double log_density(const Eigen::Ref<const VectorXd>& x) const { return at(x).log_density; }

  /// Writes grad log p(x) into `out` and returns log p(x).
  double score(const Eigen::Ref<const VectorXd>& x, Eigen::Ref<VectorXd> out) const {
    Point p = at(x);
    out = p.score;
    return p.log_density;
  }

  VectorXd score(const Eigen::Ref<const VectorXd>& x) const { return at(x).score; }

  /// Writes the score and (Hessian of log p) * v; returns log p(x).
  double score_hvp(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& v,
                   Eigen::Ref<VectorXd> score_out, Eigen::Ref<VectorXd> hvp_out) const {
    Point p = at(x);
    score_out = p.score;
    hvp_out = p.hvp(v);
    return p.log_density;
  }

  static constexpr Index kBlock = 256;

 private:
  Index dim_ = 0;
  VectorXd log_norm_;
  VectorXd inv_bulk_;
  MatrixXd means_;  // d x K
  VectorXd mean_norm2_;
  MatrixXd vectors_;  // d x (total spike rank)
  VectorXd spike_coef_;
  VectorXd vectors_dot_mean_;
  Eigen::Matrix<Index, Eigen::Dynamic, 1> owner_;  // component of each spike column
};

/// log sum_i w_i N(x; m_i, Lambda_i), evaluated in the log domain.
inline double gm_logpdf(const GaussianMixture& gm, const Eigen::Ref<const VectorXd>& x) {
  return MixtureDensity(gm).log_density(x);
}

/**
 * \brief Draws n samples (one per column). Sample `j` uses its own keyed
 * stream, so the output does not depend on evaluation order.
 */
inline MatrixXd gm_sample(const GaussianMixture& gm, Index n, std::uint64_t seed) {
  const Index d = gm.dim();
  MatrixXd out(d, n);
  VectorXd cumulative(gm.size());
  double acc = 0.0;
  for (Index i = 0; i < gm.size(); ++i) {
    acc += gm.weight(i);
    cumulative(i) = acc;
  }
  VectorXd xi(d);
  for (Index j = 0; j < n; ++j) {
    Stream rng(seed, static_cast<std::uint64_t>(j));
    const double u = rng.uniform() * acc;
    Index comp = 0;
    while (comp + 1 < gm.size() && (cumulative(comp) <= u || gm.weight(comp) == 0.0)) {
      ++comp;
    }
    rng.fill_normal(xi);
    out.col(j) = gm.mean(comp) + gm.spiked(comp).apply_sqrt(xi);
  }
  return out;
}

/// Linear-Gaussian likelihood f(y | x) = N(y; H x + b, R).
class LinearGaussianObservation {
 public:
  LinearGaussianObservation() = default;

  LinearGaussianObservation(MatrixXd h, VectorXd b, MatrixXd r)
      : h_{std::move(h)}, b_{std::move(b)}, r_{std::move(r)} {
    if (b_.size() != h_.rows() || r_.rows() != h_.rows() || r_.cols() != h_.rows()) {
      throw Error("LinearGaussianObservation: inconsistent shapes");
    }
    const double scale = std::max(1.0, r_.cwiseAbs().maxCoeff());
    if ((r_ - r_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
      throw Error("LinearGaussianObservation: R is not symmetric");
    }
    r_factor_ = SpdFactor(r_, "observation covariance R");
  }

  Index obs_dim() const { return h_.rows(); }
  Index state_dim() const { return h_.cols(); }
  const MatrixXd& H() const { return h_; }
  const VectorXd& b() const { return b_; }
  const MatrixXd& R() const { return r_; }
  const SpdFactor& R_factor() const { return r_factor_; }

  /// True when every row of H is nonzero.
  bool is_informative() const { return (h_.rowwise().squaredNorm().array() > 0.0).all(); }

  double log_likelihood(const Eigen::Ref<const VectorXd>& y, const Eigen::Ref<const VectorXd>& x) const {
    return r_factor_.log_density(y - h_ * x - b_);
  }

  LinearGaussianObservation with_noise(MatrixXd r) const { return {h_, b_, std::move(r)}; }

 private:
  MatrixXd h_;
  VectorXd b_;
  MatrixXd r_;
  SpdFactor r_factor_;
};

struct ProblemInstance {
  GaussianMixture prior;
  LinearGaussianObservation observation;
  std::uint64_t seed = 0;

  Index d() const { return prior.dim(); }
  Index c() const { return observation.obs_dim(); }

  void validate() const {
    if (observation.state_dim() != prior.dim()) {
      throw Error("ProblemInstance: observation operator does not match prior dimension");
    }
    if (!observation.is_informative()) {
      throw Error("ProblemInstance: H has a zero row");
    }
  }
};

/**
 * \brief Random Gaussian-mixture inverse problem.
 *
 * Weights chi^2(1) then normalized, means uniform on [-8, 8]^d, covariances
 * l l^T + I with l uniform on [0, 1]^d. H keeps the singular vectors of a
 * standard normal matrix with singular values sort(alpha) + 1e-3, and
 * R = beta beta^T + max(alpha)^2 I. The bias is zero.
 */
inline ProblemInstance generate_instance(Index d, Index c, Index k, std::uint64_t seed) {
  if (d < 1 || c < 1 || k < 1) {
    throw Error("generate_instance: dimensions and component count must be positive");
  }
  if (c > d) {
    throw Error("generate_instance: requires c <= d");
  }
  Stream rng(seed, hash_tag("instance"));

  VectorXd weights(k);
  for (Index i = 0; i < k; ++i) {
    const double z = rng.normal();
    weights(i) = z * z;
  }
  weights /= weights.sum();

  std::vector<VectorXd> means;
  std::vector<MatrixXd> covs;
  for (Index i = 0; i < k; ++i) {
    VectorXd m(d);
    for (Index j = 0; j < d; ++j) {
      m(j) = -8.0 + 16.0 * rng.uniform();
    }
    VectorXd l(d);
    for (Index j = 0; j < d; ++j) {
      l(j) = rng.uniform();
    }
    means.push_back(std::move(m));
    MatrixXd cov = l * l.transpose();
    cov.diagonal().array() += 1.0;
    covs.push_back(std::move(cov));
  }

  MatrixXd h_raw(c, d);
  rng.fill_normal(h_raw);
  VectorXd alpha(c);
  VectorXd beta(c);
  for (Index j = 0; j < c; ++j) {
    alpha(j) = rng.uniform();
  }
  for (Index j = 0; j < c; ++j) {
    beta(j) = rng.uniform();
  }
  std::sort(alpha.data(), alpha.data() + c);

  Eigen::JacobiSVD<MatrixXd> svd(h_raw, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd singular = alpha.array() + 1e-3;
  MatrixXd h = svd.matrixU() * singular.asDiagonal() * svd.matrixV().transpose();

  MatrixXd r = beta * beta.transpose();
  r.diagonal().array() += alpha.maxCoeff() * alpha.maxCoeff();

  ProblemInstance out{GaussianMixture(std::move(weights), std::move(means), covs),
                      LinearGaussianObservation(std::move(h), VectorXd::Zero(c), std::move(r)), seed};
  out.validate();
  return out;
}

/**
 * \brief Exact posterior of a Gaussian-mixture prior under a linear-Gaussian
 * likelihood, component by component in gain form.
 */
inline GaussianMixture exact_posterior(const GaussianMixture& gm, const LinearGaussianObservation& obs,
                                       const Eigen::Ref<const VectorXd>& y) {
  if (obs.state_dim() != gm.dim() || y.size() != obs.obs_dim()) {
    throw Error("exact_posterior: inconsistent shapes");
  }
  const Index k = gm.size();
  const Index d = gm.dim();
  const Index c = obs.obs_dim();
  VectorXd log_w(k);
  std::vector<VectorXd> means;
  std::vector<MatrixXd> covs;
  for (Index i = 0; i < k; ++i) {
    const SpikedCovariance& cov = gm.spiked(i);
    MatrixXd lam_ht(d, c);  // Lambda H^T
    for (Index j = 0; j < c; ++j) {
      lam_ht.col(j) = cov.apply(obs.H().row(j).transpose());
    }
    const MatrixXd innovation = symmetrized(obs.H() * lam_ht + obs.R());
    const SpdFactor factor(innovation, "marginal covariance H Lambda H^T + R");
    const VectorXd residual = y - obs.H() * gm.mean(i) - obs.b();
    const MatrixXd gain_t = factor.solve(lam_ht.transpose());  // (Lambda H^T S^{-1})^T
    log_w(i) = std::log(gm.weight(i)) + factor.log_density(residual);
    means.push_back(gm.mean(i) + gain_t.transpose() * residual);
    covs.push_back(symmetrized(gm.covariance(i) - lam_ht * gain_t));
  }
  VectorXd weights = (log_w.array() - log_sum_exp(log_w)).exp();
  weights /= weights.sum();
  return GaussianMixture(std::move(weights), std::move(means), covs);
}

/// E[y] = H E[x] + b under the prior predictive.
inline VectorXd observation_mean(const GaussianMixture& gm, const LinearGaussianObservation& obs) {
  return obs.H() * gm.mixture_mean() + obs.b();
}

/// E[y] + omega in every coordinate.
inline VectorXd make_outlier_observation(const GaussianMixture& gm, const LinearGaussianObservation& obs,
                                         double omega) {
  return observation_mean(gm, obs).array() + omega;
}

}  // namespace gfk

#endif  // GFK_GAUSSIAN_MIXTURE_HPP
