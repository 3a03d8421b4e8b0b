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

#ifndef GFK_TWIST_BRIDGE_HPP
#define GFK_TWIST_BRIDGE_HPP

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "gfk/diffusion.hpp"
#include "gfk/gaussian_mixture.hpp"
#include "gfk/linalg.hpp"
#include "gfk/rng.hpp"
#include "gfk/smc.hpp"

/**
 * \file
 * \brief Observation-path twisting for linear-Gaussian likelihoods.
 *
 * The observation y is noised forward into a path y_0 = y, y_1, ..., y_N.
 * The intermediate likelihood of x_n given y_n is approximated by
 * N(y_n; F_n x_n + z_n, Omega_n), propagated one step at a time with the
 * denoising kernel's mean replaced by the current state. SMC step k reads the
 * path and coefficients at noising index n = N - k.
 */

namespace gfk {

/// Covariance that is either `scale * I` or a dense matrix.
struct StepCovariance {
  double scale = 0.0;
  MatrixXd dense;

  static StepCovariance isotropic(double s) { return {s, {}}; }
  static StepCovariance full(MatrixXd m) { return {0.0, std::move(m)}; }

  bool is_isotropic() const { return dense.size() == 0; }

  /// F C F^T.
  MatrixXd sandwich(const Eigen::Ref<const MatrixXd>& f) const {
    if (is_isotropic()) {
      return scale * f * f.transpose();
    }
    return f * dense * f.transpose();
  }

  void add_to(MatrixXd& acc) const {
    if (is_isotropic()) {
      acc.diagonal().array() += scale;
    } else {
      acc += dense;
    }
  }
};

/**
 * \brief Coefficients of the auxiliary observation process and the denoising
 * covariances: y_{i+1} = A_i y_i + N(0, Sigma_i) for i in [0, N), and C_k for
 * k in [1, N].
 */
struct BridgeProcess {
  std::vector<MatrixXd> transition;
  std::vector<MatrixXd> transition_cov;
  std::vector<StepCovariance> denoise_cov;  // entry k-1 holds C_k

  int steps() const { return static_cast<int>(transition.size()); }
  const StepCovariance& C(int k) const { return denoise_cov.at(static_cast<std::size_t>(k - 1)); }

  /// Same OU coefficients as the state noising process, scalar times I_c.
  static BridgeProcess from_schedule(const DiffusionSchedule& sched, Index obs_dim) {
    BridgeProcess out;
    const MatrixXd eye = MatrixXd::Identity(obs_dim, obs_dim);
    for (int i = 0; i < sched.steps(); ++i) {
      out.transition.push_back(sched.transition(i) * eye);
      out.transition_cov.push_back(sched.transition_variance(i) * eye);
      out.denoise_cov.push_back(StepCovariance::isotropic(sched.denoise_variance(i + 1)));
    }
    return out;
  }

  void validate(Index obs_dim) const {
    if (transition_cov.size() != transition.size() || denoise_cov.size() != transition.size()) {
      throw Error("BridgeProcess: coefficient sequences differ in length");
    }
    for (std::size_t i = 0; i < transition.size(); ++i) {
      if (transition[i].rows() != obs_dim || transition[i].cols() != obs_dim ||
          transition_cov[i].rows() != obs_dim || transition_cov[i].cols() != obs_dim) {
        throw Error("BridgeProcess: coefficient shape does not match observation dimension");
      }
    }
  }
};

struct ObservationPath {
  std::vector<VectorXd> forward;  // y_0 .. y_N
  std::uint64_t seed = 0;

  int steps() const { return static_cast<int>(forward.size()) - 1; }
  const VectorXd& y(int n) const { return forward.at(static_cast<std::size_t>(n)); }
  /// Reversed view v_k = y_{N-k}.
  const VectorXd& v(int k) const { return y(steps() - k); }
};

namespace detail {

/// Symmetric PSD square root (zero allowed).
inline MatrixXd psd_sqrt(const Eigen::Ref<const MatrixXd>& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(symmetrized(m));
  return solver.eigenvectors() * solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         solver.eigenvectors().transpose();
}

}  // namespace detail

/// Forward path y_k = A_{k-1} y_{k-1} + Sigma_{k-1}^{1/2} xi_k from y_0 = y.
inline ObservationPath simulate_observation_path(const Eigen::Ref<const VectorXd>& y, const BridgeProcess& process,
                                                 std::uint64_t seed) {
  process.validate(y.size());
  ObservationPath path;
  path.seed = seed;
  path.forward.push_back(y);
  Stream rng(seed, hash_tag("observation-path"));
  VectorXd xi(y.size());
  for (int i = 0; i < process.steps(); ++i) {
    rng.fill_normal(xi);
    const auto& a = process.transition[static_cast<std::size_t>(i)];
    const MatrixXd root = detail::psd_sqrt(process.transition_cov[static_cast<std::size_t>(i)]);
    path.forward.push_back(a * path.forward.back() + root * xi);
  }
  return path;
}

inline ObservationPath simulate_observation_path(const Eigen::Ref<const VectorXd>& y, const DiffusionSchedule& sched,
                                                 std::uint64_t seed) {
  return simulate_observation_path(y, BridgeProcess::from_schedule(sched, y.size()), seed);
}

/// Gaussian intermediate likelihoods N(y_n; F_n x + z_n, Omega_n), n in [0, N].
struct TwistCoefficients {
  std::vector<MatrixXd> F;
  std::vector<VectorXd> z;
  std::vector<MatrixXd> omega;

  int steps() const { return static_cast<int>(F.size()) - 1; }
};

/// Forward recursion from (H, b, R): F_{n+1} = A_n F_n, z_{n+1} = A_n z_n,
/// Omega_{n+1} = A_n (F_n C_{n+1} F_n^T + Omega_n) A_n^T + Sigma_n.
inline TwistCoefficients twist_coeffs_recursive(const LinearGaussianObservation& obs, const BridgeProcess& process) {
  process.validate(obs.obs_dim());
  TwistCoefficients out;
  out.F.push_back(obs.H());
  out.z.push_back(obs.b());
  out.omega.push_back(obs.R());
  for (int n = 0; n < process.steps(); ++n) {
    const auto& a = process.transition[static_cast<std::size_t>(n)];
    const MatrixXd& f = out.F.back();
    MatrixXd inner = process.C(n + 1).sandwich(f) + out.omega.back();
    MatrixXd omega = a * inner * a.transpose() + process.transition_cov[static_cast<std::size_t>(n)];
    out.z.push_back(a * out.z.back());
    out.F.push_back(a * f);
    out.omega.push_back(symmetrized(omega));
  }
  return out;
}

inline TwistCoefficients twist_coeffs_recursive(const LinearGaussianObservation& obs,
                                                const DiffusionSchedule& sched) {
  return twist_coeffs_recursive(obs, BridgeProcess::from_schedule(sched, obs.obs_dim()));
}

/**
 * \brief Closed form with the semigroup S_m^n = A_{n-1} ... A_m:
 * F_n = S_0^n H, z_n = S_0^n b and
 * Omega_n = S_0^n (H (C_1 + ... + C_n) H^T + R) (S_0^n)^T
 *         + sum_{i=0}^{n-1} S_{i+1}^n Sigma_i (S_{i+1}^n)^T.
 */
inline TwistCoefficients twist_coeffs_closed_form(const LinearGaussianObservation& obs,
                                                  const BridgeProcess& process) {
  process.validate(obs.obs_dim());
  const Index c = obs.obs_dim();
  const Index d = obs.state_dim();
  const MatrixXd eye = MatrixXd::Identity(c, c);
  TwistCoefficients out;
  out.F.push_back(obs.H());
  out.z.push_back(obs.b());
  out.omega.push_back(obs.R());

  // running sum of C_1..C_n, dense only when some C_k is
  double c_scalar_sum = 0.0;
  MatrixXd c_dense_sum;
  for (int n = 1; n <= process.steps(); ++n) {
    const StepCovariance& cn = process.C(n);
    if (cn.is_isotropic()) {
      c_scalar_sum += cn.scale;
    } else {
      if (c_dense_sum.size() == 0) {
        c_dense_sum = MatrixXd::Zero(d, d);
      }
      c_dense_sum += cn.dense;
    }

    // semigroups[i] = S_i^n for i = 0..n
    std::vector<MatrixXd> semigroups(static_cast<std::size_t>(n) + 1);
    semigroups[static_cast<std::size_t>(n)] = eye;
    for (int i = n - 1; i >= 0; --i) {
      semigroups[static_cast<std::size_t>(i)] =
          semigroups[static_cast<std::size_t>(i + 1)] * process.transition[static_cast<std::size_t>(i)];
    }
    const MatrixXd& s0 = semigroups[0];

    MatrixXd accumulated = c_scalar_sum * obs.H() * obs.H().transpose();
    if (c_dense_sum.size() != 0) {
      accumulated += obs.H() * c_dense_sum * obs.H().transpose();
    }
    MatrixXd omega = s0 * (accumulated + obs.R()) * s0.transpose();
    for (int i = 0; i <= n - 1; ++i) {
      const MatrixXd& s = semigroups[static_cast<std::size_t>(i + 1)];
      omega += s * process.transition_cov[static_cast<std::size_t>(i)] * s.transpose();
    }
    out.F.push_back(s0 * obs.H());
    out.z.push_back(s0 * obs.b());
    out.omega.push_back(symmetrized(omega));
  }
  return out;
}

inline TwistCoefficients twist_coeffs_closed_form(const LinearGaussianObservation& obs,
                                                  const DiffusionSchedule& sched) {
  return twist_coeffs_closed_form(obs, BridgeProcess::from_schedule(sched, obs.obs_dim()));
}

/// log N(y_n; F_n x + z_n, Omega_n) at noising index n.
inline double twist_logpdf(const TwistCoefficients& coeffs, int n, const Eigen::Ref<const VectorXd>& y_n,
                           const Eigen::Ref<const VectorXd>& x) {
  const auto idx = static_cast<std::size_t>(n);
  return gaussian_logpdf(y_n, coeffs.F.at(idx) * x + coeffs.z.at(idx), coeffs.omega.at(idx));
}

/**
 * \brief Per-step quantities of the guided proposal
 * N(r + D (v - F r - z), C (I - D F)) with D = C F^T (C F F^T + Omega)^{-1}.
 */
struct GuidedKernel {
  double step_variance = 0.0;  // C, isotropic
  MatrixXd gain;               // D, d x c
  SpdFactor innovation;        // C F F^T + Omega
  SpdFactor omega;             // Omega at the twist index
  MatrixXd omega_root;         // lower Cholesky factor of Omega
};

/**
 * \brief B^0SMC ingredients for one observation: path, twist coefficients
 * and guided kernels over a diffusion prior.
 *
 * Holds a pointer to `prior`, which must outlive this object.
 */
class BridgedTwist {
 public:
  BridgedTwist(const DiffusionPrior& prior, const LinearGaussianObservation& obs, const Eigen::Ref<const VectorXd>& y,
               std::uint64_t path_seed)
      : BridgedTwist(prior, obs, simulate_observation_path(y, prior.schedule(), path_seed)) {}

  BridgedTwist(const DiffusionPrior& prior, const LinearGaussianObservation& obs, ObservationPath path)
      : prior_{&prior}, path_{std::move(path)} {
    if (obs.state_dim() != prior.dim()) {
      throw Error("BridgedTwist: observation does not match prior dimension");
    }
    if (path_.steps() != prior.steps()) {
      throw Error("BridgedTwist: observation path length does not match the schedule");
    }
    coeffs_ = twist_coeffs_recursive(obs, prior.schedule());
    const int steps = prior.steps();
    for (int n = 0; n <= steps; ++n) {
      omega_factors_.emplace_back(coeffs_.omega[static_cast<std::size_t>(n)], "twist covariance Omega");
    }
    kernels_.resize(static_cast<std::size_t>(steps) + 1);
    for (int k = 1; k <= steps; ++k) {
      const int n = prior.twist_index(k);
      const MatrixXd& f = coeffs_.F[static_cast<std::size_t>(n)];
      GuidedKernel& kern = kernels_[static_cast<std::size_t>(k)];
      kern.step_variance = prior.step_variance(k);
      const MatrixXd innovation = symmetrized(kern.step_variance * f * f.transpose() + coeffs_.omega[static_cast<std::size_t>(n)]);
      kern.innovation = SpdFactor(innovation, "guided proposal innovation covariance");
      kern.gain = kern.innovation.solve(kern.step_variance * f).transpose();
      kern.omega = omega_factors_[static_cast<std::size_t>(n)];
      kern.omega_root = kern.omega.lower();
    }
  }

  const DiffusionPrior& prior() const { return *prior_; }
  const TwistCoefficients& coefficients() const { return coeffs_; }
  const ObservationPath& path() const { return path_; }
  int steps() const { return prior_->steps(); }
  Index dim() const { return prior_->dim(); }
  const GuidedKernel& kernel(int k) const { return kernels_.at(static_cast<std::size_t>(k)); }

  const MatrixXd& F(int n) const { return coeffs_.F[static_cast<std::size_t>(n)]; }
  const VectorXd& z(int n) const { return coeffs_.z[static_cast<std::size_t>(n)]; }

  /// log l_k^{v_k}(x) for SMC step k in [0, N].
  double log_twist(int k, const Eigen::Ref<const VectorXd>& x) const {
    const int n = steps() - k;
    return omega_factors_[static_cast<std::size_t>(n)].log_density(path_.v(k) - F(n) * x - z(n));
  }

  /// log_twist for every column.
  VectorXd log_twists(int k, const Eigen::Ref<const MatrixXd>& x) const {
    const int n = steps() - k;
    MatrixXd residual = -(F(n) * x);
    residual.colwise() += path_.v(k) - z(n);
    return omega_factors_[static_cast<std::size_t>(n)].log_densities(residual);
  }

  /// log N(v_k; F r + z, C F F^T + Omega) for every column r.
  VectorXd innovation_log_densities(int k, const Eigen::Ref<const MatrixXd>& r) const {
    const int n = steps() - k;
    MatrixXd residual = -(F(n) * r);
    residual.colwise() += path_.v(k) - z(n);
    return kernel(k).innovation.log_densities(residual);
  }

  /// Mean of the guided proposal given the denoising mean r.
  VectorXd proposal_mean(int k, const Eigen::Ref<const VectorXd>& r) const {
    const int n = steps() - k;
    return r + kernel(k).gain * (path_.v(k) - F(n) * r - z(n));
  }

  /**
   * \brief Draw from the guided proposal given the denoising mean r.
   *
   * Samples x ~ N(r, C I) and eta ~ N(0, Omega) and returns
   * x + D (v - F x - z - eta), which has exactly the proposal law.
   */
  VectorXd propose_from_mean(int k, const Eigen::Ref<const VectorXd>& r, Stream& rng) const {
    const int n = steps() - k;
    const GuidedKernel& kern = kernel(k);
    VectorXd x(r.size());
    rng.fill_normal(x);
    x = r + std::sqrt(kern.step_variance) * x;
    VectorXd eta(kern.omega_root.rows());
    rng.fill_normal(eta);
    return x + kern.gain * (path_.v(k) - F(n) * x - z(n) - kern.omega_root * eta);
  }

  /// log of the guided proposal density M_{k|k-1}(u_new | u_prev).
  double proposal_logpdf(int k, const Eigen::Ref<const VectorXd>& u_new, const Eigen::Ref<const VectorXd>& u_prev) const {
    const int n = steps() - k;
    const GuidedKernel& kern = kernel(k);
    const VectorXd delta = u_new - proposal_mean(k, prior_->denoise_mean(k, u_prev));
    const double c = kern.step_variance;
    const auto d = static_cast<double>(u_new.size());
    // precision = I / C + F^T Omega^{-1} F; log det = d log C + log det Omega - log det S
    const double quad = delta.squaredNorm() / c + kern.omega.quad(F(n) * delta);
    const double log_det = d * std::log(c) + kern.omega.log_det() - kern.innovation.log_det();
    return -0.5 * (d * kLog2Pi + log_det + quad);
  }

  /// log q_{k|k-1}(u_new | u_prev), the unconditional Euler step.
  double transition_logpdf(int k, const Eigen::Ref<const VectorXd>& u_new,
                           const Eigen::Ref<const VectorXd>& u_prev) const {
    const double c = prior_->step_variance(k);
    const auto d = static_cast<double>(u_new.size());
    return -0.5 * (d * (kLog2Pi + std::log(c)) + (u_new - prior_->denoise_mean(k, u_prev)).squaredNorm() / c);
  }

  /// Guided log-potential from the denoising mean r of u_prev:
  /// log N(v_k; F r + z, C F F^T + Omega) - log l_{k-1}(u_prev).
  double log_potential_from_mean(int k, const Eigen::Ref<const VectorXd>& r,
                                 const Eigen::Ref<const VectorXd>& u_prev) const {
    const int n = steps() - k;
    return kernel(k).innovation.log_density(path_.v(k) - F(n) * r - z(n)) - log_twist(k - 1, u_prev);
  }

 private:
  const DiffusionPrior* prior_;
  ObservationPath path_;
  TwistCoefficients coeffs_;
  std::vector<SpdFactor> omega_factors_;
  std::vector<GuidedKernel> kernels_;
};

/// One draw from the guided proposal of SMC step k.
inline VectorXd guided_propose(const BridgedTwist& twist, int k, const Eigen::Ref<const VectorXd>& u_prev,
                               Stream& rng) {
  twist.prior().check_step(k);
  return twist.propose_from_mean(k, twist.prior().denoise_mean(k, u_prev), rng);
}

/// Guided potential G_k; independent of u_new for this proposal.
inline double guided_log_potential(const BridgedTwist& twist, int k, const Eigen::Ref<const VectorXd>& /*u_new*/,
                                   const Eigen::Ref<const VectorXd>& u_prev) {
  twist.prior().check_step(k);
  return twist.log_potential_from_mean(k, twist.prior().denoise_mean(k, u_prev), u_prev);
}

/// Bootstrap potential l_k(u_new) / l_{k-1}(u_prev), in logs.
inline double bootstrap_log_potential(const BridgedTwist& twist, int k, const Eigen::Ref<const VectorXd>& u_new,
                                      const Eigen::Ref<const VectorXd>& u_prev) {
  twist.prior().check_step(k);
  return twist.log_twist(k, u_new) - twist.log_twist(k - 1, u_prev);
}

enum class ProposalKind { guided, bootstrap };

/**
 * \brief The B^0SMC Feynman-Kac model: M_0 = p_T, G_0 = l_0, guided (or
 * bootstrap) transitions with the matching potentials.
 */
class B0smcModel {
 public:
  B0smcModel(BridgedTwist twist, ProposalKind kind = ProposalKind::guided)
      : twist_{std::move(twist)}, kind_{kind}, reference_{twist_.prior().reference()} {}

  Index dim() const { return twist_.dim(); }
  int steps() const { return twist_.steps(); }
  const BridgedTwist& twist() const { return twist_; }
  ProposalKind kind() const { return kind_; }

  void sample_initial(MatrixXd& out, std::uint64_t seed) const { out = gm_sample(reference_, out.cols(), seed); }

  void initial_log_potential(const MatrixXd& particles, VectorXd& out) const { out = twist_.log_twists(0, particles); }

  void propose(int k, const MatrixXd& prev, MatrixXd& next, std::uint64_t seed) {
    const DiffusionPrior& prior = twist_.prior();
    prior.denoise_means(k, prev, means_);
    const Index count = prev.cols();
    const Index c = twist_.coefficients().F.front().rows();
    next.resize(prev.rows(), count);
    MatrixXd eta(c, count);
    for (Index j = 0; j < count; ++j) {
      Stream rng(seed, static_cast<std::uint64_t>(j));
      rng.fill_normal(next.col(j));
      if (kind_ == ProposalKind::guided) {
        rng.fill_normal(eta.col(j));
      }
    }
    next = means_ + std::sqrt(prior.step_variance(k)) * next;
    if (kind_ == ProposalKind::guided) {
      // x + D (v - F x - z - Omega^{1/2} eta), see propose_from_mean
      const int n = twist_.steps() - k;
      const GuidedKernel& kern = twist_.kernel(k);
      MatrixXd innovation = -(twist_.F(n) * next) - kern.omega_root * eta;
      innovation.colwise() += twist_.path().v(k) - twist_.z(n);
      next.noalias() += kern.gain * innovation;
    }
  }

  void log_potential(int k, const MatrixXd& next, const MatrixXd& prev, VectorXd& out) const {
    if (kind_ == ProposalKind::guided) {
      out = twist_.innovation_log_densities(k, means_) - twist_.log_twists(k - 1, prev);
    } else {
      out = twist_.log_twists(k, next) - twist_.log_twists(k - 1, prev);
    }
  }

 private:
  BridgedTwist twist_;
  ProposalKind kind_;
  GaussianMixture reference_;
  MatrixXd means_;  // denoising means of the current step
};

static_assert(FeynmanKacModel<B0smcModel>);

/// Assembles the B^0SMC model for observation y; the path uses `seed`.
inline B0smcModel build_b0smc_model(const DiffusionPrior& prior, const LinearGaussianObservation& obs,
                                    const Eigen::Ref<const VectorXd>& y, std::uint64_t seed,
                                    ProposalKind kind = ProposalKind::guided) {
  return B0smcModel(BridgedTwist(prior, obs, y, seed), kind);
}

}  // namespace gfk

#endif  // GFK_TWIST_BRIDGE_HPP
