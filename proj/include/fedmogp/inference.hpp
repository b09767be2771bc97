#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <vector>

#include "fedmogp/linalg.hpp"
#include "fedmogp/mogp.hpp"

namespace fedmogp {

// Predictive variances are clamped below at this floor; every clamp is
// counted in diagnostics.
inline constexpr double kVarianceFloor = 1e-12;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Factorized Polya-Gamma augmentation state, one entry per classification
// observation in stacked layout order. `tilt` is the parameter f~ of each
// tilted PG factor and `omega_mean` its posterior mean.
struct PGState {
  Eigen::VectorXd tilt;
  Eigen::VectorXd omega_mean;
};

// Gaussian factor q(f) = N(mean, cov) over the stacked latent vector.
// `log_det_cov` is kept alongside the dense covariance because every
// consumer that needs it (entropy terms) wants the value consistent with
// how the covariance was factorized, not a re-factorization.
struct GaussianPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  double log_det_cov = 0.0;
};

// Posterior initialized at the prior: zero mean, covariance equal to the
// (jitter-stabilized) prior covariance the factor was built from.
GaussianPosterior prior_posterior(const CholeskyFactor& k);

// Wraps an externally supplied mean/covariance pair, computing the log
// determinant with a pivoted factorization.
GaussianPosterior make_posterior(Eigen::VectorXd mean, Eigen::MatrixXd cov);

// Diagonal likelihood sites for the stacked latent vector:
//   regression point of task i : precision 1/sigma_i^2, pseudo-target y
//   classification point       : precision E[omega],   pseudo-target y / (2 E[omega])
struct SiteMatrices {
  Eigen::VectorXd precision;
  Eigen::VectorXd pseudo_target;
};

// One client's observations in stacked layout order. Classification targets
// must already be in {-1, +1}. `noise_variance` holds sigma_i^2 for the
// layout's regression tasks, in layout order.
struct ObservationSet {
  TaskLayout layout;
  Eigen::VectorXd targets;
  std::vector<double> noise_variance;
};

void validate_observations(const ObservationSet& obs);

// Mean-field update of the PG factors given the current Gaussian factor:
// tilt = sqrt(E[f^2]) per classification point, omega_mean through
// pg_expectation(1, tilt). Negative marginal second moments (roundoff) are
// clamped to zero and counted in diagnostics.
PGState update_q_omega(const GaussianPosterior& posterior, const TaskLayout& layout);

SiteMatrices site_matrices(const PGState& pg, const ObservationSet& obs);

// Mean-field update of the Gaussian factor given fixed sites:
//   cov = (H + K^{-1})^{-1},  mean = cov * H * v,
// evaluated through the prior factor as cov = L (I + L^T H L)^{-1} L^T so
// neither K nor H is inverted explicitly.
GaussianPosterior update_q_f(const SiteMatrices& sites, const CholeskyFactor& k);

struct MeanFieldState {
  PGState pg;
  GaussianPosterior posterior;
};

MeanFieldState initial_state(const CholeskyFactor& k, const TaskLayout& layout);

// Runs `n_iters` alternations (PG update, then Gaussian update) from the
// given state. Deterministic: same inputs and iteration count give the same
// state.
MeanFieldState mean_field_sweep(MeanFieldState state, const ObservationSet& obs,
                                const CholeskyFactor& k, int n_iters);

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
  // Moment-matched Bernoulli probability of the +1 class,
  // sigmoid(mean / sqrt(1 + pi * variance / 8)); present for
  // classification tasks only.
  std::optional<double> class_probability;
};

// Predictive distribution of output `task_id` at `x_star` under the current
// Gaussian factor, using the full stacked prior covariance (cross-task
// observations inform every task's prediction):
//   mean = k*^T K^{-1} m
//   var  = k** - k*^T K^{-1} k* + k*^T K^{-1} cov K^{-1} k*
Prediction predict(const std::vector<Basis>& bases, const MixingWeights& w,
                   const TaskLayout& layout, const CholeskyFactor& k,
                   const GaussianPosterior& posterior, int task_id,
                   const Eigen::VectorXd& x_star);

}  // namespace fedmogp
