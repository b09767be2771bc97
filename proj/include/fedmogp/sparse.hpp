#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "fedmogp/elbo.hpp"
#include "fedmogp/inference.hpp"
#include "fedmogp/mogp.hpp"

namespace fedmogp {

// Inducing inputs shared by every task of one client. Selected from the
// client's own observation sites and kept strictly client-side: payloads
// never carry these locations.
struct InducingSet {
  Eigen::MatrixXd points;  // M x D
};

// Uniform-without-replacement draw of M distinct observation sites from the
// layout's pooled (deduplicated) inputs, deterministic in `seed`. M is
// clamped to the smallest per-task point count (and to the pool size); when
// the clamped M covers the whole pool the points come back in data order,
// otherwise in seeded-permutation order so growing M extends the set.
InducingSet select_inducing(const TaskLayout& layout, int m, std::uint64_t seed);

// Gaussian factor over the stacked inducing outputs (T tasks x M points).
struct SparsePosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  double log_det_cov = 0.0;
};

// Everything derived from (prior, observations, inducing set) that the
// sparse updates reuse: the full inducing covariance factor and, per task,
// the projection A_i = K_mm_i^{-1} K_mn_i that carries inducing outputs to
// that task's observation sites. Nothing here is ever N x N.
struct SparseProblem {
  ObservationSet obs;
  TaskLayout inducing_layout;
  CholeskyFactor k_mm;
  std::vector<Eigen::MatrixXd> proj;  // one M x N_i block per task, layout order
};

SparseProblem build_sparse_problem(const GlobalPrior& prior, const ObservationSet& obs,
                                   const InducingSet& inducing);

// Marginal mean and second moment of the latent at every observation site,
// propagated through the deterministic conditional-mean map f_i = A_i^T f_m.
struct PropagatedMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd second_moment;
};

PropagatedMoments propagate_moments(const SparseProblem& sp, const SparsePosterior& posterior);

// Likelihood sites projected onto the inducing outputs:
//   regression task i      H_i = A_i D_i^r A_i^T,  v_i = A_i y_i / sigma_i^2
//   classification task i  H_i = A_i D_i^c A_i^T,  v_i = A_i y_i / 2
// where D^r = I/sigma_i^2 and D^c = diag(E[omega]). H is block-diagonal over
// tasks; v is stacked.
struct SparseSites {
  Eigen::MatrixXd h;
  Eigen::VectorXd v;
};

SparseSites sparse_site_matrices(const PGState& pg, const SparseProblem& sp);

// cov = (H + K_mm^{-1})^{-1}, mean = cov * v, through the same factored
// route as the dense update.
SparsePosterior sparse_update_q(const SparseSites& sites, const CholeskyFactor& k_mm);

struct SparseState {
  PGState pg;
  SparsePosterior posterior;
};

SparseState sparse_initial_state(const SparseProblem& sp);

// `n_iters` alternations of the PG update (from propagated moments) and the
// inducing-output Gaussian update.
SparseState sparse_mean_field_sweep(SparseState state, const SparseProblem& sp, int n_iters);

// Same four ELBO pieces as the dense bound, with observation-site moments
// propagated through the conditional-mean map and the Gaussian KL taken
// over the inducing outputs.
ELBOBreakdown sparse_elbo_terms(const SparsePosterior& posterior, const PGState& pg,
                                const SparseProblem& sp);

// Closed-form noise maximizer for one regression task, with observation-site
// moments propagated through the conditional-mean map; same floor as the
// dense version.
double sparse_optimal_sigma2(const SparsePosterior& posterior, const SparseProblem& sp,
                             int task_id);

// Predictive distribution under the inducing-output factor, through the
// full cross-task inducing covariance (the dense predictive rule applied to
// the inducing layout):
//   mean = k_m^T K_mm^{-1} m,  var = k** - k_m^T K_mm^{-1} k_m + a^T cov a.
Prediction sparse_predict(const std::vector<Basis>& bases, const MixingWeights& w,
                          const SparseProblem& sp, const SparsePosterior& posterior, int task_id,
                          const Eigen::VectorXd& x_star);

// Client ELBO evaluator with frozen sparse factors; rebuilds the inducing
// covariance and projections at each probe prior.
ClientElboFn sparse_client_elbo(SparsePosterior posterior, PGState pg, ObservationSet obs,
                                InducingSet inducing);

}  // namespace fedmogp
