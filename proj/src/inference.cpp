#include "fedmogp/inference.hpp"

#include <numbers>

#include "fedmogp/diagnostics.hpp"
#include "fedmogp/errors.hpp"
#include "fedmogp/polya_gamma.hpp"

namespace fedmogp {

GaussianPosterior prior_posterior(const CholeskyFactor& k) {
  GaussianPosterior p;
  p.mean = Eigen::VectorXd::Zero(k.size());
  p.cov = k.lower * k.lower.transpose();
  p.log_det_cov = k.log_det();
  return p;
}

GaussianPosterior make_posterior(Eigen::VectorXd mean, Eigen::MatrixXd cov) {
  if (mean.size() != cov.rows() || cov.rows() != cov.cols()) {
    throw InputError("make_posterior: mean/covariance shapes disagree");
  }
  GaussianPosterior p;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
  if (ldlt.info() != Eigen::Success) {
    throw NumericError("make_posterior: covariance factorization failed");
  }
  p.log_det_cov = ldlt.vectorD().array().max(1e-300).log().sum();
  p.mean = std::move(mean);
  p.cov = std::move(cov);
  return p;
}

void validate_observations(const ObservationSet& obs) {
  const TaskLayout& layout = obs.layout;
  if (obs.targets.size() != layout.total_points()) {
    throw InputError("observations: target vector length disagrees with layout");
  }
  if (!obs.targets.allFinite()) {
    throw NumericError("observations: non-finite targets");
  }
  int n_regression_tasks = 0;
  for (int t = 0; t < layout.n_tasks(); ++t) {
    const Task& task = layout.tasks()[t];
    if (task.kind == TaskKind::kRegression) {
      ++n_regression_tasks;
      continue;
    }
    for (int r = 0; r < layout.n_points(t); ++r) {
      double y = obs.targets[layout.offset(t) + r];
      if (y != 1.0 && y != -1.0) {
        throw InputError("observations: classification targets must be -1 or +1");
      }
    }
  }
  if (static_cast<int>(obs.noise_variance.size()) != n_regression_tasks) {
    throw InputError("observations: one noise variance per regression task required");
  }
  for (double s2 : obs.noise_variance) {
    if (!(s2 > 0.0) || !std::isfinite(s2)) {
      throw InputError("observations: noise variances must be positive and finite");
    }
  }
}

PGState update_q_omega(const GaussianPosterior& posterior, const TaskLayout& layout) {
  const int n_class = layout.n_classification_points();
  const int base = layout.classification_offset();
  PGState pg;
  pg.tilt.resize(n_class);
  pg.omega_mean.resize(n_class);
  for (int j = 0; j < n_class; ++j) {
    const int g = base + j;
    double second_moment = posterior.cov(g, g) + posterior.mean[g] * posterior.mean[g];
    if (second_moment < 0.0) {
      diagnostics::count_second_moment_clamp();
      second_moment = 0.0;
    }
    if (!std::isfinite(second_moment)) {
      throw NumericError("update_q_omega: non-finite marginal second moment");
    }
    pg.tilt[j] = std::sqrt(second_moment);
    pg.omega_mean[j] = pg_expectation(1.0, pg.tilt[j]);
  }
  return pg;
}

SiteMatrices site_matrices(const PGState& pg, const ObservationSet& obs) {
  validate_observations(obs);
  const TaskLayout& layout = obs.layout;
  if (pg.omega_mean.size() != layout.n_classification_points()) {
    throw InputError("site_matrices: PG state length disagrees with layout");
  }
  SiteMatrices sites;
  sites.precision.resize(layout.total_points());
  sites.pseudo_target.resize(layout.total_points());
  int regression_index = 0;
  for (int t = 0; t < layout.n_tasks(); ++t) {
    const Task& task = layout.tasks()[t];
    const int off = layout.offset(t);
    const int n = layout.n_points(t);
    if (task.kind == TaskKind::kRegression) {
      const double prec = 1.0 / obs.noise_variance[regression_index++];
      for (int r = 0; r < n; ++r) {
        sites.precision[off + r] = prec;
        sites.pseudo_target[off + r] = obs.targets[off + r];
      }
    } else {
      for (int r = 0; r < n; ++r) {
        const int j = off + r - layout.classification_offset();
        const double omega = pg.omega_mean[j];
        if (!(omega > 0.0)) {
          throw NumericError("site_matrices: non-positive PG mean");
        }
        sites.precision[off + r] = omega;
        sites.pseudo_target[off + r] = obs.targets[off + r] / (2.0 * omega);
      }
    }
  }
  return sites;
}

GaussianPosterior update_q_f(const SiteMatrices& sites, const CholeskyFactor& k) {
  const Eigen::Index n = k.size();
  if (sites.precision.size() != n || sites.pseudo_target.size() != n) {
    throw InputError("update_q_f: site dimensions disagree with prior factor");
  }
  if (!sites.precision.allFinite() || !sites.pseudo_target.allFinite()) {
    throw NumericError("update_q_f: non-finite site values");
  }
  const Eigen::MatrixXd& l = k.lower;
  // B = I + L^T H L is at least as well conditioned as H itself and always
  // factorizable; cov = L B^{-1} L^T realizes (H + K^{-1})^{-1} without
  // forming either inverse.
  Eigen::MatrixXd b = Eigen::MatrixXd::Identity(n, n);
  b.noalias() += l.transpose() * sites.precision.asDiagonal() * l;
  Eigen::LLT<Eigen::MatrixXd> llt_b(b);
  if (llt_b.info() != Eigen::Success) {
    throw NumericError("update_q_f: inner factorization failed");
  }
  Eigen::MatrixXd m_b = llt_b.matrixL();
  Eigen::MatrixXd half = m_b.triangularView<Eigen::Lower>().solve(l.transpose());

  GaussianPosterior out;
  out.cov.noalias() = half.transpose() * half;
  out.log_det_cov = k.log_det() - 2.0 * m_b.diagonal().array().log().sum();
  Eigen::VectorXd weighted = sites.precision.asDiagonal() * sites.pseudo_target;
  out.mean.noalias() = out.cov * weighted;
  if (!out.mean.allFinite()) {
    throw NumericError("update_q_f: non-finite posterior mean");
  }
  return out;
}

MeanFieldState initial_state(const CholeskyFactor& k, const TaskLayout& layout) {
  MeanFieldState state;
  state.posterior = prior_posterior(k);
  state.pg = update_q_omega(state.posterior, layout);
  return state;
}

MeanFieldState mean_field_sweep(MeanFieldState state, const ObservationSet& obs,
                                const CholeskyFactor& k, int n_iters) {
  if (n_iters < 0) throw InputError("mean_field_sweep: n_iters must be non-negative");
  for (int it = 0; it < n_iters; ++it) {
    state.pg = update_q_omega(state.posterior, obs.layout);
    SiteMatrices sites = site_matrices(state.pg, obs);
    state.posterior = update_q_f(sites, k);
  }
  return state;
}

Prediction predict(const std::vector<Basis>& bases, const MixingWeights& w,
                   const TaskLayout& layout, const CholeskyFactor& k,
                   const GaussianPosterior& posterior, int task_id,
                   const Eigen::VectorXd& x_star) {
  if (posterior.mean.size() != layout.total_points() || k.size() != layout.total_points()) {
    throw InputError("predict: posterior/factor dimensions disagree with layout");
  }
  Eigen::VectorXd k_star = cross_cov_vector(layout, w, bases, task_id, x_star);
  Eigen::VectorXd alpha = k.solve(k_star);
  const double k_ss = cross_cov(w, bases, task_id, task_id, x_star, x_star);

  Prediction pred;
  pred.mean = alpha.dot(posterior.mean);
  double var = k_ss - k_star.dot(alpha) + alpha.dot(posterior.cov * alpha);
  if (!std::isfinite(pred.mean) || !std::isfinite(var)) {
    throw NumericError("predict: non-finite predictive moments");
  }
  if (var < kVarianceFloor) {
    diagnostics::count_variance_clamp();
    var = kVarianceFloor;
  }
  pred.variance = var;

  const Task& task = layout.tasks()[layout.index_of(task_id)];
  if (task.kind == TaskKind::kClassification) {
    const double kappa = std::sqrt(1.0 + std::numbers::pi * pred.variance / 8.0);
    pred.class_probability = sigmoid(pred.mean / kappa);
  }
  return pred;
}

}  // namespace fedmogp
