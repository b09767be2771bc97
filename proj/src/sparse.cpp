#include "fedmogp/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fedmogp/diagnostics.hpp"
#include "fedmogp/errors.hpp"
#include "fedmogp/polya_gamma.hpp"
#include "fedmogp/random.hpp"

namespace fedmogp {

InducingSet select_inducing(const TaskLayout& layout, int m, std::uint64_t seed) {
  if (m < 1) throw InputError("select_inducing: M must be at least 1");

  // Pool the distinct observation sites across tasks, first occurrence first.
  std::vector<Eigen::VectorXd> pool;
  int min_points = layout.n_points(0);
  for (int t = 0; t < layout.n_tasks(); ++t) {
    min_points = std::min(min_points, layout.n_points(t));
    const Eigen::MatrixXd& x = layout.tasks()[t].inputs;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      Eigen::VectorXd row = x.row(r);
      bool duplicate = false;
      for (const Eigen::VectorXd& p : pool) {
        if (p.size() == row.size() && p == row) {
          duplicate = true;
          break;
        }
      }
      if (!duplicate) pool.push_back(std::move(row));
    }
  }

  const int pool_size = static_cast<int>(pool.size());
  const int m_eff = std::min({m, min_points, pool_size});

  std::vector<int> order(pool_size);
  for (int i = 0; i < pool_size; ++i) order[i] = i;
  if (m_eff < pool_size) {
    std::mt19937_64 engine = make_engine(derive_seed(seed, 0x1d0cu));
    // Partial Fisher-Yates: the first m_eff slots are a uniform
    // without-replacement sample, and a larger M extends the same sequence.
    for (int i = 0; i < m_eff; ++i) {
      std::uniform_int_distribution<int> pick(i, pool_size - 1);
      std::swap(order[i], order[pick(engine)]);
    }
  }

  InducingSet out;
  out.points.resize(m_eff, layout.input_dim());
  for (int i = 0; i < m_eff; ++i) out.points.row(i) = pool[order[i]];
  return out;
}

SparseProblem build_sparse_problem(const GlobalPrior& prior, const ObservationSet& obs,
                                   const InducingSet& inducing) {
  validate_observations(obs);
  validate_prior(prior);
  if (inducing.points.rows() < 1) throw InputError("sparse: empty inducing set");
  if (inducing.points.cols() != obs.layout.input_dim()) {
    throw InputError("sparse: inducing point dimension disagrees with layout");
  }

  SparseProblem sp;
  sp.obs = obs;

  std::vector<Task> inducing_tasks;
  for (const Task& t : obs.layout.tasks()) {
    inducing_tasks.push_back(Task{t.task_id, t.kind, inducing.points});
  }
  sp.inducing_layout = TaskLayout(std::move(inducing_tasks));

  GramMatrix k_mm = assemble_k(sp.inducing_layout, prior.mixing, prior.bases);
  sp.k_mm = stabilized_cholesky(k_mm, "inducing covariance");
  const double jitter = sp.k_mm.jitter;

  // Per-task projection A_i = K_mm_i^{-1} K_mn_i. The diagonal stabilizer
  // behaves like a white-noise kernel component, so it also appears on the
  // task block of K_mm and on coincident inducing/observation pairs of
  // K_mn; with the inducing set equal to the data the projection then
  // collapses to the identity exactly. Only M x N_i pieces are built.
  sp.proj.reserve(obs.layout.n_tasks());
  const int m = static_cast<int>(inducing.points.rows());
  for (int t = 0; t < obs.layout.n_tasks(); ++t) {
    const Task& task = obs.layout.tasks()[t];
    const int ti = sp.inducing_layout.index_of(task.task_id);
    const int m_off = sp.inducing_layout.offset(ti);

    Eigen::MatrixXd k_mm_i = k_mm.entries.block(m_off, m_off, m, m);
    k_mm_i.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt_i(k_mm_i);
    CholeskyFactor chol_i;
    if (llt_i.info() == Eigen::Success) {
      chol_i = CholeskyFactor{llt_i.matrixL(), jitter};
    } else {
      chol_i = stabilized_cholesky(
          k_mm_i, "inducing covariance (task " + std::to_string(task.task_id) + ")");
    }

    Eigen::MatrixXd k_mn(m, task.inputs.rows());
    for (int r = 0; r < m; ++r) {
      for (Eigen::Index c = 0; c < task.inputs.rows(); ++c) {
        k_mn(r, c) = cross_cov(prior.mixing, prior.bases, task.task_id, task.task_id,
                               inducing.points.row(r), task.inputs.row(c));
        if (inducing.points.row(r) == task.inputs.row(c)) k_mn(r, c) += jitter;
      }
    }
    sp.proj.push_back(chol_i.solve(k_mn));
  }
  return sp;
}

PropagatedMoments propagate_moments(const SparseProblem& sp, const SparsePosterior& posterior) {
  const TaskLayout& layout = sp.obs.layout;
  const int m = static_cast<int>(sp.inducing_layout.n_points(0));
  if (posterior.mean.size() != sp.inducing_layout.total_points()) {
    throw InputError("propagate_moments: posterior dimension disagrees with inducing layout");
  }
  PropagatedMoments out;
  out.mean.resize(layout.total_points());
  out.second_moment.resize(layout.total_points());
  for (int t = 0; t < layout.n_tasks(); ++t) {
    const Task& task = layout.tasks()[t];
    const int ti = sp.inducing_layout.index_of(task.task_id);
    const int m_off = sp.inducing_layout.offset(ti);
    const Eigen::MatrixXd& a = sp.proj[t];
    const Eigen::VectorXd mean_i = posterior.mean.segment(m_off, m);
    const Eigen::MatrixXd cov_ii = posterior.cov.block(m_off, m_off, m, m);
    Eigen::MatrixXd cov_a = cov_ii * a;  // M x N_i
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const int g = layout.offset(t) + static_cast<int>(c);
      const double fbar = a.col(c).dot(mean_i);
      double var = a.col(c).dot(cov_a.col(c));
      if (var < 0.0) {
        diagnostics::count_second_moment_clamp();
        var = 0.0;
      }
      out.mean[g] = fbar;
      out.second_moment[g] = var + fbar * fbar;
    }
  }
  return out;
}

static PGState pg_from_moments(const PropagatedMoments& moments, const TaskLayout& layout) {
  const int n_class = layout.n_classification_points();
  const int base = layout.classification_offset();
  PGState pg;
  pg.tilt.resize(n_class);
  pg.omega_mean.resize(n_class);
  for (int j = 0; j < n_class; ++j) {
    double f2 = moments.second_moment[base + j];
    if (!std::isfinite(f2)) throw NumericError("sparse PG update: non-finite second moment");
    pg.tilt[j] = std::sqrt(std::max(0.0, f2));
    pg.omega_mean[j] = pg_expectation(1.0, pg.tilt[j]);
  }
  return pg;
}

SparseSites sparse_site_matrices(const PGState& pg, const SparseProblem& sp) {
  const TaskLayout& layout = sp.obs.layout;
  if (pg.omega_mean.size() != layout.n_classification_points()) {
    throw InputError("sparse_site_matrices: PG state length disagrees with layout");
  }
  const int total = sp.inducing_layout.total_points();
  const int m = sp.inducing_layout.n_points(0);
  SparseSites sites;
  sites.h = Eigen::MatrixXd::Zero(total, total);
  sites.v = Eigen::VectorXd::Zero(total);

  int regression_index = 0;
  for (int t = 0; t < layout.n_tasks(); ++t) {
    const Task& task = layout.tasks()[t];
    const int ti = sp.inducing_layout.index_of(task.task_id);
    const int m_off = sp.inducing_layout.offset(ti);
    const int off = layout.offset(t);
    const int n_t = layout.n_points(t);
    const Eigen::MatrixXd& a = sp.proj[t];

    Eigen::VectorXd d(n_t);
    Eigen::VectorXd scaled_y(n_t);
    if (task.kind == TaskKind::kRegression) {
      const double s2 = sp.obs.noise_variance[regression_index++];
      d.setConstant(1.0 / s2);
      scaled_y = sp.obs.targets.segment(off, n_t) / s2;
    } else {
      for (int r = 0; r < n_t; ++r) {
        d[r] = pg.omega_mean[off + r - layout.classification_offset()];
      }
      scaled_y = 0.5 * sp.obs.targets.segment(off, n_t);
    }
    sites.h.block(m_off, m_off, m, m).noalias() += a * d.asDiagonal() * a.transpose();
    sites.v.segment(m_off, m).noalias() += a * scaled_y;
  }
  return sites;
}

SparsePosterior sparse_update_q(const SparseSites& sites, const CholeskyFactor& k_mm) {
  const Eigen::Index n = k_mm.size();
  if (sites.h.rows() != n || sites.h.cols() != n || sites.v.size() != n) {
    throw InputError("sparse_update_q: site dimensions disagree with inducing factor");
  }
  if (!sites.h.allFinite() || !sites.v.allFinite()) {
    throw NumericError("sparse_update_q: non-finite site values");
  }
  const Eigen::MatrixXd& l = k_mm.lower;
  Eigen::MatrixXd b = Eigen::MatrixXd::Identity(n, n);
  b.noalias() += l.transpose() * sites.h * l;
  b = 0.5 * (b + b.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt_b(b);
  if (llt_b.info() != Eigen::Success) {
    throw NumericError("sparse_update_q: inner factorization failed");
  }
  Eigen::MatrixXd m_b = llt_b.matrixL();
  Eigen::MatrixXd half = m_b.triangularView<Eigen::Lower>().solve(l.transpose());

  SparsePosterior out;
  out.cov.noalias() = half.transpose() * half;
  out.log_det_cov = k_mm.log_det() - 2.0 * m_b.diagonal().array().log().sum();
  out.mean.noalias() = out.cov * sites.v;
  if (!out.mean.allFinite()) {
    throw NumericError("sparse_update_q: non-finite posterior mean");
  }
  return out;
}

SparseState sparse_initial_state(const SparseProblem& sp) {
  SparseState state;
  state.posterior.mean = Eigen::VectorXd::Zero(sp.k_mm.size());
  state.posterior.cov = sp.k_mm.lower * sp.k_mm.lower.transpose();
  state.posterior.log_det_cov = sp.k_mm.log_det();
  state.pg = pg_from_moments(propagate_moments(sp, state.posterior), sp.obs.layout);
  return state;
}

SparseState sparse_mean_field_sweep(SparseState state, const SparseProblem& sp, int n_iters) {
  if (n_iters < 0) throw InputError("sparse_mean_field_sweep: n_iters must be non-negative");
  for (int it = 0; it < n_iters; ++it) {
    state.pg = pg_from_moments(propagate_moments(sp, state.posterior), sp.obs.layout);
    SparseSites sites = sparse_site_matrices(state.pg, sp);
    state.posterior = sparse_update_q(sites, sp.k_mm);
  }
  return state;
}

static double log_cosh(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

ELBOBreakdown sparse_elbo_terms(const SparsePosterior& posterior, const PGState& pg,
                                const SparseProblem& sp) {
  const TaskLayout& layout = sp.obs.layout;
  if (pg.omega_mean.size() != layout.n_classification_points()) {
    throw InputError("sparse_elbo_terms: PG state length disagrees with layout");
  }
  PropagatedMoments moments = propagate_moments(sp, posterior);

  std::vector<double> a_parts;
  std::vector<double> b_parts;
  std::vector<double> c_parts;
  const double log_sqrt_2pi = 0.5 * std::log(2.0 * std::numbers::pi);

  int regression_index = 0;
  for (int t = 0; t < layout.n_tasks(); ++t) {
    const Task& task = layout.tasks()[t];
    const int off = layout.offset(t);
    const int n_t = layout.n_points(t);
    if (task.kind == TaskKind::kRegression) {
      const double s2 = sp.obs.noise_variance[regression_index++];
      const double log_norm = -0.5 * std::log(s2) - log_sqrt_2pi;
      for (int r = 0; r < n_t; ++r) {
        const int g = off + r;
        const double y = sp.obs.targets[g];
        a_parts.push_back(log_norm - (y * y - 2.0 * y * moments.mean[g] +
                                      moments.second_moment[g]) /
                                         (2.0 * s2));
      }
    } else {
      for (int r = 0; r < n_t; ++r) {
        const int g = off + r;
        const int j = g - layout.classification_offset();
        const double y = sp.obs.targets[g];
        b_parts.push_back(0.5 * y * moments.mean[g] -
                          0.5 * moments.second_moment[g] * pg.omega_mean[j] -
                          std::numbers::ln2);
        const double tilt = pg.tilt[j];
        c_parts.push_back(log_cosh(0.5 * tilt) - 0.25 * tilt * std::tanh(0.5 * tilt));
      }
    }
  }

  ELBOBreakdown out;
  out.term_a = pairwise_sum(a_parts);
  out.term_b = pairwise_sum(b_parts);
  out.term_c = pairwise_sum(c_parts);

  const Eigen::Index tm = sp.k_mm.size();
  Eigen::MatrixXd half = sp.k_mm.lower.triangularView<Eigen::Lower>().solve(posterior.cov);
  Eigen::MatrixXd whitened =
      sp.k_mm.lower.triangularView<Eigen::Lower>().solve(half.transpose());
  out.term_d = 0.5 * (sp.k_mm.log_det() - posterior.log_det_cov - static_cast<double>(tm) +
                      whitened.trace() + sp.k_mm.inv_quad(posterior.mean));
  out.total = out.term_a + out.term_b - out.term_c - out.term_d;
  if (!std::isfinite(out.total)) {
    throw NumericError("sparse_elbo_terms: non-finite ELBO");
  }
  return out;
}

double sparse_optimal_sigma2(const SparsePosterior& posterior, const SparseProblem& sp,
                             int task_id) {
  const TaskLayout& layout = sp.obs.layout;
  const int t = layout.index_of(task_id);
  if (layout.tasks()[t].kind != TaskKind::kRegression) {
    throw InputError("sparse_optimal_sigma2: task " + std::to_string(task_id) +
                     " is not regression");
  }
  PropagatedMoments moments = propagate_moments(sp, posterior);
  const int off = layout.offset(t);
  const int n_t = layout.n_points(t);
  std::vector<double> parts;
  parts.reserve(n_t);
  for (int r = 0; r < n_t; ++r) {
    const int g = off + r;
    const double y = sp.obs.targets[g];
    parts.push_back(y * y - 2.0 * y * moments.mean[g] + moments.second_moment[g]);
  }
  const double value = pairwise_sum(parts) / static_cast<double>(n_t);
  return std::max(value, kSigma2Floor);
}

Prediction sparse_predict(const std::vector<Basis>& bases, const MixingWeights& w,
                          const SparseProblem& sp, const SparsePosterior& posterior, int task_id,
                          const Eigen::VectorXd& x_star) {
  GaussianPosterior as_gaussian;
  as_gaussian.mean = posterior.mean;
  as_gaussian.cov = posterior.cov;
  as_gaussian.log_det_cov = posterior.log_det_cov;
  return predict(bases, w, sp.inducing_layout, sp.k_mm, as_gaussian, task_id, x_star);
}

ClientElboFn sparse_client_elbo(SparsePosterior posterior, PGState pg, ObservationSet obs,
                                InducingSet inducing) {
  return [posterior = std::move(posterior), pg = std::move(pg), obs = std::move(obs),
          inducing = std::move(inducing)](const GlobalPrior& probe) {
    ObservationSet local = obs;
    local.noise_variance = noise_for_layout(probe, local.layout);
    SparseProblem sp = build_sparse_problem(probe, local, inducing);
    return sparse_elbo_terms(posterior, pg, sp).total;
  };
}

}  // namespace fedmogp
