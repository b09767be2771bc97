#include "fedmogp/elbo.hpp"

#include <cmath>
#include <numbers>

#include "fedmogp/errors.hpp"

namespace fedmogp {

AggregationMode aggregation_mode_from_string(const std::string& name) {
  if (name == "N") return AggregationMode::kN;
  if (name == "K") return AggregationMode::kK;
  if (name == "W") return AggregationMode::kW;
  if (name == "A") return AggregationMode::kA;
  throw InputError("unknown aggregation mode '" + name + "' (expected N|K|W|A)");
}

std::string to_string(AggregationMode mode) {
  switch (mode) {
    case AggregationMode::kN: return "N";
    case AggregationMode::kK: return "K";
    case AggregationMode::kW: return "W";
    case AggregationMode::kA: return "A";
  }
  throw InputError("invalid aggregation mode enum value");
}

void validate_prior(const GlobalPrior& prior) {
  if (prior.bases.empty()) throw InputError("prior: at least one basis required");
  if (prior.mixing.cols() != static_cast<Eigen::Index>(prior.bases.size())) {
    throw InputError("prior: mixing weight columns disagree with basis count");
  }
  if (!prior.mixing.allFinite()) throw NumericError("prior: non-finite mixing weights");
  for (const auto& [task_id, s2] : prior.noise_variance) {
    if (!(s2 > 0.0) || !std::isfinite(s2)) {
      throw InputError("prior: noise variance for task " + std::to_string(task_id) +
                       " must be positive and finite");
    }
  }
}

std::vector<double> noise_for_layout(const GlobalPrior& prior, const TaskLayout& layout) {
  std::vector<double> out;
  for (const Task& t : layout.tasks()) {
    if (t.kind != TaskKind::kRegression) continue;
    auto it = prior.noise_variance.find(t.task_id);
    if (it == prior.noise_variance.end()) {
      throw InputError("prior: no noise variance for regression task " +
                       std::to_string(t.task_id));
    }
    out.push_back(it->second);
  }
  return out;
}

// log(cosh(x)) without overflow for large |x|.
static double log_cosh(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

ELBOBreakdown elbo_terms(const GaussianPosterior& posterior, const PGState& pg,
                         const ObservationSet& obs, const CholeskyFactor& k) {
  validate_observations(obs);
  const TaskLayout& layout = obs.layout;
  const Eigen::Index n = layout.total_points();
  if (posterior.mean.size() != n || k.size() != n) {
    throw InputError("elbo_terms: posterior/factor dimensions disagree with layout");
  }
  if (pg.omega_mean.size() != layout.n_classification_points()) {
    throw InputError("elbo_terms: PG state length disagrees with layout");
  }

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
      const double s2 = obs.noise_variance[regression_index++];
      const double log_norm = -0.5 * std::log(s2) - log_sqrt_2pi;
      for (int r = 0; r < n_t; ++r) {
        const int g = off + r;
        const double y = obs.targets[g];
        const double fbar = posterior.mean[g];
        const double f2 = posterior.cov(g, g) + fbar * fbar;
        a_parts.push_back(log_norm - (y * y - 2.0 * y * fbar + f2) / (2.0 * s2));
      }
    } else {
      for (int r = 0; r < n_t; ++r) {
        const int g = off + r;
        const int j = g - layout.classification_offset();
        const double y = obs.targets[g];
        const double fbar = posterior.mean[g];
        const double f2 = posterior.cov(g, g) + fbar * fbar;
        b_parts.push_back(0.5 * y * fbar - 0.5 * f2 * pg.omega_mean[j] - std::numbers::ln2);
        const double tilt = pg.tilt[j];
        c_parts.push_back(log_cosh(0.5 * tilt) - 0.25 * tilt * std::tanh(0.5 * tilt));
      }
    }
  }

  ELBOBreakdown out;
  out.term_a = pairwise_sum(a_parts);
  out.term_b = pairwise_sum(b_parts);
  out.term_c = pairwise_sum(c_parts);

  // KL(q(f) || N(0, K)) from the shared prior factor: the trace term runs
  // through two triangular solves, never an explicit inverse.
  Eigen::MatrixXd half = k.lower.triangularView<Eigen::Lower>().solve(posterior.cov);
  Eigen::MatrixXd whitened =
      k.lower.triangularView<Eigen::Lower>().solve(half.transpose());
  const double trace = whitened.trace();
  const double quad = k.inv_quad(posterior.mean);
  out.term_d = 0.5 * (k.log_det() - posterior.log_det_cov - static_cast<double>(n) + trace + quad);

  out.total = out.term_a + out.term_b - out.term_c - out.term_d;
  if (!std::isfinite(out.total)) {
    throw NumericError("elbo_terms: non-finite ELBO");
  }
  return out;
}

double optimal_sigma2(const GaussianPosterior& posterior, const ObservationSet& obs,
                      int task_id) {
  validate_observations(obs);
  const TaskLayout& layout = obs.layout;
  const int t = layout.index_of(task_id);
  if (layout.tasks()[t].kind != TaskKind::kRegression) {
    throw InputError("optimal_sigma2: task " + std::to_string(task_id) + " is not regression");
  }
  if (posterior.mean.size() != layout.total_points()) {
    throw InputError("optimal_sigma2: posterior dimension disagrees with layout");
  }
  const int off = layout.offset(t);
  const int n_t = layout.n_points(t);
  std::vector<double> parts;
  parts.reserve(n_t);
  for (int r = 0; r < n_t; ++r) {
    const int g = off + r;
    const double y = obs.targets[g];
    const double fbar = posterior.mean[g];
    const double f2 = posterior.cov(g, g) + fbar * fbar;
    parts.push_back(y * y - 2.0 * y * fbar + f2);
  }
  return std::max(kSigma2Floor, pairwise_sum(parts) / static_cast<double>(n_t));
}

HyperTargets server_targets(AggregationMode mode) {
  HyperTargets t;
  t.feature_params = true;
  t.kernel_params = mode != AggregationMode::kN;
  t.mixing = mode == AggregationMode::kW || mode == AggregationMode::kA;
  t.noise = false;
  return t;
}

HyperTargets client_targets(AggregationMode mode) {
  HyperTargets server = server_targets(mode);
  HyperTargets t;
  t.feature_params = false;
  t.kernel_params = !server.kernel_params;
  t.mixing = !server.mixing;
  t.noise = mode != AggregationMode::kA;
  return t;
}

int packed_size(const GlobalPrior& prior, const HyperTargets& targets) {
  int n = 0;
  if (targets.kernel_params) {
    for (const Basis& b : prior.bases) {
      if (b.kernel.uses_phi0()) ++n;
      if (b.kernel.uses_phi1()) ++n;
    }
  }
  if (targets.feature_params) {
    for (const Basis& b : prior.bases) n += b.map.n_params();
  }
  if (targets.mixing) n += static_cast<int>(prior.mixing.size());
  if (targets.noise) n += static_cast<int>(prior.noise_variance.size());
  return n;
}

Eigen::VectorXd pack(const GlobalPrior& prior, const HyperTargets& targets) {
  Eigen::VectorXd out(packed_size(prior, targets));
  int i = 0;
  if (targets.kernel_params) {
    for (const Basis& b : prior.bases) {
      if (b.kernel.uses_phi0()) out[i++] = b.kernel.log_phi0();
      if (b.kernel.uses_phi1()) out[i++] = b.kernel.log_phi1();
    }
  }
  if (targets.feature_params) {
    for (const Basis& b : prior.bases) {
      out.segment(i, b.map.n_params()) = b.map.params();
      i += b.map.n_params();
    }
  }
  if (targets.mixing) {
    for (Eigen::Index r = 0; r < prior.mixing.rows(); ++r) {
      for (Eigen::Index c = 0; c < prior.mixing.cols(); ++c) {
        out[i++] = prior.mixing(r, c);
      }
    }
  }
  if (targets.noise) {
    for (const auto& [task_id, s2] : prior.noise_variance) out[i++] = std::log(s2);
  }
  return out;
}

GlobalPrior unpack(const GlobalPrior& prior, const HyperTargets& targets,
                   const Eigen::VectorXd& packed) {
  if (packed.size() != packed_size(prior, targets)) {
    throw InputError("unpack: packed vector length disagrees with targets");
  }
  if (!packed.allFinite()) throw NumericError("unpack: non-finite packed parameters");
  GlobalPrior out = prior;
  int i = 0;
  if (targets.kernel_params) {
    for (Basis& b : out.bases) {
      if (b.kernel.uses_phi0()) b.kernel.set_log_phi0(packed[i++]);
      if (b.kernel.uses_phi1()) b.kernel.set_log_phi1(packed[i++]);
    }
  }
  if (targets.feature_params) {
    for (Basis& b : out.bases) {
      b.map.set_params(packed.segment(i, b.map.n_params()));
      i += b.map.n_params();
    }
  }
  if (targets.mixing) {
    for (Eigen::Index r = 0; r < out.mixing.rows(); ++r) {
      for (Eigen::Index c = 0; c < out.mixing.cols(); ++c) {
        out.mixing(r, c) = packed[i++];
      }
    }
  }
  if (targets.noise) {
    for (auto& [task_id, s2] : out.noise_variance) s2 = std::exp(packed[i++]);
  }
  return out;
}

std::map<std::string, double> param_change_norms(const GlobalPrior& before,
                                                 const GlobalPrior& after) {
  auto norm_of = [&](const HyperTargets& t) {
    Eigen::VectorXd a = pack(before, t);
    Eigen::VectorXd b = pack(after, t);
    return (b - a).norm();
  };
  std::map<std::string, double> out;
  out["kernel"] = norm_of(HyperTargets{false, true, false, false});
  out["feature_map"] = norm_of(HyperTargets{true, false, false, false});
  out["mixing"] = norm_of(HyperTargets{false, false, true, false});
  out["noise"] = norm_of(HyperTargets{false, false, false, true});
  return out;
}

ClientElboFn dense_client_elbo(GaussianPosterior posterior, PGState pg, ObservationSet obs) {
  return [posterior = std::move(posterior), pg = std::move(pg),
          obs = std::move(obs)](const GlobalPrior& probe) {
    ObservationSet local = obs;
    local.noise_variance = noise_for_layout(probe, local.layout);
    GramMatrix k = assemble_k(local.layout, probe.mixing, probe.bases);
    CholeskyFactor chol = stabilized_cholesky(k, "client prior covariance");
    return elbo_terms(posterior, pg, local, chol).total;
  };
}

double averaged_elbo(const std::vector<ClientElboFn>& clients, const GlobalPrior& prior) {
  if (clients.empty()) throw InputError("averaged_elbo: no clients");
  std::vector<double> values;
  values.reserve(clients.size());
  for (const ClientElboFn& fn : clients) values.push_back(fn(prior));
  return pairwise_sum(values) / static_cast<double>(clients.size());
}

Eigen::VectorXd hyper_gradient(const GlobalPrior& prior, const std::vector<ClientElboFn>& clients,
                               const HyperTargets& targets, double step_scale) {
  if (!(step_scale > 0.0)) throw InputError("hyper_gradient: step_scale must be positive");
  const Eigen::VectorXd u = pack(prior, targets);
  Eigen::VectorXd grad(u.size());
  for (Eigen::Index j = 0; j < u.size(); ++j) {
    const double h = step_scale * 1e-5 * std::max(1.0, std::abs(u[j]));
    Eigen::VectorXd up = u;
    Eigen::VectorXd down = u;
    up[j] += h;
    down[j] -= h;
    const double hi = averaged_elbo(clients, unpack(prior, targets, up));
    const double lo = averaged_elbo(clients, unpack(prior, targets, down));
    grad[j] = (hi - lo) / (2.0 * h);
  }
  if (!grad.allFinite()) throw NumericError("hyper_gradient: non-finite gradient");
  return grad;
}

AdamState make_adam_state(int n_params, double learning_rate) {
  if (n_params < 0) throw InputError("make_adam_state: negative parameter count");
  if (!(learning_rate > 0.0)) throw InputError("make_adam_state: learning rate must be positive");
  AdamState s;
  s.first_moment = Eigen::VectorXd::Zero(n_params);
  s.second_moment = Eigen::VectorXd::Zero(n_params);
  s.learning_rate = learning_rate;
  return s;
}

OptimizerResult optimizer_step(const GlobalPrior& prior, const Eigen::VectorXd& gradient,
                               const HyperTargets& targets, const AdamState& state,
                               double step_scale) {
  const int n = packed_size(prior, targets);
  if (gradient.size() != n) {
    throw InputError("optimizer_step: gradient length disagrees with targets");
  }
  if (state.first_moment.size() != n || state.second_moment.size() != n) {
    throw InputError("optimizer_step: optimizer state length disagrees with targets");
  }
  if (!gradient.allFinite()) throw NumericError("optimizer_step: non-finite gradient");

  OptimizerResult out;
  out.state = state;
  out.state.step = state.step + 1;
  out.state.first_moment = state.beta1 * state.first_moment + (1.0 - state.beta1) * gradient;
  out.state.second_moment =
      state.beta2 * state.second_moment +
      (1.0 - state.beta2) * gradient.cwiseProduct(gradient);

  const double bc1 = 1.0 - std::pow(state.beta1, out.state.step);
  const double bc2 = 1.0 - std::pow(state.beta2, out.state.step);
  Eigen::VectorXd direction =
      (out.state.first_moment / bc1).array() /
      ((out.state.second_moment / bc2).array().sqrt() + state.epsilon);

  Eigen::VectorXd u = pack(prior, targets);
  u += step_scale * state.learning_rate * direction;
  out.prior = unpack(prior, targets, u);
  return out;
}

}  // namespace fedmogp
