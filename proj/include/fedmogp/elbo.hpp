#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fedmogp/inference.hpp"
#include "fedmogp/kernels.hpp"
#include "fedmogp/mogp.hpp"

namespace fedmogp {

// Which global hyperparameter groups the server aggregates:
//   N : feature-map parameters only
//   K : + kernel hyperparameters
//   W : + mixing weights
//   A : + noise variances (closed form)
enum class AggregationMode { kN, kK, kW, kA };

AggregationMode aggregation_mode_from_string(const std::string& name);
std::string to_string(AggregationMode mode);

// Shared prior over every client's latent processes: the basis kernels and
// feature maps, the task-by-basis mixing weights, and per-regression-task
// observation noise keyed by task_id.
struct GlobalPrior {
  std::vector<Basis> bases;
  MixingWeights mixing;
  std::map<int, double> noise_variance;
};

void validate_prior(const GlobalPrior& prior);

// Noise variances for the layout's regression tasks, in layout order.
// Throws InputError when the prior has no entry for a regression task.
std::vector<double> noise_for_layout(const GlobalPrior& prior, const TaskLayout& layout);

// Evidence lower bound split into its four named pieces:
//   term_a  Gaussian expected log-likelihood (regression points)
//   term_b  augmented Bernoulli expected log-likelihood (classification)
//   term_c  KL of the PG factors from their prior
//   term_d  KL of the Gaussian factor from the latent prior
//   total = term_a + term_b - term_c - term_d, exactly as stored.
struct ELBOBreakdown {
  double term_a = 0.0;
  double term_b = 0.0;
  double term_c = 0.0;
  double term_d = 0.0;
  double total = 0.0;
};

ELBOBreakdown elbo_terms(const GaussianPosterior& posterior, const PGState& pg,
                         const ObservationSet& obs, const CholeskyFactor& k);

// Closed-form maximizer of the ELBO in one regression task's noise
// variance: mean of (y^2 - 2 y fbar + E[f^2]) over the task's points,
// floored at 1e-8.
double optimal_sigma2(const GaussianPosterior& posterior, const ObservationSet& obs, int task_id);

inline constexpr double kSigma2Floor = 1e-8;

// --- hyperparameter vectorization ------------------------------------------

// Selects which groups enter the packed parameter vector. Positive values
// (kernel hyperparameters, noise variances) are packed in log space.
struct HyperTargets {
  bool feature_params = false;
  bool kernel_params = false;
  bool mixing = false;
  bool noise = false;
};

// Server-side aggregation targets for a mode. Noise is never part of the
// gradient path: mode A updates it in closed form instead.
HyperTargets server_targets(AggregationMode mode);

// Client-side personalization targets: the groups the server leaves alone
// under this mode (feature-map parameters are always server-side).
HyperTargets client_targets(AggregationMode mode);

int packed_size(const GlobalPrior& prior, const HyperTargets& targets);
Eigen::VectorXd pack(const GlobalPrior& prior, const HyperTargets& targets);
GlobalPrior unpack(const GlobalPrior& prior, const HyperTargets& targets,
                   const Eigen::VectorXd& packed);

// L2 norms of the per-group parameter changes, for round logging.
std::map<std::string, double> param_change_norms(const GlobalPrior& before,
                                                 const GlobalPrior& after);

// --- averaged ELBO and its gradient -----------------------------------------

// Per-client evaluation of that client's ELBO at a probe prior, with its
// variational factors held fixed. The dense evaluator is built here; the
// inducing-point variant supplies its own.
using ClientElboFn = std::function<double(const GlobalPrior&)>;

ClientElboFn dense_client_elbo(GaussianPosterior posterior, PGState pg, ObservationSet obs);

// Mean of the client ELBO values (pairwise-summed, so payload order does
// not affect the value).
double averaged_elbo(const std::vector<ClientElboFn>& clients, const GlobalPrior& prior);

// Central finite-difference gradient of the averaged ELBO in the packed
// target vector. Per-coordinate step h = step_scale * 1e-5 * max(1, |u_j|).
Eigen::VectorXd hyper_gradient(const GlobalPrior& prior, const std::vector<ClientElboFn>& clients,
                               const HyperTargets& targets, double step_scale = 1.0);

// --- optimizer ---------------------------------------------------------------

// Adam-style ascent state over the packed target vector (weight decay 0).
struct AdamState {
  int step = 0;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  double learning_rate = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState make_adam_state(int n_params, double learning_rate);

struct OptimizerResult {
  GlobalPrior prior;
  AdamState state;
};

// One ascent step along the bias-corrected Adam direction. `step_scale`
// rescales the applied step only (the moment update is scale-free), which
// is what a backtracking line search needs.
OptimizerResult optimizer_step(const GlobalPrior& prior, const Eigen::VectorXd& gradient,
                               const HyperTargets& targets, const AdamState& state,
                               double step_scale = 1.0);

}  // namespace fedmogp
