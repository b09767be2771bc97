#include "fedmogp/federation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

#include "fedmogp/errors.hpp"
#include "fedmogp/linalg.hpp"
#include "fedmogp/logging.hpp"
#include "fedmogp/metrics.hpp"
#include "fedmogp/random.hpp"
#include "fedmogp/serialization.hpp"

namespace fedmogp {

namespace {

constexpr std::uint64_t kSampleTag = 0x5a3d7e19c4b2f081ULL;
constexpr std::uint64_t kInducingTag = 0x9c35ad1e0b47f26dULL;
constexpr int kMaxHalvings = 10;

// Relative slack for the server-side non-decrease check; absorbs the
// last-digit noise of re-evaluating the averaged bound.
double ascent_slack(double reference) { return 1e-10 * std::max(1.0, std::abs(reference)); }

ObservationSet make_observations(const GlobalPrior& prior, const StackedData& stacked) {
  ObservationSet obs;
  obs.layout = stacked.layout;
  obs.targets = stacked.targets;
  obs.noise_variance = noise_for_layout(prior, stacked.layout);
  validate_observations(obs);
  return obs;
}

SparsePosterior as_sparse(const GaussianPosterior& posterior) {
  SparsePosterior out;
  out.mean = posterior.mean;
  out.cov = posterior.cov;
  out.log_det_cov = posterior.log_det_cov;
  return out;
}

// The client's own ELBO as a function of a probe prior, with the uploaded
// variational factors frozen. Used identically by the client (one
// personalization step) and the server (aggregation); the server variant
// additionally pins the client-held groups to the uploaded values.
ClientElboFn payload_evaluator(const ClientPayload& payload, const ClientDataset& data,
                               const FederationConfig& cfg) {
  StackedData stacked = stack_training(data);
  ObservationSet obs;
  obs.layout = stacked.layout;
  obs.targets = stacked.targets;
  // The evaluator refills noise from each probe prior; placeholders keep the
  // set valid until then.
  int n_regression = 0;
  for (const Task& task : stacked.layout.tasks()) {
    if (task.kind == TaskKind::kRegression) ++n_regression;
  }
  obs.noise_variance.assign(static_cast<std::size_t>(n_regression), 1.0);
  if (!payload.sparse) {
    return dense_client_elbo(payload.posterior, payload.pg, std::move(obs));
  }
  InducingSet inducing =
      select_inducing(stacked.layout, cfg.inducing_m, inducing_seed(cfg.seed, payload.client_id));
  return sparse_client_elbo(as_sparse(payload.posterior), payload.pg, std::move(obs),
                            std::move(inducing));
}

// Evaluator as the server sees it: the client evaluates every probe with its
// own personalized values substituted for the groups the server leaves alone.
ClientElboFn server_view(ClientElboFn base, HyperTargets locals, Eigen::VectorXd local_params) {
  return [base = std::move(base), locals, local_params = std::move(local_params)](
             const GlobalPrior& probe) {
    return base(unpack(probe, locals, local_params));
  };
}

// Closed-form per-client noise maximizer for one regression task, dense or
// inducing-point, evaluated at the prior that produced the payload.
double payload_optimal_sigma2(const ClientPayload& payload, const ClientDataset& data,
                              const GlobalPrior& prior, const FederationConfig& cfg, int task_id) {
  StackedData stacked = stack_training(data);
  GlobalPrior merged = unpack(prior, client_targets(cfg.mode), payload.local_params);
  ObservationSet obs = make_observations(merged, stacked);
  if (!payload.sparse) return optimal_sigma2(payload.posterior, obs, task_id);
  InducingSet inducing =
      select_inducing(stacked.layout, cfg.inducing_m, inducing_seed(cfg.seed, payload.client_id));
  SparseProblem sp = build_sparse_problem(merged, obs, inducing);
  return sparse_optimal_sigma2(as_sparse(payload.posterior), sp, task_id);
}

nlohmann::json client_state_to_json(const ClientState& state) {
  return nlohmann::json{{"initialized", state.initialized},
                        {"local_params", vector_to_json(state.local_params)},
                        {"local_opt", adam_to_json(state.local_opt)}};
}

ClientState client_state_from_json(const nlohmann::json& j) {
  ClientState state;
  state.initialized = j.at("initialized").get<bool>();
  state.local_params = vector_from_json(j.at("local_params"));
  state.local_opt = adam_from_json(j.at("local_opt"));
  return state;
}

GlobalPrior round_trip_prior(const GlobalPrior& prior) {
  return prior_from_json(nlohmann::json::parse(prior_to_json(prior).dump()));
}

ClientPayload round_trip_payload(const ClientPayload& payload) {
  return payload_from_json(nlohmann::json::parse(payload_to_json(payload).dump()));
}

// Scores one client round on every task's evaluation rows, appending one
// metric row per task (and, when requested, one prediction row per point).
void score_client_round(int round, const ClientDataset& data, const ClientRoundResult& result,
                        std::vector<MetricRecord>& metrics,
                        std::vector<PredictionRecord>* predictions) {
  SparsePosterior sparse_posterior;
  if (result.sparse_problem) sparse_posterior = as_sparse(result.payload.posterior);
  for (const TaskData& task : data.tasks) {
    const std::vector<int>& rows = eval_indices(task);
    Eigen::VectorXd means(static_cast<Eigen::Index>(rows.size()));
    Eigen::VectorXd targets(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Eigen::VectorXd x = task.inputs.row(rows[i]).transpose();
      Prediction pred;
      if (result.sparse_problem) {
        pred = sparse_predict(result.local_prior.bases, result.local_prior.mixing,
                              *result.sparse_problem, sparse_posterior, task.task_id, x);
      } else {
        pred = predict(result.local_prior.bases, result.local_prior.mixing, result.train_layout,
                       *result.k, result.payload.posterior, task.task_id, x);
      }
      means[static_cast<Eigen::Index>(i)] = pred.mean;
      targets[static_cast<Eigen::Index>(i)] = task.targets[rows[i]];
      if (predictions != nullptr) {
        PredictionRecord record;
        record.client_id = data.client_id;
        record.task_id = task.task_id;
        record.kind = task.kind;
        record.x = x;
        record.mean = pred.mean;
        record.variance = pred.variance;
        record.target = task.targets[rows[i]];
        record.class_probability = pred.class_probability;
        predictions->push_back(std::move(record));
      }
    }
    MetricRecord record;
    record.round = round;
    record.client_id = data.client_id;
    record.task_id = task.task_id;
    record.kind = task.kind;
    record.score =
        task.kind == TaskKind::kRegression ? mse(means, targets) : accuracy(means, targets);
    record.elbo = result.payload.elbo;
    metrics.push_back(std::move(record));
  }
}

}  // namespace

void validate_federation_config(const FederationConfig& cfg) {
  if (cfg.rounds < 1) throw InputError("federation config: rounds must be >= 1");
  if (cfg.n_clients < 1) throw InputError("federation config: n_clients must be >= 1");
  if (cfg.sample_size < 1 || cfg.sample_size > cfg.n_clients) {
    throw InputError("federation config: sample_size must be in [1, n_clients]");
  }
  if (cfg.mf_iters < 1) throw InputError("federation config: mf_iters must be >= 1");
  if (cfg.local_iters < 1) throw InputError("federation config: local_iters must be >= 1");
  if (cfg.inducing_m < 0) throw InputError("federation config: inducing_m must be >= 0");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw InputError("federation config: learning_rate must be positive and finite");
  }
}

std::vector<int> sample_clients(int n_clients, int sample_size, int round, std::uint64_t seed) {
  if (n_clients < 1 || sample_size < 1 || sample_size > n_clients) {
    throw InputError("sample_clients: need 1 <= sample_size <= n_clients");
  }
  if (round < 0) throw InputError("sample_clients: round must be >= 0");
  std::mt19937_64 engine =
      make_engine(derive_seed(derive_seed(seed, kSampleTag), static_cast<std::uint64_t>(round)));
  std::vector<int> ids(static_cast<std::size_t>(n_clients));
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = 0; i < sample_size; ++i) {
    std::uniform_int_distribution<int> pick(i, n_clients - 1);
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(pick(engine))]);
  }
  ids.resize(static_cast<std::size_t>(sample_size));
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::uint64_t inducing_seed(std::uint64_t base_seed, int client_id) {
  return derive_seed(derive_seed(base_seed, kInducingTag), static_cast<std::uint64_t>(client_id));
}

nlohmann::json payload_to_json(const ClientPayload& payload) {
  return nlohmann::json{{"client_id", payload.client_id},
                        {"sparse", payload.sparse},
                        {"posterior", posterior_to_json(payload.posterior)},
                        {"pg", pg_to_json(payload.pg)},
                        {"elbo", elbo_to_json(payload.elbo)},
                        {"local_params", vector_to_json(payload.local_params)}};
}

ClientPayload payload_from_json(const nlohmann::json& j) {
  try {
    ClientPayload payload;
    payload.client_id = j.at("client_id").get<int>();
    payload.sparse = j.at("sparse").get<bool>();
    payload.posterior = posterior_from_json(j.at("posterior"));
    payload.pg = pg_from_json(j.at("pg"));
    payload.elbo = elbo_from_json(j.at("elbo"));
    payload.local_params = vector_from_json(j.at("local_params"));
    return payload;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("client payload: ") + e.what());
  }
}

ClientRoundResult run_client(const GlobalPrior& broadcast, const ClientDataset& data,
                             const FederationConfig& cfg, ClientState& state) {
  validate_dataset(data);
  const HyperTargets locals = client_targets(cfg.mode);
  if (!state.initialized) {
    state.local_params = pack(broadcast, locals);
    state.local_opt = make_adam_state(static_cast<int>(state.local_params.size()),
                                      cfg.learning_rate);
    state.initialized = true;
  }
  const GlobalPrior local_prior = unpack(broadcast, locals, state.local_params);

  StackedData stacked = stack_training(data);
  ObservationSet obs = make_observations(local_prior, stacked);

  ClientRoundResult result;
  result.local_prior = local_prior;
  result.train_layout = stacked.layout;
  result.payload.client_id = data.client_id;
  result.payload.local_params = state.local_params;

  if (cfg.inducing_m > 0) {
    InducingSet inducing =
        select_inducing(stacked.layout, cfg.inducing_m, inducing_seed(cfg.seed, data.client_id));
    SparseProblem sp = build_sparse_problem(local_prior, obs, inducing);
    SparseState st = (cfg.warm_start && state.warm_sparse) ? *state.warm_sparse
                                                           : sparse_initial_state(sp);
    for (int t = 0; t < cfg.local_iters; ++t) st = sparse_mean_field_sweep(st, sp, cfg.mf_iters);
    result.payload.sparse = true;
    result.payload.posterior.mean = st.posterior.mean;
    result.payload.posterior.cov = st.posterior.cov;
    result.payload.posterior.log_det_cov = st.posterior.log_det_cov;
    result.payload.pg = st.pg;
    result.payload.elbo = sparse_elbo_terms(st.posterior, st.pg, sp);
    if (cfg.warm_start) state.warm_sparse = st;
    result.sparse_problem = std::move(sp);
  } else {
    GramMatrix gram = assemble_k(stacked.layout, local_prior.mixing, local_prior.bases);
    CholeskyFactor k = stabilized_cholesky(gram, "client prior covariance");
    MeanFieldState st = (cfg.warm_start && state.warm_dense) ? *state.warm_dense
                                                             : initial_state(k, stacked.layout);
    for (int t = 0; t < cfg.local_iters; ++t) st = mean_field_sweep(st, obs, k, cfg.mf_iters);
    result.payload.posterior = st.posterior;
    result.payload.pg = st.pg;
    result.payload.elbo = elbo_terms(st.posterior, st.pg, obs, k);
    if (cfg.warm_start) state.warm_dense = st;
    result.k = std::move(k);
  }

  // One ascent step on the client-held groups against this client's own
  // bound. The uploaded payload carries the pre-step values: they are the
  // ones consistent with the uploaded variational factors.
  if (state.local_params.size() > 0) {
    try {
      ClientElboFn own = payload_evaluator(result.payload, data, cfg);
      std::vector<ClientElboFn> self{std::move(own)};
      const Eigen::VectorXd grad = hyper_gradient(local_prior, self, locals);
      OptimizerResult stepped = optimizer_step(local_prior, grad, locals, state.local_opt);
      state.local_params = pack(stepped.prior, locals);
      state.local_opt = std::move(stepped.state);
    } catch (const NumericError& e) {
      log::warn(std::string("client ") + std::to_string(data.client_id) +
                ": personalization step skipped: " + e.what());
    }
  }
  return result;
}

ServerStepResult server_step(const GlobalPrior& prior, const std::vector<ClientPayload>& payloads,
                             const std::vector<const ClientDataset*>& datasets,
                             const FederationConfig& cfg, const AdamState& opt_state) {
  if (payloads.empty()) throw InputError("server_step: no payloads");
  if (payloads.size() != datasets.size()) {
    throw InputError("server_step: payload/dataset count mismatch");
  }
  const HyperTargets locals = client_targets(cfg.mode);
  std::vector<ClientElboFn> evaluators;
  evaluators.reserve(payloads.size());
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    evaluators.push_back(server_view(payload_evaluator(payloads[i], *datasets[i], cfg), locals,
                                     payloads[i].local_params));
  }

  ServerStepResult result;
  result.prior = prior;
  result.opt_state = opt_state;
  result.elbo_before = averaged_elbo(evaluators, prior);
  result.elbo_after = result.elbo_before;

  const HyperTargets targets = server_targets(cfg.mode);
  const int n = packed_size(prior, targets);

  // Closed-form noise refresh (mode A): per-task average of each client's
  // maximizer, independent of the gradient candidate so computed once.
  std::map<int, double> refreshed_noise;
  if (cfg.mode == AggregationMode::kA) {
    for (const auto& [task_id, sigma2] : prior.noise_variance) {
      (void)sigma2;
      std::vector<double> values;
      values.reserve(payloads.size());
      for (std::size_t i = 0; i < payloads.size(); ++i) {
        values.push_back(payload_optimal_sigma2(payloads[i], *datasets[i], prior, cfg, task_id));
      }
      refreshed_noise[task_id] = pairwise_sum(values) / static_cast<double>(values.size());
    }
  }

  if (n == 0 && refreshed_noise.empty()) return result;  // nothing to aggregate

  Eigen::VectorXd grad;
  if (n > 0) {
    try {
      grad = hyper_gradient(prior, evaluators, targets);
    } catch (const NumericError& e) {
      log::warn(std::string("server step skipped (gradient): ") + e.what());
      result.skipped = true;
      return result;
    }
  }

  double scale = 1.0;
  int halvings = 0;
  while (true) {
    GlobalPrior candidate = prior;
    AdamState candidate_state = opt_state;
    if (n > 0) {
      OptimizerResult stepped = optimizer_step(prior, grad, targets, opt_state, scale);
      candidate = std::move(stepped.prior);
      candidate_state = std::move(stepped.state);
    }
    for (const auto& [task_id, sigma2] : refreshed_noise) candidate.noise_variance[task_id] = sigma2;

    double value = -std::numeric_limits<double>::infinity();
    try {
      value = averaged_elbo(evaluators, candidate);
    } catch (const NumericError& e) {
      log::debug(std::string("candidate prior rejected: ") + e.what());
    }
    if (!cfg.line_search || value >= result.elbo_before - ascent_slack(result.elbo_before)) {
      result.prior = std::move(candidate);
      result.opt_state = std::move(candidate_state);
      result.elbo_after = value;
      result.line_search_halvings = halvings;
      return result;
    }
    if (halvings >= kMaxHalvings) {
      log::warn("server step skipped: no step scale kept the averaged bound from decreasing");
      result.skipped = true;
      result.line_search_halvings = halvings;
      return result;
    }
    scale *= 0.5;
    ++halvings;
  }
}

nlohmann::json round_log_to_json(const RoundLog& log) {
  return nlohmann::json{{"round", log.round},
                        {"sampled", log.sampled},
                        {"elbo_before", log.elbo_before},
                        {"elbo_after", log.elbo_after},
                        {"param_change_norms", log.param_change_norms},
                        {"line_search_halvings", log.line_search_halvings},
                        {"skipped", log.skipped}};
}

nlohmann::json snapshot_to_json(const FederationSnapshot& snapshot) {
  nlohmann::json states = nlohmann::json::array();
  for (const ClientState& state : snapshot.client_states) {
    states.push_back(client_state_to_json(state));
  }
  return nlohmann::json{{"version", 1},
                        {"next_round", snapshot.next_round},
                        {"prior", prior_to_json(snapshot.prior)},
                        {"opt_state", adam_to_json(snapshot.opt_state)},
                        {"client_states", std::move(states)}};
}

FederationSnapshot snapshot_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) {
      throw ParseError("federation snapshot: unsupported version");
    }
    FederationSnapshot snapshot;
    snapshot.next_round = j.at("next_round").get<int>();
    snapshot.prior = prior_from_json(j.at("prior"));
    snapshot.opt_state = adam_from_json(j.at("opt_state"));
    for (const nlohmann::json& state : j.at("client_states")) {
      snapshot.client_states.push_back(client_state_from_json(state));
    }
    return snapshot;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("federation snapshot: ") + e.what());
  }
}

FederationResult run_federation(const FederationConfig& cfg, const GlobalPrior& init_prior,
                                const std::vector<ClientDataset>& train_clients,
                                const std::vector<ClientDataset>& new_clients,
                                const CheckpointSink& checkpoint_sink,
                                const FederationSnapshot* resume) {
  validate_federation_config(cfg);
  validate_prior(init_prior);
  if (static_cast<int>(train_clients.size()) != cfg.n_clients) {
    throw InputError("run_federation: dataset count disagrees with n_clients");
  }
  for (const ClientDataset& dataset : train_clients) validate_dataset(dataset);
  for (const ClientDataset& dataset : new_clients) validate_dataset(dataset);

  GlobalPrior prior = round_trip_prior(init_prior);
  AdamState opt_state =
      make_adam_state(packed_size(prior, server_targets(cfg.mode)), cfg.learning_rate);
  std::vector<ClientState> states(train_clients.size());
  int start_round = 0;
  if (resume != nullptr) {
    prior = resume->prior;
    opt_state = resume->opt_state;
    if (resume->client_states.size() != states.size()) {
      throw InputError("run_federation: snapshot client count disagrees with n_clients");
    }
    states = resume->client_states;
    start_round = resume->next_round;
    if (start_round < 0 || start_round > cfg.rounds) {
      throw InputError("run_federation: snapshot round outside [0, rounds]");
    }
  }

  FederationResult result;
  for (int round = start_round; round < cfg.rounds; ++round) {
    const std::vector<int> sampled =
        sample_clients(cfg.n_clients, cfg.sample_size, round, cfg.seed);
    const GlobalPrior broadcast = round_trip_prior(prior);

    std::vector<ClientPayload> payloads;
    std::vector<const ClientDataset*> datasets;
    payloads.reserve(sampled.size());
    datasets.reserve(sampled.size());
    for (int z : sampled) {
      const ClientDataset& data = train_clients[static_cast<std::size_t>(z)];
      ClientRoundResult client =
          run_client(broadcast, data, cfg, states[static_cast<std::size_t>(z)]);
      payloads.push_back(round_trip_payload(client.payload));
      datasets.push_back(&data);
      score_client_round(round, data, client, result.metrics, nullptr);
    }

    ServerStepResult stepped = server_step(prior, payloads, datasets, cfg, opt_state);

    RoundLog log;
    log.round = round;
    log.sampled = sampled;
    log.elbo_before = stepped.elbo_before;
    log.elbo_after = stepped.elbo_after;
    log.param_change_norms = param_change_norms(prior, stepped.prior);
    log.line_search_halvings = stepped.line_search_halvings;
    log.skipped = stepped.skipped;
    if (log::enabled(log::Level::kInfo)) {
      log::info("round " + std::to_string(round) + ": averaged ELBO " +
                std::to_string(stepped.elbo_before) + " -> " + std::to_string(stepped.elbo_after) +
                (stepped.skipped ? " (step skipped)" : ""));
    }
    result.rounds.push_back(std::move(log));

    prior = std::move(stepped.prior);
    opt_state = std::move(stepped.opt_state);

    if (checkpoint_sink) {
      FederationSnapshot snapshot;
      snapshot.next_round = round + 1;
      snapshot.prior = prior;
      snapshot.opt_state = opt_state;
      snapshot.client_states = states;
      checkpoint_sink(snapshot);
    }
  }

  // Final evaluation: every training client (with its personalized state)
  // and every held-out client (from scratch) runs one round against the
  // final prior; no aggregation follows.
  const GlobalPrior broadcast = round_trip_prior(prior);
  for (std::size_t z = 0; z < train_clients.size(); ++z) {
    ClientRoundResult client = run_client(broadcast, train_clients[z], cfg, states[z]);
    score_client_round(cfg.rounds, train_clients[z], client, result.metrics, &result.predictions);
  }
  for (const ClientDataset& data : new_clients) {
    ClientState fresh;
    ClientRoundResult client = run_client(broadcast, data, cfg, fresh);
    score_client_round(cfg.rounds, data, client, result.metrics, &result.predictions);
  }

  result.prior = std::move(prior);
  result.opt_state = std::move(opt_state);
  return result;
}

}  // namespace fedmogp
