#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "fedmogp/data.hpp"
#include "fedmogp/elbo.hpp"
#include "fedmogp/inference.hpp"
#include "fedmogp/sparse.hpp"

namespace fedmogp {

struct FederationConfig {
  int rounds = 20;       // server communication rounds
  int n_clients = 5;     // training clients
  int sample_size = 5;   // clients drawn per round
  int mf_iters = 2;      // alternations per local update
  int local_iters = 2;   // local updates per round
  AggregationMode mode = AggregationMode::kA;
  int inducing_m = 0;  // 0 = exact (dense) client inference
  double learning_rate = 1e-2;
  std::uint64_t seed = 1;
  bool line_search = true;  // server-side non-decrease safeguard
  bool warm_start = false;  // carry client posteriors across rounds
};

void validate_federation_config(const FederationConfig& cfg);

// Uniform without-replacement draw of `sample_size` client ids out of
// [0, n_clients), deterministic in (seed, round); returned ascending.
std::vector<int> sample_clients(int n_clients, int sample_size, int round, std::uint64_t seed);

// Seed that fixes a client's inducing-point selection; shared between the
// client (selection) and the in-process server evaluator (reconstruction)
// so the locations themselves never travel.
std::uint64_t inducing_seed(std::uint64_t base_seed, int client_id);

// What a client uploads. Variational moments and the ELBO breakdown only:
// no inputs, no targets, no inducing locations. For inducing-point clients
// the posterior is over the stacked inducing outputs.
struct ClientPayload {
  int client_id = 0;
  bool sparse = false;
  GaussianPosterior posterior;
  PGState pg;
  ELBOBreakdown elbo;
  // Client-held values of the groups the server does not aggregate,
  // packed under client_targets(mode).
  Eigen::VectorXd local_params;
};

nlohmann::json payload_to_json(const ClientPayload& payload);
ClientPayload payload_from_json(const nlohmann::json& j);

// Client-side state that persists across rounds and never leaves the
// client: personalized hyperparameters, their optimizer state, and (when
// warm starts are on) the last variational state.
struct ClientState {
  bool initialized = false;
  Eigen::VectorXd local_params;
  AdamState local_opt;
  std::optional<MeanFieldState> warm_dense;
  std::optional<SparseState> warm_sparse;
};

// Everything a client round produces. The payload is what the server sees;
// the rest stays with the runner for evaluation.
struct ClientRoundResult {
  ClientPayload payload;
  GlobalPrior local_prior;
  TaskLayout train_layout;
  std::optional<CholeskyFactor> k;               // dense path
  std::optional<SparseProblem> sparse_problem;   // inducing-point path
};

// One client round: merge the broadcast prior with the client's
// personalized values, re-initialize the variational state from that prior
// (unless warm starts are on), run `local_iters` sweeps of `mf_iters`
// alternations, then take one finite-difference ascent step on the
// personalized groups against the client's own ELBO.
ClientRoundResult run_client(const GlobalPrior& broadcast, const ClientDataset& data,
                             const FederationConfig& cfg, ClientState& state);

struct ServerStepResult {
  GlobalPrior prior;
  AdamState opt_state;
  double elbo_before = 0.0;
  double elbo_after = 0.0;
  int line_search_halvings = 0;
  bool skipped = false;
};

// One aggregation step: finite-difference gradient of the averaged ELBO
// over the mode's server-side groups, an Adam-style ascent step (halving
// the applied step up to 10 times until the averaged ELBO does not
// decrease, when the line search is enabled), and for mode A the
// closed-form noise update averaged across clients. `datasets` must align
// with `payloads` (the in-process stand-in for the clients' own evaluation
// of the probe priors the server proposes).
ServerStepResult server_step(const GlobalPrior& prior, const std::vector<ClientPayload>& payloads,
                             const std::vector<const ClientDataset*>& datasets,
                             const FederationConfig& cfg, const AdamState& opt_state);

struct RoundLog {
  int round = 0;
  std::vector<int> sampled;
  double elbo_before = 0.0;
  double elbo_after = 0.0;
  std::map<std::string, double> param_change_norms;
  int line_search_halvings = 0;
  bool skipped = false;
};

nlohmann::json round_log_to_json(const RoundLog& log);

struct MetricRecord {
  int round = 0;  // training rounds 0..T-1; T marks the final evaluation
  int client_id = 0;
  int task_id = 0;
  TaskKind kind = TaskKind::kRegression;
  double score = 0.0;  // regression: MSE, classification: accuracy
  ELBOBreakdown elbo;  // client-level breakdown, repeated on each task row
};

struct PredictionRecord {
  int client_id = 0;
  int task_id = 0;
  TaskKind kind = TaskKind::kRegression;
  Eigen::VectorXd x;
  double mean = 0.0;
  double variance = 0.0;
  double target = 0.0;
  std::optional<double> class_probability;
};

struct FederationResult {
  GlobalPrior prior;
  AdamState opt_state;
  std::vector<RoundLog> rounds;
  std::vector<MetricRecord> metrics;
  std::vector<PredictionRecord> predictions;  // final evaluation only
};

// Serializable training snapshot for checkpoint/resume.
struct FederationSnapshot {
  int next_round = 0;
  GlobalPrior prior;
  AdamState opt_state;
  std::vector<ClientState> client_states;  // warm states are not persisted
};

nlohmann::json snapshot_to_json(const FederationSnapshot& snapshot);
FederationSnapshot snapshot_from_json(const nlohmann::json& j);

using CheckpointSink = std::function<void(const FederationSnapshot&)>;

// Full federated run: `cfg.rounds` rounds of sampling, client updates and
// server aggregation over `train_clients`, then a final evaluation pass in
// which every training client and every entry of `new_clients` runs one
// client round against the final prior. Prior and payloads pass through a
// serialize/parse round trip on every exchange. Deterministic in cfg.seed.
FederationResult run_federation(const FederationConfig& cfg, const GlobalPrior& init_prior,
                                const std::vector<ClientDataset>& train_clients,
                                const std::vector<ClientDataset>& new_clients = {},
                                const CheckpointSink& checkpoint_sink = nullptr,
                                const FederationSnapshot* resume = nullptr);

}  // namespace fedmogp
