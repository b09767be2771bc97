#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <doctest.h>
#include <initializer_list>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "fedmogp/data.hpp"
#include "fedmogp/elbo.hpp"
#include "fedmogp/errors.hpp"
#include "fedmogp/federation.hpp"
#include "fedmogp/serialization.hpp"

using namespace fedmogp;

namespace {

GlobalPrior benchmark_prior() {
  GlobalPrior prior;
  prior.bases = {
      {KernelSpec(KernelFamily::kRbf, 1.0, 0.02), FeatureMap::identity(1)},
      {KernelSpec(KernelFamily::kRbf, 2.0, 0.01), FeatureMap::identity(1)},
  };
  prior.mixing = Eigen::MatrixXd(2, 2);
  prior.mixing << 0.6, 0.4, 0.4, 0.6;
  prior.noise_variance = {{0, 0.1}};
  return prior;
}

std::vector<ClientDataset> small_clients(int n, int points = 6, std::uint64_t seed = 11) {
  SyntheticOptions opt;
  opt.n_clients = n;
  opt.n_points = points;
  opt.seed = seed;
  return generate_synthetic(opt).clients;
}

FederationConfig small_config() {
  FederationConfig cfg;
  cfg.rounds = 2;
  cfg.n_clients = 2;
  cfg.sample_size = 2;
  cfg.mf_iters = 1;
  cfg.local_iters = 1;
  cfg.seed = 21;
  return cfg;
}

Eigen::MatrixXd column(std::initializer_list<double> xs) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index r = 0;
  for (double x : xs) m(r++, 0) = x;
  return m;
}

Eigen::VectorXd vec(std::initializer_list<double> xs) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index r = 0;
  for (double x : xs) v[r++] = x;
  return v;
}

}  // namespace

TEST_CASE("client sampling is deterministic, sorted, and in range") {
  std::vector<int> a = sample_clients(10, 4, 3, 77);
  CHECK(a == sample_clients(10, 4, 3, 77));
  REQUIRE(a.size() == 4);
  CHECK(std::is_sorted(a.begin(), a.end()));
  for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i] != a[i - 1]);
  for (int id : a) {
    CHECK(id >= 0);
    CHECK(id < 10);
  }

  // A full draw is every client.
  CHECK(sample_clients(5, 5, 0, 77) == std::vector<int>{0, 1, 2, 3, 4});

  // Rounds index independent draws.
  bool any_difference = false;
  for (int round = 0; round < 8; ++round) {
    any_difference = any_difference || sample_clients(10, 4, round, 77) != a;
  }
  CHECK(any_difference);

  CHECK_THROWS_AS(sample_clients(3, 4, 0, 77), InputError);
  CHECK_THROWS_AS(sample_clients(3, 0, 0, 77), InputError);
  CHECK_THROWS_AS(sample_clients(3, 2, -1, 77), InputError);
}

TEST_CASE("inducing seeds are stable per client and distinct across clients") {
  CHECK(inducing_seed(5, 0) == inducing_seed(5, 0));
  CHECK(inducing_seed(5, 0) != inducing_seed(5, 1));
  CHECK(inducing_seed(5, 0) != inducing_seed(6, 0));
}

TEST_CASE("payloads round trip through their wire format") {
  ClientPayload payload;
  payload.client_id = 3;
  payload.sparse = true;
  payload.posterior.mean = vec({0.1, -0.2});
  payload.posterior.cov = Eigen::MatrixXd::Identity(2, 2) * 0.3;
  payload.posterior.log_det_cov = 2.0 * std::log(0.3);
  payload.pg.tilt = vec({0.5});
  payload.pg.omega_mean = vec({0.23});
  payload.elbo = ELBOBreakdown{-1.0, -2.0, 0.25, 0.5, -3.75};
  payload.local_params = vec({0.7, -0.1});

  ClientPayload back =
      payload_from_json(nlohmann::json::parse(payload_to_json(payload).dump()));
  CHECK(back.client_id == 3);
  CHECK(back.sparse);
  CHECK((back.posterior.mean - payload.posterior.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.posterior.cov - payload.posterior.cov).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.posterior.log_det_cov == payload.posterior.log_det_cov);
  CHECK((back.pg.tilt - payload.pg.tilt).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.elbo.total == payload.elbo.total);
  CHECK((back.local_params - payload.local_params).cwiseAbs().maxCoeff() == 0.0);

  nlohmann::json truncated = payload_to_json(payload);
  truncated.erase("pg");
  CHECK_THROWS_AS(payload_from_json(truncated), ParseError);
}

TEST_CASE("uploaded payloads never contain raw coordinates or targets") {
  // Inputs and targets are exact binary fractions with distinctive digits;
  // if any of them leaked into the payload its decimal rendering would
  // appear verbatim in the serialized form.
  ClientDataset data;
  data.client_id = 0;
  data.tasks.push_back(TaskData{0, TaskKind::kRegression, column({1234.0625, 2468.125, 987.5}),
                                vec({512.375, -64.0625, 17.75}), {0, 1, 2}, {}});
  data.tasks.push_back(TaskData{1, TaskKind::kClassification,
                                column({1234.0625, 2468.125, 987.5}), vec({1.0, -1.0, 1.0}),
                                {0, 1, 2}, {}});

  const char* secrets[] = {"1234.0625", "2468.125", "987.5", "512.375", "-64.0625", "17.75"};
  GlobalPrior prior = benchmark_prior();

  FederationConfig dense_cfg = small_config();
  ClientState dense_state;
  ClientRoundResult dense = run_client(prior, data, dense_cfg, dense_state);
  const std::string dense_wire = payload_to_json(dense.payload).dump();
  for (const char* secret : secrets) {
    CAPTURE(secret);
    CHECK(dense_wire.find(secret) == std::string::npos);
  }

  // The inducing-point payload must also keep the selected locations local.
  FederationConfig sparse_cfg = small_config();
  sparse_cfg.inducing_m = 2;
  ClientState sparse_state;
  ClientRoundResult sparse = run_client(prior, data, sparse_cfg, sparse_state);
  REQUIRE(sparse.payload.sparse);
  const std::string sparse_wire = payload_to_json(sparse.payload).dump();
  for (const char* secret : secrets) {
    CAPTURE(secret);
    CHECK(sparse_wire.find(secret) == std::string::npos);
  }
}

TEST_CASE("a dense client round produces consistent artifacts") {
  std::vector<ClientDataset> clients = small_clients(1);
  GlobalPrior prior = benchmark_prior();
  FederationConfig cfg = small_config();
  cfg.n_clients = 1;
  cfg.sample_size = 1;

  ClientState state;
  ClientRoundResult result = run_client(prior, clients[0], cfg, state);
  CHECK(result.payload.client_id == 0);
  CHECK_FALSE(result.payload.sparse);
  REQUIRE(result.k.has_value());
  CHECK_FALSE(result.sparse_problem.has_value());
  CHECK(result.payload.posterior.mean.size() == 12);  // 6 points x 2 tasks
  CHECK(result.payload.pg.omega_mean.size() == 6);
  CHECK(std::isfinite(result.payload.elbo.total));
  CHECK(result.payload.elbo.total ==
        result.payload.elbo.term_a + result.payload.elbo.term_b - result.payload.elbo.term_c -
            result.payload.elbo.term_d);

  // Mode A leaves nothing client-side, so there is no personalization state.
  CHECK(result.payload.local_params.size() == 0);
  CHECK(state.initialized);
  CHECK_FALSE(state.warm_dense.has_value());

  // Fresh state + same inputs = bit-identical payload.
  ClientState again;
  ClientRoundResult repeat = run_client(prior, clients[0], cfg, again);
  CHECK((repeat.payload.posterior.mean - result.payload.posterior.mean).cwiseAbs().maxCoeff() ==
        0.0);
  CHECK(repeat.payload.elbo.total == result.payload.elbo.total);

  ClientState warm_state;
  cfg.warm_start = true;
  ClientRoundResult warm = run_client(prior, clients[0], cfg, warm_state);
  CHECK(warm_state.warm_dense.has_value());
}

TEST_CASE("client personalization keeps uploaded values one step behind") {
  std::vector<ClientDataset> clients = small_clients(1);
  GlobalPrior prior = benchmark_prior();
  FederationConfig cfg = small_config();
  cfg.mode = AggregationMode::kK;  // clients hold mixing + noise

  ClientState state;
  ClientRoundResult first = run_client(prior, clients[0], cfg, state);
  const Eigen::VectorXd broadcast_locals = pack(prior, client_targets(cfg.mode));
  REQUIRE(first.payload.local_params.size() == 5);  // 4 mixing + 1 noise
  CHECK((first.payload.local_params - broadcast_locals).cwiseAbs().maxCoeff() == 0.0);
  // The ascent step moved the private copy after the upload was fixed.
  CHECK((state.local_params - first.payload.local_params).cwiseAbs().maxCoeff() > 0.0);

  const Eigen::VectorXd stepped = state.local_params;
  ClientRoundResult second = run_client(prior, clients[0], cfg, state);
  CHECK((second.payload.local_params - stepped).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sparse client rounds carry inducing-output factors only") {
  std::vector<ClientDataset> clients = small_clients(1);
  GlobalPrior prior = benchmark_prior();
  FederationConfig cfg = small_config();
  cfg.inducing_m = 3;

  ClientState state;
  ClientRoundResult result = run_client(prior, clients[0], cfg, state);
  CHECK(result.payload.sparse);
  CHECK_FALSE(result.k.has_value());
  REQUIRE(result.sparse_problem.has_value());
  CHECK(result.payload.posterior.mean.size() == 6);  // 3 inducing x 2 tasks
  CHECK(result.payload.pg.omega_mean.size() == 6);   // one per classification site
  CHECK(std::isfinite(result.payload.elbo.total));
}

TEST_CASE("a server step aggregates without touching noise through the gradient") {
  std::vector<ClientDataset> clients = small_clients(2);
  GlobalPrior prior = benchmark_prior();
  FederationConfig cfg = small_config();

  // Identity feature maps carry no parameters: mode A aggregates kernel (4)
  // and mixing (4) through the gradient, noise in closed form only.
  CHECK(packed_size(prior, server_targets(cfg.mode)) == 8);

  std::vector<ClientPayload> payloads;
  std::vector<const ClientDataset*> datasets;
  for (const ClientDataset& data : clients) {
    ClientState state;
    payloads.push_back(run_client(prior, data, cfg, state).payload);
    datasets.push_back(&data);
  }

  AdamState opt = make_adam_state(8, cfg.learning_rate);
  ServerStepResult step = server_step(prior, payloads, datasets, cfg, opt);
  REQUIRE_FALSE(step.skipped);
  CHECK(std::isfinite(step.elbo_before));
  CHECK(step.elbo_after >=
        step.elbo_before - 1e-10 * std::max(1.0, std::abs(step.elbo_before)));
  CHECK(step.opt_state.step == 1);

  // Closed-form refresh: the new noise is the across-client average of each
  // client's maximizer at the pre-step prior.
  std::vector<double> per_client;
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    StackedData stacked = stack_training(clients[i]);
    ObservationSet obs{stacked.layout, stacked.targets, noise_for_layout(prior, stacked.layout)};
    per_client.push_back(optimal_sigma2(payloads[i].posterior, obs, 0));
  }
  const double expected = (per_client[0] + per_client[1]) / 2.0;
  CHECK(step.prior.noise_variance.at(0) == doctest::Approx(expected).epsilon(1e-14));

  CHECK_THROWS_AS(server_step(prior, {}, {}, cfg, opt), InputError);
  CHECK_THROWS_AS(server_step(prior, payloads, {datasets[0]}, cfg, opt), InputError);

  FederationConfig no_search = cfg;
  no_search.line_search = false;
  ServerStepResult unguarded = server_step(prior, payloads, datasets, no_search, opt);
  CHECK(unguarded.line_search_halvings == 0);
  CHECK_FALSE(unguarded.skipped);
}

TEST_CASE("mode N with identity maps has nothing to aggregate") {
  std::vector<ClientDataset> clients = small_clients(1);
  GlobalPrior prior = benchmark_prior();
  FederationConfig cfg = small_config();
  cfg.mode = AggregationMode::kN;
  CHECK(packed_size(prior, server_targets(cfg.mode)) == 0);

  ClientState state;
  std::vector<ClientPayload> payloads{run_client(prior, clients[0], cfg, state).payload};
  std::vector<const ClientDataset*> datasets{&clients[0]};
  AdamState opt = make_adam_state(0, cfg.learning_rate);
  ServerStepResult step = server_step(prior, payloads, datasets, cfg, opt);
  CHECK_FALSE(step.skipped);
  CHECK(step.elbo_after == step.elbo_before);
  CHECK(step.prior.noise_variance.at(0) == prior.noise_variance.at(0));
  CHECK((pack(step.prior, HyperTargets{true, true, true, true}) -
         pack(prior, HyperTargets{true, true, true, true}))
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("snapshots round trip") {
  FederationSnapshot snapshot;
  snapshot.next_round = 4;
  snapshot.prior = benchmark_prior();
  snapshot.opt_state = make_adam_state(8, 0.01);
  snapshot.opt_state.step = 3;
  ClientState state;
  state.initialized = true;
  state.local_params = vec({0.5, -0.25});
  state.local_opt = make_adam_state(2, 0.01);
  snapshot.client_states = {state, ClientState{}};

  FederationSnapshot back =
      snapshot_from_json(nlohmann::json::parse(snapshot_to_json(snapshot).dump()));
  CHECK(back.next_round == 4);
  CHECK(back.opt_state.step == 3);
  REQUIRE(back.client_states.size() == 2);
  CHECK(back.client_states[0].initialized);
  CHECK((back.client_states[0].local_params - state.local_params).cwiseAbs().maxCoeff() == 0.0);
  CHECK_FALSE(back.client_states[1].initialized);

  nlohmann::json wrong_version = snapshot_to_json(snapshot);
  wrong_version["version"] = 2;
  CHECK_THROWS_AS(snapshot_from_json(wrong_version), ParseError);
}

TEST_CASE("round logs serialize their fields") {
  RoundLog log;
  log.round = 2;
  log.sampled = {0, 3};
  log.elbo_before = -10.5;
  log.elbo_after = -9.25;
  log.param_change_norms = {{"kernel", 0.1}, {"mixing", 0.0}};
  log.line_search_halvings = 1;
  log.skipped = false;
  nlohmann::json j = round_log_to_json(log);
  CHECK(j["round"] == 2);
  CHECK(j["sampled"] == nlohmann::json::array({0, 3}));
  CHECK(j["elbo_before"].get<double>() == -10.5);
  CHECK(j["elbo_after"].get<double>() == -9.25);
  CHECK(j["param_change_norms"]["kernel"].get<double>() == 0.1);
  CHECK(j["line_search_halvings"] == 1);
  CHECK(j["skipped"] == false);
}

TEST_CASE("a full federated run is deterministic and resumable") {
  std::vector<ClientDataset> all = small_clients(3);
  std::vector<ClientDataset> train{all[0], all[1]};
  std::vector<ClientDataset> fresh{all[2]};
  GlobalPrior prior = benchmark_prior();
  FederationConfig cfg = small_config();

  std::vector<FederationSnapshot> snapshots;
  CheckpointSink sink = [&](const FederationSnapshot& s) { snapshots.push_back(s); };
  FederationResult a = run_federation(cfg, prior, train, fresh, sink);

  REQUIRE(a.rounds.size() == 2);
  CHECK(a.rounds[0].round == 0);
  CHECK(a.rounds[0].sampled == std::vector<int>{0, 1});
  REQUIRE(snapshots.size() == 2);
  CHECK(snapshots[0].next_round == 1);
  CHECK(snapshots[1].next_round == 2);

  // 2 tasks x 2 clients per training round, then 2 tasks x 3 clients in the
  // final evaluation (round index == cfg.rounds).
  CHECK(a.metrics.size() == 4 + 4 + 6);
  int final_rows = 0;
  bool saw_new_client = false;
  for (const MetricRecord& m : a.metrics) {
    if (m.round == cfg.rounds) {
      ++final_rows;
      saw_new_client = saw_new_client || m.client_id == 2;
      if (m.kind == TaskKind::kClassification) {
        CHECK(m.score >= 0.0);
        CHECK(m.score <= 1.0);
      } else {
        CHECK(m.score >= 0.0);
      }
    }
  }
  CHECK(final_rows == 6);
  CHECK(saw_new_client);
  // Predictions only come from the final evaluation: 3 clients x 2 tasks x 6.
  CHECK(a.predictions.size() == 36);

  FederationResult b = run_federation(cfg, prior, train, fresh);
  CHECK(prior_to_json(a.prior).dump() == prior_to_json(b.prior).dump());
  CHECK(a.rounds[1].elbo_after == b.rounds[1].elbo_after);

  // Resuming from the after-round-0 snapshot replays the rest bit for bit.
  FederationResult resumed = run_federation(cfg, prior, train, fresh, nullptr, &snapshots[0]);
  CHECK(resumed.rounds.size() == 1);
  CHECK(resumed.rounds[0].round == 1);
  CHECK(prior_to_json(resumed.prior).dump() == prior_to_json(a.prior).dump());
  CHECK(resumed.rounds[0].elbo_after == a.rounds[1].elbo_after);

  FederationSnapshot bad_count = snapshots[0];
  bad_count.client_states.push_back(ClientState{});
  CHECK_THROWS_AS(run_federation(cfg, prior, train, fresh, nullptr, &bad_count), InputError);

  FederationSnapshot bad_round = snapshots[0];
  bad_round.next_round = 5;
  CHECK_THROWS_AS(run_federation(cfg, prior, train, fresh, nullptr, &bad_round), InputError);

  CHECK_THROWS_AS(run_federation(cfg, prior, {all[0]}, fresh), InputError);
}
