#include "fedmogp/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <limits>
#include <nlohmann/json.hpp>
#include <utility>

#include "fedmogp/errors.hpp"
#include "fedmogp/linalg.hpp"
#include "fedmogp/logging.hpp"
#include "fedmogp/metrics.hpp"

namespace fedmogp {

namespace {

namespace fs = std::filesystem;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out << text;
  if (!out) throw InputError("write failed for " + path);
}

// Flags complete/partial artifact sets for consumers (and for the exit-code
// contract): status.json is the last file a successful run writes.
void write_status(const std::string& out_dir, bool ok, const std::string& error) {
  nlohmann::json j{{"status", ok ? "ok" : "failed"}};
  if (!ok) j["error"] = error;
  write_text((fs::path(out_dir) / "status.json").string(), j.dump(2) + "\n");
}

double mean_final_score(const std::vector<MetricRecord>& metrics, int final_round, TaskKind kind) {
  std::vector<double> values;
  for (const MetricRecord& record : metrics) {
    if (record.round == final_round && record.kind == kind) values.push_back(record.score);
  }
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  return pairwise_sum(values) / static_cast<double>(values.size());
}

}  // namespace

SyntheticOptions synthetic_options(const ExperimentConfig& cfg) {
  SyntheticOptions opt;
  opt.n_clients = cfg.federation.n_clients + cfg.new_clients;
  opt.n_points = cfg.points;
  opt.seed = cfg.federation.seed;
  opt.noise_variance = cfg.noise_variance;
  opt.mixing = cfg.mixing;
  opt.kernel_params = cfg.kernel_params;
  opt.family = cfg.data_kernel;
  opt.domain_lo = cfg.domain_lo;
  opt.domain_hi = cfg.domain_hi;
  opt.random_placement = cfg.random_placement;
  opt.test_fraction = cfg.test_fraction;
  opt.k_shot = cfg.k_shot;
  return opt;
}

std::vector<ClientDataset> experiment_datasets(const ExperimentConfig& cfg) {
  if (!cfg.data_manifest.empty()) {
    std::vector<ClientDataset> clients = load_manifest(cfg.data_manifest);
    if (static_cast<int>(clients.size()) < cfg.federation.n_clients) {
      throw InputError("manifest provides " + std::to_string(clients.size()) +
                       " clients but the run needs " + std::to_string(cfg.federation.n_clients));
    }
    return clients;
  }
  return generate_synthetic(synthetic_options(cfg)).clients;
}

GlobalPrior initial_prior(const ExperimentConfig& cfg, const std::vector<ClientDataset>& clients) {
  if (clients.empty()) throw InputError("initial_prior: no datasets");
  const int input_dim = static_cast<int>(clients.front().tasks.front().inputs.cols());
  GlobalPrior prior;
  for (const auto& [phi0, phi1] : cfg.kernel_params) {
    const int latent_dim = cfg.feature_dim > 0 ? cfg.feature_dim : input_dim;
    FeatureMap map = cfg.feature_map == "affine" ? FeatureMap::affine(input_dim, latent_dim)
                                                 : FeatureMap::identity(input_dim);
    prior.bases.push_back(Basis{KernelSpec(cfg.kernel, phi0, phi1), std::move(map)});
  }
  prior.mixing = cfg.mixing;
  int max_task_id = -1;
  for (const ClientDataset& client : clients) {
    for (const TaskData& task : client.tasks) {
      max_task_id = std::max(max_task_id, task.task_id);
      if (task.kind == TaskKind::kRegression) {
        prior.noise_variance.emplace(task.task_id, cfg.sigma2_init);
      }
    }
  }
  if (max_task_id >= prior.mixing.rows()) {
    throw InputError("config: key 'mixing': " + std::to_string(prior.mixing.rows()) +
                     " rows cannot cover task id " + std::to_string(max_task_id));
  }
  validate_prior(prior);
  return prior;
}

FederationResult execute_run(const ExperimentConfig& cfg,
                             const std::vector<ClientDataset>& clients,
                             const CheckpointSink& checkpoint_sink,
                             const FederationSnapshot* resume) {
  validate_experiment_config(cfg);
  const std::size_t n_train = static_cast<std::size_t>(cfg.federation.n_clients);
  if (clients.size() < n_train) {
    throw InputError("execute_run: fewer datasets than training clients");
  }
  std::vector<ClientDataset> train(clients.begin(),
                                   clients.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<ClientDataset> held_out(clients.begin() + static_cast<std::ptrdiff_t>(n_train),
                                      clients.end());
  GlobalPrior prior = initial_prior(cfg, clients);
  return run_federation(cfg.federation, prior, train, held_out, checkpoint_sink, resume);
}

void write_metrics_csv(const std::string& path, const std::vector<MetricRecord>& metrics) {
  std::string text = "round,client,task,kind,score,elbo_a,elbo_b,elbo_c,elbo_d,elbo_total\n";
  for (const MetricRecord& r : metrics) {
    text += std::to_string(r.round) + ',' + std::to_string(r.client_id) + ',' +
            std::to_string(r.task_id) + ',' + to_string(r.kind) + ',' + format_double(r.score) +
            ',' + format_double(r.elbo.term_a) + ',' + format_double(r.elbo.term_b) + ',' +
            format_double(r.elbo.term_c) + ',' + format_double(r.elbo.term_d) + ',' +
            format_double(r.elbo.total) + '\n';
  }
  write_text(path, text);
}

void write_predictions_csv(const std::string& path,
                           const std::vector<PredictionRecord>& predictions) {
  const Eigen::Index dim = predictions.empty() ? 1 : predictions.front().x.size();
  std::string text = "client,task";
  for (Eigen::Index d = 0; d < dim; ++d) text += ",x" + std::to_string(d);
  text += ",mean,variance,target\n";
  for (const PredictionRecord& r : predictions) {
    text += std::to_string(r.client_id) + ',' + std::to_string(r.task_id);
    for (Eigen::Index d = 0; d < r.x.size(); ++d) text += ',' + format_double(r.x[d]);
    text += ',' + format_double(r.mean) + ',' + format_double(r.variance) + ',' +
            format_double(r.target) + '\n';
  }
  write_text(path, text);
}

void write_calibration_json(const std::string& path,
                            const std::vector<PredictionRecord>& predictions, int n_bins) {
  std::vector<double> probs;
  std::vector<double> labels;
  for (const PredictionRecord& r : predictions) {
    if (r.class_probability) {
      probs.push_back(*r.class_probability);
      labels.push_back(r.target);
    }
  }
  nlohmann::json j{{"n_bins", n_bins}, {"total", probs.size()}};
  if (probs.empty()) {
    j["ece"] = 0.0;
    j["bins"] = nlohmann::json::array();
  } else {
    const Eigen::VectorXd p = Eigen::Map<const Eigen::VectorXd>(
        probs.data(), static_cast<Eigen::Index>(probs.size()));
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(
        labels.data(), static_cast<Eigen::Index>(labels.size()));
    const ReliabilityDiagram diagram = ece(p, y, n_bins);
    j["ece"] = diagram.ece;
    nlohmann::json bins = nlohmann::json::array();
    for (const ReliabilityBin& bin : diagram.bins) {
      bins.push_back(nlohmann::json{{"lo", bin.lo},
                                    {"hi", bin.hi},
                                    {"confidence", bin.mean_confidence},
                                    {"accuracy", bin.accuracy},
                                    {"count", bin.count}});
    }
    j["bins"] = std::move(bins);
  }
  write_text(path, j.dump(2) + "\n");
}

void write_round_log_json(const std::string& path, const std::vector<RoundLog>& rounds) {
  nlohmann::json j = nlohmann::json::array();
  for (const RoundLog& log : rounds) j.push_back(round_log_to_json(log));
  write_text(path, j.dump(2) + "\n");
}

void write_checkpoint(const std::string& path, const FederationSnapshot& snapshot) {
  const std::vector<std::uint8_t> bytes = nlohmann::json::to_cbor(snapshot_to_json(snapshot));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed for " + path);
}

FederationSnapshot read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  try {
    return snapshot_from_json(nlohmann::json::from_cbor(bytes));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
}

int cmd_gen(const ExperimentConfig& cfg) {
  try {
    validate_experiment_config(cfg);
    fs::create_directories(cfg.out_dir);
    SyntheticData data = generate_synthetic(synthetic_options(cfg));
    const std::string manifest = save_dataset(data.clients, cfg.out_dir, &data.truth);
    std::cout << manifest << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "gen: " << e.what() << "\n";
    return 1;
  }
}

int cmd_run(const ExperimentConfig& cfg) {
  bool status_written = false;
  try {
    validate_experiment_config(cfg);
    fs::create_directories(cfg.out_dir);
    const std::vector<ClientDataset> clients = experiment_datasets(cfg);

    FederationSnapshot resume_snapshot;
    const FederationSnapshot* resume = nullptr;
    if (!cfg.resume_from.empty()) {
      resume_snapshot = read_checkpoint(cfg.resume_from);
      resume = &resume_snapshot;
    }

    CheckpointSink sink;
    if (cfg.checkpoint_every > 0) {
      const std::string out_dir = cfg.out_dir;
      const int every = cfg.checkpoint_every;
      const int rounds = cfg.federation.rounds;
      sink = [out_dir, every, rounds](const FederationSnapshot& snapshot) {
        if (snapshot.next_round % every == 0 || snapshot.next_round == rounds) {
          write_checkpoint((fs::path(out_dir) /
                            ("checkpoint_round_" + std::to_string(snapshot.next_round) + ".cbor"))
                               .string(),
                           snapshot);
        }
      };
    }

    const FederationResult result = execute_run(cfg, clients, sink, resume);

    write_metrics_csv((fs::path(cfg.out_dir) / "metrics.csv").string(), result.metrics);
    write_predictions_csv((fs::path(cfg.out_dir) / "predictions.csv").string(),
                          result.predictions);
    write_calibration_json((fs::path(cfg.out_dir) / "calibration.json").string(),
                           result.predictions, cfg.calibration_bins);
    write_round_log_json((fs::path(cfg.out_dir) / "round_log.json").string(), result.rounds);
    write_status(cfg.out_dir, true, "");
    status_written = true;
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "run: " << e.what() << "\n";
    if (!status_written) {
      try {
        fs::create_directories(cfg.out_dir);
        write_status(cfg.out_dir, false, e.what());
      } catch (const std::exception&) {
        // The status file is best-effort once the run itself has failed.
      }
    }
    return 1;
  }
}

int cmd_ablate(const ExperimentConfig& cfg, const std::string& axis) {
  try {
    validate_experiment_config(cfg);
    if (axis != "mode" && axis != "kernel") {
      throw InputError("ablate: axis must be 'mode' or 'kernel'");
    }
    fs::create_directories(cfg.out_dir);
    // Shared data across cells: the generating model never depends on the
    // ablated value.
    const std::vector<ClientDataset> clients = experiment_datasets(cfg);

    const std::vector<std::string> values =
        axis == "mode" ? std::vector<std::string>{"N", "K", "W", "A"}
                       : std::vector<std::string>{"rbf", "linear", "laplace", "cauchy"};
    std::string table = "axis,value,status,mse,accuracy\n";
    bool all_ok = true;
    for (const std::string& value : values) {
      ExperimentConfig cell = cfg;
      if (axis == "mode") {
        cell.federation.mode = aggregation_mode_from_string(value);
      } else {
        cell.kernel = kernel_family_from_string(value);
      }
      std::string status = "ok";
      std::string mse_text;
      std::string acc_text;
      try {
        const FederationResult result = execute_run(cell, clients);
        const double cell_mse =
            mean_final_score(result.metrics, cell.federation.rounds, TaskKind::kRegression);
        const double cell_acc =
            mean_final_score(result.metrics, cell.federation.rounds, TaskKind::kClassification);
        if (std::isfinite(cell_mse)) mse_text = format_double(cell_mse);
        if (std::isfinite(cell_acc)) acc_text = format_double(cell_acc);
      } catch (const std::exception& e) {
        status = "failed";
        all_ok = false;
        log::warn("ablate cell " + value + " failed: " + std::string(e.what()));
      }
      table += axis + ',' + value + ',' + status + ',' + mse_text + ',' + acc_text + '\n';
    }
    write_text((fs::path(cfg.out_dir) / "ablation.csv").string(), table);
    return all_ok ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "ablate: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace fedmogp
