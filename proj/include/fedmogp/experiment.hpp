#pragma once

#include <string>
#include <vector>

#include "fedmogp/config.hpp"
#include "fedmogp/data.hpp"
#include "fedmogp/federation.hpp"

namespace fedmogp {

// Synthetic-generation options implied by a config; `n_clients` covers the
// training clients plus the held-out ones.
SyntheticOptions synthetic_options(const ExperimentConfig& cfg);

// Datasets an experiment runs on: generated (no manifest) or loaded. The
// first `federation.n_clients` entries train; the remainder are held out
// for the final evaluation.
std::vector<ClientDataset> experiment_datasets(const ExperimentConfig& cfg);

// Initial global prior from the config's model section; noise entries cover
// every regression task id present in the datasets.
GlobalPrior initial_prior(const ExperimentConfig& cfg, const std::vector<ClientDataset>& clients);

// In-memory experiment: split train/held-out, run the federation (resuming
// from `resume` when given), return results. Checkpoint handling is the
// caller's via the sink.
FederationResult execute_run(const ExperimentConfig& cfg,
                             const std::vector<ClientDataset>& clients,
                             const CheckpointSink& checkpoint_sink = nullptr,
                             const FederationSnapshot* resume = nullptr);

// Artifact writers (schemas documented in the README).
void write_metrics_csv(const std::string& path, const std::vector<MetricRecord>& metrics);
void write_predictions_csv(const std::string& path,
                           const std::vector<PredictionRecord>& predictions);
void write_calibration_json(const std::string& path,
                            const std::vector<PredictionRecord>& predictions, int n_bins);
void write_round_log_json(const std::string& path, const std::vector<RoundLog>& rounds);

// Binary checkpoint round trip.
void write_checkpoint(const std::string& path, const FederationSnapshot& snapshot);
FederationSnapshot read_checkpoint(const std::string& path);

// Subcommands; return a process exit code and report errors on stderr.
// gen: dataset CSVs + manifest (+ ground truth) under the output directory.
// run: full experiment; metrics.csv, predictions.csv, calibration.json,
//      round_log.json and checkpoints under the output directory.
// ablate: one run per value of `axis` (mode: N,K,W,A; kernel: rbf, linear,
//      laplace, cauchy) on shared data, summarized in ablation.csv.
int cmd_gen(const ExperimentConfig& cfg);
int cmd_run(const ExperimentConfig& cfg);
int cmd_ablate(const ExperimentConfig& cfg, const std::string& axis);

}  // namespace fedmogp
