#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedmogp/elbo.hpp"
#include "fedmogp/mogp.hpp"

namespace fedmogp {

// One task's observations plus its train/test split (row indices into
// `inputs`). Classification targets are always {-1, +1} once loaded.
struct TaskData {
  int task_id = 0;
  TaskKind kind = TaskKind::kRegression;
  Eigen::MatrixXd inputs;
  Eigen::VectorXd targets;
  std::vector<int> train_indices;
  std::vector<int> test_indices;
};

struct ClientDataset {
  int client_id = 0;
  std::vector<TaskData> tasks;
};

void validate_dataset(const ClientDataset& dataset);

// Rows a task is evaluated on: the test split when one exists, otherwise
// every training row.
const std::vector<int>& eval_indices(const TaskData& task);

// Training rows of every task stacked into a layout + target vector.
struct StackedData {
  TaskLayout layout;
  Eigen::VectorXd targets;
};

StackedData stack_training(const ClientDataset& dataset);

// --- synthetic experiment data ----------------------------------------------

struct SyntheticOptions {
  int n_clients = 5;
  int n_points = 50;  // per task
  std::uint64_t seed = 1;
  double noise_variance = 0.1;
  // Generating model: one regression task (id 0) and one classification
  // task (id 1) per client on a shared one-dimensional grid.
  Eigen::MatrixXd mixing = (Eigen::MatrixXd(2, 2) << 0.6, 0.4, 0.4, 0.6).finished();
  std::vector<std::pair<double, double>> kernel_params = {{1.0, 0.02}, {2.0, 0.01}};
  KernelFamily family = KernelFamily::kRbf;
  double domain_lo = 0.0;
  double domain_hi = 100.0;
  // Evenly spaced inputs by default; uniform random placement on request.
  bool random_placement = false;
  double test_fraction = 0.0;
  int k_shot = 0;  // > 0: keep exactly k training points per task
  // Test hook: replace the classification latent with a constant.
  std::optional<double> force_classification_latent;
};

// True latents per client at that client's input grid.
struct SyntheticGroundTruth {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::VectorXd> f_regression;
  std::vector<Eigen::VectorXd> f_classification;
};

struct SyntheticData {
  std::vector<ClientDataset> clients;
  SyntheticGroundTruth truth;
  GlobalPrior generating_prior;
};

// Draws per-client latent pairs jointly from the coregionalized prior,
// observes the regression latent under Gaussian noise and the
// classification latent through Bernoulli(sigmoid) labels in {-1, +1}.
// Deterministic in options.seed.
SyntheticData generate_synthetic(const SyntheticOptions& options);

// Re-splits a dataset: `test_fraction` of each task's rows become test rows
// (uniform without replacement), or with k_shot > 0 exactly k rows stay in
// training. Deterministic in `seed`.
void split_dataset(ClientDataset& dataset, double test_fraction, int k_shot, std::uint64_t seed);

// --- persistence --------------------------------------------------------------

// Writes one CSV per task (header x0,...,x{D-1},y), a JSON manifest tying
// clients/tasks/kinds/paths/splits together, and (when truth is present)
// ground_truth.csv. Returns the manifest path.
std::string save_dataset(const std::vector<ClientDataset>& clients, const std::string& out_dir,
                         const SyntheticGroundTruth* truth = nullptr);

// Loads a manifest written by save_dataset (or by hand, same schema).
// Classification targets in {0, 1} are canonicalized to {-1, +1} with a
// warning; anything else non-binary is a ParseError with file/line context.
std::vector<ClientDataset> load_manifest(const std::string& manifest_path);

// Shortest exact decimal rendering used for every CSV number.
std::string format_double(double value);

}  // namespace fedmogp
