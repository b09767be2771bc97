#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedmogp/data.hpp"
#include "fedmogp/federation.hpp"
#include "fedmogp/kernels.hpp"

namespace fedmogp {

// Full experiment description: the federation schedule plus data source,
// model initialization, and artifact options. Defaults reproduce the
// synthetic benchmark (5 clients, 50 points per task, 20 rounds, 2 local
// updates of 2 alternations, mode A).
struct ExperimentConfig {
  FederationConfig federation;

  // Data source: a dataset manifest, or (when empty) synthetic generation.
  std::string data_manifest;
  int points = 50;
  int new_clients = 0;  // extra generated clients held out until final evaluation
  double noise_variance = 0.1;
  KernelFamily data_kernel = KernelFamily::kRbf;
  double domain_lo = 0.0;
  double domain_hi = 100.0;
  bool random_placement = false;
  double test_fraction = 0.0;
  int k_shot = 0;

  // Model initialization (defaults equal the synthetic generator's values).
  KernelFamily kernel = KernelFamily::kRbf;
  std::vector<std::pair<double, double>> kernel_params = {{1.0, 0.02}, {2.0, 0.01}};
  Eigen::MatrixXd mixing = (Eigen::MatrixXd(2, 2) << 0.6, 0.4, 0.4, 0.6).finished();
  double sigma2_init = 0.1;
  std::string feature_map = "identity";  // identity | affine
  int feature_dim = 0;                   // affine output dimension; 0 = input dimension

  // Artifacts.
  std::string out_dir = "out";
  std::string resume_from;
  int calibration_bins = 10;
  int checkpoint_every = 1;  // rounds between checkpoints; 0 disables
};

void validate_experiment_config(const ExperimentConfig& cfg);

// Command-line values that override the config file (flag wins). Absent
// optionals leave the file value (or default) in place.
struct CliOverrides {
  std::optional<int> rounds;
  std::optional<int> clients;
  std::optional<int> sample_size;
  std::optional<int> mf_iters;
  std::optional<int> local_iters;
  std::optional<std::string> aggregation_mode;
  std::optional<int> inducing_m;
  std::optional<std::string> kernel;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> resume_from;
  std::optional<std::string> data_manifest;
};

// Parses the JSON config file (empty path or empty file = all defaults),
// applies the overrides, resolves the sample size (`sample_size` follows
// the client count unless set explicitly) and validates. Unknown keys, type
// mismatches and constraint violations are errors naming the key.
ExperimentConfig parse_config(const std::string& config_path, const CliOverrides& overrides);

// The documented key set, exposed for error messages and tests.
const std::vector<std::string>& config_keys();

}  // namespace fedmogp
