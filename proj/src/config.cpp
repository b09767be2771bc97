#include "fedmogp/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "fedmogp/errors.hpp"

namespace fedmogp {

namespace {

const std::vector<std::string> kKeys = {
    "rounds",         "clients",       "sample_size",   "mf_iters",
    "local_iters",    "aggregation_mode", "inducing_m", "learning_rate",
    "seed",           "line_search",   "warm_start",    "data",
    "points",         "new_clients",   "noise_variance", "data_kernel",
    "domain",         "random_placement", "test_fraction", "k_shot",
    "kernel",         "kernel_params", "mixing",        "sigma2_init",
    "feature_map",    "feature_dim",   "out",           "resume",
    "calibration_bins", "checkpoint_every"};

[[noreturn]] void key_error(const std::string& key, const std::string& what) {
  throw InputError("config: key '" + key + "': " + what);
}

template <typename T>
T get_as(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    key_error(key, e.what());
  }
}

Eigen::MatrixXd matrix_rows(const nlohmann::json& j, const std::string& key) {
  const auto rows = get_as<std::vector<std::vector<double>>>(j, key);
  if (rows.empty() || rows.front().empty()) key_error(key, "matrix must be non-empty");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.front().size()) key_error(key, "ragged matrix rows");
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return m;
}

void apply_file(ExperimentConfig& cfg, const nlohmann::json& j) {
  const std::set<std::string> known(kKeys.begin(), kKeys.end());
  for (const auto& item : j.items()) {
    if (known.find(item.key()) == known.end()) {
      throw InputError("config: unknown key '" + item.key() + "'");
    }
  }
  if (j.contains("rounds")) cfg.federation.rounds = get_as<int>(j, "rounds");
  if (j.contains("clients")) cfg.federation.n_clients = get_as<int>(j, "clients");
  if (j.contains("sample_size")) cfg.federation.sample_size = get_as<int>(j, "sample_size");
  if (j.contains("mf_iters")) cfg.federation.mf_iters = get_as<int>(j, "mf_iters");
  if (j.contains("local_iters")) cfg.federation.local_iters = get_as<int>(j, "local_iters");
  if (j.contains("aggregation_mode")) {
    cfg.federation.mode = aggregation_mode_from_string(get_as<std::string>(j, "aggregation_mode"));
  }
  if (j.contains("inducing_m")) cfg.federation.inducing_m = get_as<int>(j, "inducing_m");
  if (j.contains("learning_rate")) cfg.federation.learning_rate = get_as<double>(j, "learning_rate");
  if (j.contains("seed")) cfg.federation.seed = get_as<std::uint64_t>(j, "seed");
  if (j.contains("line_search")) cfg.federation.line_search = get_as<bool>(j, "line_search");
  if (j.contains("warm_start")) cfg.federation.warm_start = get_as<bool>(j, "warm_start");
  if (j.contains("data")) cfg.data_manifest = get_as<std::string>(j, "data");
  if (j.contains("points")) cfg.points = get_as<int>(j, "points");
  if (j.contains("new_clients")) cfg.new_clients = get_as<int>(j, "new_clients");
  if (j.contains("noise_variance")) cfg.noise_variance = get_as<double>(j, "noise_variance");
  if (j.contains("data_kernel")) {
    cfg.data_kernel = kernel_family_from_string(get_as<std::string>(j, "data_kernel"));
  }
  if (j.contains("domain")) {
    const auto d = get_as<std::vector<double>>(j, "domain");
    if (d.size() != 2) key_error("domain", "expected [lo, hi]");
    cfg.domain_lo = d[0];
    cfg.domain_hi = d[1];
  }
  if (j.contains("random_placement")) cfg.random_placement = get_as<bool>(j, "random_placement");
  if (j.contains("test_fraction")) cfg.test_fraction = get_as<double>(j, "test_fraction");
  if (j.contains("k_shot")) cfg.k_shot = get_as<int>(j, "k_shot");
  if (j.contains("kernel")) {
    cfg.kernel = kernel_family_from_string(get_as<std::string>(j, "kernel"));
  }
  if (j.contains("kernel_params")) {
    const auto rows = get_as<std::vector<std::vector<double>>>(j, "kernel_params");
    cfg.kernel_params.clear();
    for (const auto& row : rows) {
      if (row.size() != 2) key_error("kernel_params", "expected [[phi0, phi1], ...]");
      cfg.kernel_params.emplace_back(row[0], row[1]);
    }
  }
  if (j.contains("mixing")) cfg.mixing = matrix_rows(j, "mixing");
  if (j.contains("sigma2_init")) cfg.sigma2_init = get_as<double>(j, "sigma2_init");
  if (j.contains("feature_map")) cfg.feature_map = get_as<std::string>(j, "feature_map");
  if (j.contains("feature_dim")) cfg.feature_dim = get_as<int>(j, "feature_dim");
  if (j.contains("out")) cfg.out_dir = get_as<std::string>(j, "out");
  if (j.contains("resume")) cfg.resume_from = get_as<std::string>(j, "resume");
  if (j.contains("calibration_bins")) cfg.calibration_bins = get_as<int>(j, "calibration_bins");
  if (j.contains("checkpoint_every")) cfg.checkpoint_every = get_as<int>(j, "checkpoint_every");
}

}  // namespace

const std::vector<std::string>& config_keys() { return kKeys; }

void validate_experiment_config(const ExperimentConfig& cfg) {
  validate_federation_config(cfg.federation);
  if (cfg.points < 1) throw InputError("config: key 'points': must be >= 1");
  if (cfg.new_clients < 0) throw InputError("config: key 'new_clients': must be >= 0");
  if (!(cfg.noise_variance > 0.0) || !std::isfinite(cfg.noise_variance)) {
    throw InputError("config: key 'noise_variance': must be positive and finite");
  }
  if (!(cfg.domain_lo < cfg.domain_hi)) throw InputError("config: key 'domain': need lo < hi");
  if (cfg.test_fraction < 0.0 || cfg.test_fraction >= 1.0) {
    throw InputError("config: key 'test_fraction': must lie in [0, 1)");
  }
  if (cfg.k_shot < 0) throw InputError("config: key 'k_shot': must be >= 0");
  if (cfg.kernel_params.empty()) {
    throw InputError("config: key 'kernel_params': need at least one basis");
  }
  for (const auto& [p0, p1] : cfg.kernel_params) {
    if (!(p0 > 0.0) || !(p1 > 0.0) || !std::isfinite(p0) || !std::isfinite(p1)) {
      throw InputError("config: key 'kernel_params': entries must be positive and finite");
    }
  }
  if (cfg.mixing.rows() < 1 || cfg.mixing.cols() < 1 || !cfg.mixing.allFinite()) {
    throw InputError("config: key 'mixing': must be a non-empty finite matrix");
  }
  if (cfg.mixing.cols() != static_cast<Eigen::Index>(cfg.kernel_params.size())) {
    throw InputError("config: key 'mixing': columns must match the number of bases");
  }
  if (!(cfg.sigma2_init > 0.0) || !std::isfinite(cfg.sigma2_init)) {
    throw InputError("config: key 'sigma2_init': must be positive and finite");
  }
  if (cfg.feature_map != "identity" && cfg.feature_map != "affine") {
    throw InputError("config: key 'feature_map': allowed values are identity, affine");
  }
  if (cfg.feature_dim < 0) throw InputError("config: key 'feature_dim': must be >= 0");
  if (cfg.calibration_bins < 1) {
    throw InputError("config: key 'calibration_bins': must be >= 1");
  }
  if (cfg.checkpoint_every < 0) {
    throw InputError("config: key 'checkpoint_every': must be >= 0");
  }
  if (cfg.out_dir.empty()) throw InputError("config: key 'out': must be non-empty");
}

ExperimentConfig parse_config(const std::string& config_path, const CliOverrides& overrides) {
  ExperimentConfig cfg;
  bool sample_size_explicit = false;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw InputError("config: cannot read " + config_path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(text);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError("config " + config_path + ": " + e.what());
      }
      if (!j.is_object()) throw ParseError("config " + config_path + ": expected a JSON object");
      apply_file(cfg, j);
      sample_size_explicit = j.contains("sample_size");
    }
  }
  if (overrides.rounds) cfg.federation.rounds = *overrides.rounds;
  if (overrides.clients) cfg.federation.n_clients = *overrides.clients;
  if (overrides.sample_size) {
    cfg.federation.sample_size = *overrides.sample_size;
    sample_size_explicit = true;
  }
  if (overrides.mf_iters) cfg.federation.mf_iters = *overrides.mf_iters;
  if (overrides.local_iters) cfg.federation.local_iters = *overrides.local_iters;
  if (overrides.aggregation_mode) {
    cfg.federation.mode = aggregation_mode_from_string(*overrides.aggregation_mode);
  }
  if (overrides.inducing_m) cfg.federation.inducing_m = *overrides.inducing_m;
  if (overrides.kernel) cfg.kernel = kernel_family_from_string(*overrides.kernel);
  if (overrides.seed) cfg.federation.seed = *overrides.seed;
  if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;
  if (overrides.resume_from) cfg.resume_from = *overrides.resume_from;
  if (overrides.data_manifest) cfg.data_manifest = *overrides.data_manifest;
  if (!sample_size_explicit) cfg.federation.sample_size = cfg.federation.n_clients;
  validate_experiment_config(cfg);
  return cfg;
}

}  // namespace fedmogp
