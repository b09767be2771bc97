#include "fedmogp/data.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <sstream>

#include "fedmogp/errors.hpp"
#include "fedmogp/inference.hpp"
#include "fedmogp/logging.hpp"
#include "fedmogp/random.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fedmogp {

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

void validate_dataset(const ClientDataset& dataset) {
  if (dataset.tasks.empty()) {
    throw InputError("dataset: client " + std::to_string(dataset.client_id) + " has no tasks");
  }
  std::set<int> ids;
  for (const TaskData& t : dataset.tasks) {
    if (!ids.insert(t.task_id).second) {
      throw InputError("dataset: duplicate task_id " + std::to_string(t.task_id) + " on client " +
                       std::to_string(dataset.client_id));
    }
    if (t.inputs.rows() != t.targets.size()) {
      throw InputError("dataset: inputs/targets row count mismatch on task " +
                       std::to_string(t.task_id));
    }
    if (!t.inputs.allFinite() || !t.targets.allFinite()) {
      throw NumericError("dataset: non-finite values on task " + std::to_string(t.task_id));
    }
    if (t.train_indices.empty()) {
      throw InputError("dataset: task " + std::to_string(t.task_id) + " has no training rows");
    }
    auto in_range = [&](int i) { return i >= 0 && i < t.inputs.rows(); };
    for (int i : t.train_indices) {
      if (!in_range(i)) throw InputError("dataset: training index out of range");
    }
    for (int i : t.test_indices) {
      if (!in_range(i)) throw InputError("dataset: test index out of range");
    }
    if (t.kind == TaskKind::kClassification) {
      for (Eigen::Index r = 0; r < t.targets.size(); ++r) {
        if (t.targets[r] != 1.0 && t.targets[r] != -1.0) {
          throw InputError("dataset: classification targets must be -1 or +1");
        }
      }
    }
  }
}

const std::vector<int>& eval_indices(const TaskData& task) {
  return task.test_indices.empty() ? task.train_indices : task.test_indices;
}

StackedData stack_training(const ClientDataset& dataset) {
  validate_dataset(dataset);
  std::vector<Task> tasks;
  tasks.reserve(dataset.tasks.size());
  for (const TaskData& t : dataset.tasks) {
    Eigen::MatrixXd x(t.train_indices.size(), t.inputs.cols());
    for (std::size_t r = 0; r < t.train_indices.size(); ++r) {
      x.row(r) = t.inputs.row(t.train_indices[r]);
    }
    tasks.push_back(Task{t.task_id, t.kind, std::move(x)});
  }
  StackedData out;
  out.layout = TaskLayout(std::move(tasks));
  out.targets.resize(out.layout.total_points());
  for (int ti = 0; ti < out.layout.n_tasks(); ++ti) {
    const int task_id = out.layout.tasks()[ti].task_id;
    const TaskData* source = nullptr;
    for (const TaskData& t : dataset.tasks) {
      if (t.task_id == task_id) source = &t;
    }
    for (std::size_t r = 0; r < source->train_indices.size(); ++r) {
      out.targets[out.layout.offset(ti) + static_cast<int>(r)] =
          source->targets[source->train_indices[r]];
    }
  }
  return out;
}

void split_dataset(ClientDataset& dataset, double test_fraction, int k_shot,
                   std::uint64_t seed) {
  if (test_fraction < 0.0 || test_fraction >= 1.0) {
    throw InputError("split: test_fraction must lie in [0, 1)");
  }
  if (k_shot < 0) throw InputError("split: k_shot must be non-negative");
  for (TaskData& t : dataset.tasks) {
    const int n = static_cast<int>(t.inputs.rows());
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 engine =
        make_engine(derive_seed(derive_seed(seed, dataset.client_id), t.task_id));
    for (int i = 0; i < n - 1; ++i) {
      std::uniform_int_distribution<int> pick(i, n - 1);
      std::swap(order[i], order[pick(engine)]);
    }
    int n_train = 0;
    if (k_shot > 0) {
      n_train = std::min(k_shot, n);
    } else {
      n_train = n - static_cast<int>(test_fraction * n);
    }
    if (n_train < 1) throw InputError("split: would leave a task without training rows");
    t.train_indices.assign(order.begin(), order.begin() + n_train);
    t.test_indices.assign(order.begin() + n_train, order.end());
    std::sort(t.train_indices.begin(), t.train_indices.end());
    std::sort(t.test_indices.begin(), t.test_indices.end());
  }
}

SyntheticData generate_synthetic(const SyntheticOptions& options) {
  if (options.n_clients < 1) throw InputError("generate_synthetic: n_clients must be positive");
  if (options.n_points < 2) throw InputError("generate_synthetic: n_points must be at least 2");
  if (!(options.noise_variance > 0.0)) {
    throw InputError("generate_synthetic: noise variance must be positive");
  }
  if (options.kernel_params.empty()) {
    throw InputError("generate_synthetic: at least one basis kernel required");
  }
  if (options.mixing.rows() < 2 ||
      options.mixing.cols() != static_cast<Eigen::Index>(options.kernel_params.size())) {
    throw InputError("generate_synthetic: mixing shape disagrees with basis count");
  }
  if (!(options.domain_hi > options.domain_lo)) {
    throw InputError("generate_synthetic: empty input domain");
  }

  SyntheticData out;
  out.generating_prior.mixing = options.mixing.topRows(2);
  for (const auto& [phi0, phi1] : options.kernel_params) {
    out.generating_prior.bases.push_back(
        Basis{KernelSpec(options.family, phi0, phi1), FeatureMap::identity(1)});
  }
  out.generating_prior.noise_variance[0] = options.noise_variance;

  const int n = options.n_points;
  for (int z = 0; z < options.n_clients; ++z) {
    Eigen::MatrixXd grid(n, 1);
    if (options.random_placement) {
      std::mt19937_64 engine = make_engine(derive_seed(options.seed, 7001 + 4 * z));
      std::uniform_real_distribution<double> uniform(options.domain_lo, options.domain_hi);
      std::vector<double> xs(n);
      for (double& x : xs) x = uniform(engine);
      std::sort(xs.begin(), xs.end());
      for (int i = 0; i < n; ++i) grid(i, 0) = xs[i];
    } else {
      for (int i = 0; i < n; ++i) {
        grid(i, 0) = options.domain_lo +
                     (options.domain_hi - options.domain_lo) * i / static_cast<double>(n - 1);
      }
    }

    TaskLayout layout(std::vector<Task>{Task{0, TaskKind::kRegression, grid},
                                        Task{1, TaskKind::kClassification, grid}});
    Eigen::VectorXd f = sample_mogp(layout, out.generating_prior.mixing,
                                    out.generating_prior.bases,
                                    derive_seed(options.seed, 7002 + 4 * z));
    Eigen::VectorXd f_r = f.head(n);
    Eigen::VectorXd f_c = f.tail(n);
    if (options.force_classification_latent.has_value()) {
      f_c.setConstant(*options.force_classification_latent);
    }

    std::mt19937_64 obs_engine = make_engine(derive_seed(options.seed, 7003 + 4 * z));
    std::normal_distribution<double> normal(0.0, std::sqrt(options.noise_variance));
    std::uniform_real_distribution<double> uniform01(0.0, 1.0);
    Eigen::VectorXd y_r(n);
    Eigen::VectorXd y_c(n);
    for (int i = 0; i < n; ++i) y_r[i] = f_r[i] + normal(obs_engine);
    for (int i = 0; i < n; ++i) {
      y_c[i] = uniform01(obs_engine) < sigmoid(f_c[i]) ? 1.0 : -1.0;
    }

    ClientDataset ds;
    ds.client_id = z;
    std::vector<int> all(n);
    for (int i = 0; i < n; ++i) all[i] = i;
    ds.tasks.push_back(TaskData{0, TaskKind::kRegression, grid, y_r, all, {}});
    ds.tasks.push_back(TaskData{1, TaskKind::kClassification, grid, y_c, all, {}});
    if (options.test_fraction > 0.0 || options.k_shot > 0) {
      split_dataset(ds, options.test_fraction, options.k_shot,
                    derive_seed(options.seed, 7004 + 4 * z));
    }
    validate_dataset(ds);

    out.clients.push_back(std::move(ds));
    out.truth.inputs.push_back(grid);
    out.truth.f_regression.push_back(f_r);
    out.truth.f_classification.push_back(f_c);
  }
  return out;
}

// --- persistence ---------------------------------------------------------------

static std::string task_csv_name(int client_id, int task_id) {
  return "client_" + std::to_string(client_id) + "_task_" + std::to_string(task_id) + ".csv";
}

static void write_task_csv(const fs::path& path, const TaskData& task) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open '" + path.string() + "' for writing");
  const int d = static_cast<int>(task.inputs.cols());
  for (int j = 0; j < d; ++j) out << "x" << j << ",";
  out << "y\n";
  for (Eigen::Index r = 0; r < task.inputs.rows(); ++r) {
    for (int j = 0; j < d; ++j) out << format_double(task.inputs(r, j)) << ",";
    out << format_double(task.targets[r]) << "\n";
  }
}

std::string save_dataset(const std::vector<ClientDataset>& clients, const std::string& out_dir,
                         const SyntheticGroundTruth* truth) {
  if (clients.empty()) throw InputError("save_dataset: no clients");
  fs::create_directories(out_dir);
  json manifest;
  manifest["version"] = 1;
  manifest["clients"] = json::array();
  for (const ClientDataset& ds : clients) {
    validate_dataset(ds);
    json client;
    client["client_id"] = ds.client_id;
    client["tasks"] = json::array();
    for (const TaskData& t : ds.tasks) {
      const std::string name = task_csv_name(ds.client_id, t.task_id);
      write_task_csv(fs::path(out_dir) / name, t);
      json task;
      task["task_id"] = t.task_id;
      task["kind"] = to_string(t.kind);
      task["path"] = name;
      task["train_indices"] = t.train_indices;
      task["test_indices"] = t.test_indices;
      client["tasks"].push_back(std::move(task));
    }
    manifest["clients"].push_back(std::move(client));
  }

  if (truth != nullptr) {
    std::ofstream out(fs::path(out_dir) / "ground_truth.csv");
    if (!out) throw ParseError("cannot open ground_truth.csv for writing");
    out << "client,row,x0,f_regression,f_classification\n";
    for (std::size_t z = 0; z < truth->inputs.size(); ++z) {
      for (Eigen::Index r = 0; r < truth->inputs[z].rows(); ++r) {
        out << z << "," << r << "," << format_double(truth->inputs[z](r, 0)) << ","
            << format_double(truth->f_regression[z][r]) << ","
            << format_double(truth->f_classification[z][r]) << "\n";
      }
    }
  }

  const fs::path manifest_path = fs::path(out_dir) / "manifest.json";
  std::ofstream out(manifest_path);
  if (!out) throw ParseError("cannot open manifest for writing");
  out << manifest.dump(2) << "\n";
  return manifest_path.string();
}

static std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

static TaskData load_task_csv(const fs::path& path, int task_id, TaskKind kind) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ":1: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_csv_line(line);
  const int d = static_cast<int>(header.size()) - 1;
  if (d < 1 || header.back() != "y") {
    throw ParseError(path.string() + ":1: header must be x0,...,x{D-1},y");
  }
  for (int j = 0; j < d; ++j) {
    if (header[j] != "x" + std::to_string(j)) {
      throw ParseError(path.string() + ":1: header must be x0,...,x{D-1},y");
    }
  }

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != d + 1) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(d + 1) + " columns, found " +
                       std::to_string(cells.size()));
    }
    std::vector<double> row;
    for (const std::string& c : cells) {
      try {
        std::size_t pos = 0;
        row.push_back(std::stod(c, &pos));
        if (pos != c.size()) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) +
                         ": cannot parse number '" + c + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path.string() + ": no data rows");

  TaskData task;
  task.task_id = task_id;
  task.kind = kind;
  task.inputs.resize(rows.size(), d);
  task.targets.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int j = 0; j < d; ++j) task.inputs(r, j) = rows[r][j];
    task.targets[r] = rows[r][d];
  }

  if (kind == TaskKind::kClassification) {
    bool has_zero = false;
    for (Eigen::Index r = 0; r < task.targets.size(); ++r) {
      const double y = task.targets[r];
      if (y == 0.0) {
        has_zero = true;
      } else if (y != 1.0 && y != -1.0) {
        throw ParseError(path.string() + ": classification label " + format_double(y) +
                         " is not in {-1, +1} or {0, 1}");
      }
    }
    if (has_zero) {
      for (Eigen::Index r = 0; r < task.targets.size(); ++r) {
        if (task.targets[r] == -1.0) {
          throw ParseError(path.string() + ": labels mix {0, 1} and {-1, +1} conventions");
        }
      }
      log::warn("canonicalizing {0, 1} labels to {-1, +1} in " + path.string());
      for (Eigen::Index r = 0; r < task.targets.size(); ++r) {
        task.targets[r] = task.targets[r] == 0.0 ? -1.0 : 1.0;
      }
    }
  }
  return task;
}

std::vector<ClientDataset> load_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ParseError("cannot open manifest '" + manifest_path + "'");
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("manifest '" + manifest_path + "': " + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("clients") ||
      !manifest["clients"].is_array()) {
    throw ParseError("manifest '" + manifest_path + "': missing clients array");
  }
  if (manifest.value("version", 0) != 1) {
    throw ParseError("manifest '" + manifest_path + "': unsupported version");
  }

  const fs::path base = fs::path(manifest_path).parent_path();
  std::vector<ClientDataset> out;
  for (const json& client : manifest["clients"]) {
    ClientDataset ds;
    ds.client_id = client.value("client_id", -1);
    if (ds.client_id < 0) throw ParseError("manifest: client without valid client_id");
    if (!client.contains("tasks") || !client["tasks"].is_array() || client["tasks"].empty()) {
      throw ParseError("manifest: client " + std::to_string(ds.client_id) + " has no tasks");
    }
    for (const json& jt : client["tasks"]) {
      if (!jt.contains("task_id") || !jt.contains("kind") || !jt.contains("path")) {
        throw ParseError("manifest: task entries need task_id, kind, path");
      }
      TaskData task = load_task_csv(base / jt["path"].get<std::string>(),
                                    jt["task_id"].get<int>(),
                                    task_kind_from_string(jt["kind"].get<std::string>()));
      if (jt.contains("train_indices")) {
        task.train_indices = jt["train_indices"].get<std::vector<int>>();
      }
      if (jt.contains("test_indices")) {
        task.test_indices = jt["test_indices"].get<std::vector<int>>();
      }
      if (task.train_indices.empty()) {
        task.train_indices.resize(task.inputs.rows());
        for (int i = 0; i < static_cast<int>(task.inputs.rows()); ++i) task.train_indices[i] = i;
      }
      ds.tasks.push_back(std::move(task));
    }
    validate_dataset(ds);
    out.push_back(std::move(ds));
  }
  if (out.empty()) throw ParseError("manifest '" + manifest_path + "': no clients");
  return out;
}

}  // namespace fedmogp
