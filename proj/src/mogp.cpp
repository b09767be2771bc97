#include "fedmogp/mogp.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "fedmogp/errors.hpp"
#include "fedmogp/random.hpp"

namespace fedmogp {

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "regression") return TaskKind::kRegression;
  if (name == "classification") return TaskKind::kClassification;
  throw InputError("unknown task kind '" + name + "' (expected regression|classification)");
}

std::string to_string(TaskKind kind) {
  return kind == TaskKind::kRegression ? "regression" : "classification";
}

TaskLayout::TaskLayout(std::vector<Task> tasks) : tasks_(std::move(tasks)) {
  if (tasks_.empty()) throw InputError("TaskLayout: at least one task required");
  std::stable_sort(tasks_.begin(), tasks_.end(), [](const Task& a, const Task& b) {
    if (a.kind != b.kind) return a.kind == TaskKind::kRegression;
    return a.task_id < b.task_id;
  });

  std::set<int> seen;
  input_dim_ = static_cast<int>(tasks_.front().inputs.cols());
  offsets_.reserve(tasks_.size());
  classification_offset_ = -1;
  for (const Task& t : tasks_) {
    if (!seen.insert(t.task_id).second) {
      throw InputError("TaskLayout: duplicate task_id " + std::to_string(t.task_id));
    }
    if (t.inputs.rows() == 0) {
      throw InputError("TaskLayout: task " + std::to_string(t.task_id) + " has no points");
    }
    if (static_cast<int>(t.inputs.cols()) != input_dim_) {
      throw InputError("TaskLayout: tasks disagree on input dimension");
    }
    if (!t.inputs.allFinite()) {
      throw NumericError("TaskLayout: task " + std::to_string(t.task_id) +
                         " has non-finite inputs");
    }
    if (t.kind == TaskKind::kClassification && classification_offset_ < 0) {
      classification_offset_ = total_points_;
    }
    offsets_.push_back(total_points_);
    total_points_ += static_cast<int>(t.inputs.rows());
  }
  if (classification_offset_ < 0) classification_offset_ = total_points_;
}

int TaskLayout::index_of(int task_id) const {
  for (int i = 0; i < n_tasks(); ++i) {
    if (tasks_[i].task_id == task_id) return i;
  }
  throw InputError("TaskLayout: no task with id " + std::to_string(task_id));
}

void validate_mogp_shapes(const TaskLayout& layout, const MixingWeights& w,
                          const std::vector<Basis>& bases) {
  if (bases.empty()) throw InputError("mogp: at least one basis required");
  if (w.cols() != static_cast<Eigen::Index>(bases.size())) {
    throw InputError("mogp: mixing weights have " + std::to_string(w.cols()) +
                     " columns but there are " + std::to_string(bases.size()) + " bases");
  }
  for (const Task& t : layout.tasks()) {
    if (t.task_id < 0 || t.task_id >= w.rows()) {
      throw InputError("mogp: task_id " + std::to_string(t.task_id) +
                       " outside mixing weight rows");
    }
  }
}

double cross_cov(const MixingWeights& w, const std::vector<Basis>& bases, int task_i, int task_j,
                 const Eigen::VectorXd& x, const Eigen::VectorXd& x_prime) {
  if (task_i < 0 || task_i >= w.rows() || task_j < 0 || task_j >= w.rows()) {
    throw InputError("cross_cov: task index outside mixing weight rows");
  }
  if (w.cols() != static_cast<Eigen::Index>(bases.size())) {
    throw InputError("cross_cov: mixing weight columns disagree with basis count");
  }
  double acc = 0.0;
  for (std::size_t b = 0; b < bases.size(); ++b) {
    acc += w(task_i, b) * w(task_j, b) *
           eval_kernel(bases[b].kernel, bases[b].map, x, x_prime);
  }
  return acc;
}

GramMatrix assemble_k(const TaskLayout& layout, const MixingWeights& w,
                      const std::vector<Basis>& bases) {
  validate_mogp_shapes(layout, w, bases);
  const int n = layout.total_points();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n, n);
  // Accumulate one basis at a time: K += (w_ib w_jb) kron G_b over blocks.
  for (std::size_t b = 0; b < bases.size(); ++b) {
    for (int ti = 0; ti < layout.n_tasks(); ++ti) {
      const Task& a = layout.tasks()[ti];
      for (int tj = ti; tj < layout.n_tasks(); ++tj) {
        const Task& c = layout.tasks()[tj];
        double scale = w(a.task_id, b) * w(c.task_id, b);
        if (scale == 0.0) continue;
        Eigen::MatrixXd block = gram(bases[b].kernel, bases[b].map, a.inputs, c.inputs);
        k.block(layout.offset(ti), layout.offset(tj), block.rows(), block.cols()) +=
            scale * block;
        if (tj != ti) {
          k.block(layout.offset(tj), layout.offset(ti), block.cols(), block.rows()) +=
              scale * block.transpose();
        }
      }
    }
  }
  GramMatrix g;
  g.entries = 0.5 * (k + k.transpose());
  return g;
}

Eigen::VectorXd cross_cov_vector(const TaskLayout& layout, const MixingWeights& w,
                                 const std::vector<Basis>& bases, int task_id,
                                 const Eigen::VectorXd& x_star) {
  validate_mogp_shapes(layout, w, bases);
  Eigen::VectorXd k(layout.total_points());
  for (int t = 0; t < layout.n_tasks(); ++t) {
    const Task& task = layout.tasks()[t];
    for (Eigen::Index r = 0; r < task.inputs.rows(); ++r) {
      k[layout.offset(t) + r] =
          cross_cov(w, bases, task_id, task.task_id, x_star, task.inputs.row(r));
    }
  }
  return k;
}

Eigen::VectorXd sample_mogp(const TaskLayout& layout, const MixingWeights& w,
                            const std::vector<Basis>& bases, std::uint64_t seed) {
  GramMatrix k = assemble_k(layout, w, bases);
  CholeskyFactor chol = stabilized_cholesky(k, "sample_mogp covariance");
  std::mt19937_64 engine = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(layout.total_points());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(engine);
  return chol.lower * z;
}

}  // namespace fedmogp
