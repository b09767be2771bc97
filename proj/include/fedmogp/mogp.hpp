#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "fedmogp/kernels.hpp"
#include "fedmogp/linalg.hpp"

namespace fedmogp {

enum class TaskKind { kRegression, kClassification };

TaskKind task_kind_from_string(const std::string& name);
std::string to_string(TaskKind kind);

// One task's observation sites: `inputs` has one row per point.
struct Task {
  int task_id = 0;
  TaskKind kind = TaskKind::kRegression;
  Eigen::MatrixXd inputs;
};

// Canonically ordered collection of a client's tasks: regression tasks
// first, then classification tasks, each group sorted by task_id. The
// stacked latent vector over all observation sites follows this order, so
// the regression block is a contiguous prefix and the classification block
// a contiguous suffix.
class TaskLayout {
 public:
  TaskLayout() = default;
  explicit TaskLayout(std::vector<Task> tasks);

  [[nodiscard]] const std::vector<Task>& tasks() const { return tasks_; }
  [[nodiscard]] int n_tasks() const { return static_cast<int>(tasks_.size()); }
  [[nodiscard]] int n_points(int task_index) const {
    return static_cast<int>(tasks_[task_index].inputs.rows());
  }
  [[nodiscard]] int total_points() const { return total_points_; }
  // Index of the first stacked entry belonging to task `task_index`.
  [[nodiscard]] int offset(int task_index) const { return offsets_[task_index]; }
  // First stacked index of the classification block (== number of
  // regression observations).
  [[nodiscard]] int classification_offset() const { return classification_offset_; }
  [[nodiscard]] int n_classification_points() const {
    return total_points_ - classification_offset_;
  }
  [[nodiscard]] int input_dim() const { return input_dim_; }
  // Position in tasks() of the task with the given id; throws InputError
  // when absent.
  [[nodiscard]] int index_of(int task_id) const;

 private:
  std::vector<Task> tasks_;
  std::vector<int> offsets_;
  int total_points_ = 0;
  int classification_offset_ = 0;
  int input_dim_ = 0;
};

// Per-task loadings onto the shared latent processes; row i holds task i's
// weights, one column per basis.
using MixingWeights = Eigen::MatrixXd;

// Cross-covariance between outputs i and j at a pair of points:
// sum_b w_ib * w_jb * k_b(x, x').
double cross_cov(const MixingWeights& w, const std::vector<Basis>& bases, int task_i, int task_j,
                 const Eigen::VectorXd& x, const Eigen::VectorXd& x_prime);

// Full stacked covariance over every observation site in the layout. Block
// (i, j) is the cross-covariance between task i's and task j's sites. Task
// indices into `w` are the task_id fields.
GramMatrix assemble_k(const TaskLayout& layout, const MixingWeights& w,
                      const std::vector<Basis>& bases);

// Cross-covariance column between output `task_id` at `x_star` and every
// stacked observation site, in layout order.
Eigen::VectorXd cross_cov_vector(const TaskLayout& layout, const MixingWeights& w,
                                 const std::vector<Basis>& bases, int task_id,
                                 const Eigen::VectorXd& x_star);

// Draws one joint realization of the stacked latent vector f ~ N(0, K),
// deterministic in `seed`. Returns the draw in layout order.
Eigen::VectorXd sample_mogp(const TaskLayout& layout, const MixingWeights& w,
                            const std::vector<Basis>& bases, std::uint64_t seed);

// Shape/compatibility validation shared by the assembly routines. Throws
// InputError when task ids exceed the mixing rows, bases are empty, or the
// mixing column count differs from the basis count.
void validate_mogp_shapes(const TaskLayout& layout, const MixingWeights& w,
                          const std::vector<Basis>& bases);

}  // namespace fedmogp
