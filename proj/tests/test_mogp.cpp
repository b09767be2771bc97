#include <Eigen/Dense>
#include <doctest.h>

#include "fedmogp/errors.hpp"
#include "fedmogp/mogp.hpp"

using namespace fedmogp;

namespace {

Eigen::MatrixXd points(std::initializer_list<double> xs) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

std::vector<Basis> two_rbf_bases() {
  return {Basis{KernelSpec(KernelFamily::kRbf, 1.0, 0.02), FeatureMap::identity(1)},
          Basis{KernelSpec(KernelFamily::kRbf, 2.0, 0.01), FeatureMap::identity(1)}};
}

MixingWeights paper_mixing() {
  MixingWeights w(2, 2);
  w << 0.6, 0.4, 0.4, 0.6;
  return w;
}

}  // namespace

TEST_CASE("layout orders regression tasks before classification, each by id") {
  std::vector<Task> tasks;
  tasks.push_back({3, TaskKind::kClassification, points({0, 1})});
  tasks.push_back({1, TaskKind::kRegression, points({0, 1, 2})});
  tasks.push_back({0, TaskKind::kClassification, points({0})});
  tasks.push_back({2, TaskKind::kRegression, points({5})});
  TaskLayout layout(tasks);

  REQUIRE(layout.n_tasks() == 4);
  CHECK(layout.tasks()[0].task_id == 1);
  CHECK(layout.tasks()[1].task_id == 2);
  CHECK(layout.tasks()[2].task_id == 0);
  CHECK(layout.tasks()[3].task_id == 3);
  CHECK(layout.total_points() == 7);
  CHECK(layout.offset(0) == 0);
  CHECK(layout.offset(1) == 3);
  CHECK(layout.offset(2) == 4);
  CHECK(layout.offset(3) == 5);
  CHECK(layout.classification_offset() == 4);
  CHECK(layout.n_classification_points() == 3);
  CHECK(layout.index_of(2) == 1);
  CHECK_THROWS_AS(layout.index_of(9), InputError);
}

TEST_CASE("layout rejects duplicate task ids and dimension mismatches") {
  std::vector<Task> dup;
  dup.push_back({0, TaskKind::kRegression, points({0})});
  dup.push_back({0, TaskKind::kClassification, points({1})});
  CHECK_THROWS_AS(TaskLayout{dup}, InputError);

  std::vector<Task> mixed_dim;
  mixed_dim.push_back({0, TaskKind::kRegression, points({0})});
  mixed_dim.push_back({1, TaskKind::kRegression, Eigen::MatrixXd::Zero(1, 2)});
  CHECK_THROWS_AS(TaskLayout{mixed_dim}, InputError);
}

TEST_CASE("cross covariance matches the coregionalization sum") {
  const std::vector<Basis> bases = two_rbf_bases();
  const MixingWeights w = paper_mixing();
  const Eigen::VectorXd x = points({10.0}).row(0);
  // At coincident points k_1 = 1 and k_2 = 2:
  //   k_00 = 0.36 * 1 + 0.16 * 2,  k_01 = 0.24 * 1 + 0.24 * 2.
  CHECK(cross_cov(w, bases, 0, 0, x, x) == doctest::Approx(0.68).epsilon(1e-15));
  CHECK(cross_cov(w, bases, 0, 1, x, x) == doctest::Approx(0.72).epsilon(1e-15));
  CHECK(cross_cov(w, bases, 1, 0, x, x) == cross_cov(w, bases, 0, 1, x, x));
}

TEST_CASE("assembled covariance is symmetric with coregionalization blocks") {
  std::vector<Task> tasks;
  tasks.push_back({0, TaskKind::kRegression, points({0.0, 4.0})});
  tasks.push_back({1, TaskKind::kClassification, points({0.0, 4.0})});
  TaskLayout layout(tasks);
  const std::vector<Basis> bases = two_rbf_bases();
  const MixingWeights w = paper_mixing();

  GramMatrix k = assemble_k(layout, w, bases);
  REQUIRE(k.entries.rows() == 4);
  CHECK((k.entries - k.entries.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(k.entries(0, 0) == doctest::Approx(0.68).epsilon(1e-14));
  CHECK(k.entries(0, 2) == doctest::Approx(0.72).epsilon(1e-14));
  const Eigen::VectorXd x0 = points({0.0}).row(0);
  const Eigen::VectorXd x1 = points({4.0}).row(0);
  CHECK(k.entries(0, 3) == doctest::Approx(cross_cov(w, bases, 0, 1, x0, x1)).epsilon(1e-14));
}

TEST_CASE("cross covariance vector lines up with the assembled matrix") {
  std::vector<Task> tasks;
  tasks.push_back({0, TaskKind::kRegression, points({0.0, 4.0})});
  tasks.push_back({1, TaskKind::kClassification, points({1.0})});
  TaskLayout layout(tasks);
  const std::vector<Basis> bases = two_rbf_bases();
  const MixingWeights w = paper_mixing();

  const Eigen::VectorXd x = points({4.0}).row(0);
  Eigen::VectorXd kstar = cross_cov_vector(layout, w, bases, 0, x);
  REQUIRE(kstar.size() == 3);
  GramMatrix k = assemble_k(layout, w, bases);
  // x coincides with task 0's second site, so k* equals that column.
  CHECK((kstar - k.entries.col(1)).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("latent draws are deterministic in the seed") {
  std::vector<Task> tasks;
  tasks.push_back({0, TaskKind::kRegression, points({0.0, 1.0, 2.0})});
  tasks.push_back({1, TaskKind::kClassification, points({0.0, 1.0, 2.0})});
  TaskLayout layout(tasks);
  const std::vector<Basis> bases = two_rbf_bases();
  const MixingWeights w = paper_mixing();

  Eigen::VectorXd a = sample_mogp(layout, w, bases, 7);
  Eigen::VectorXd b = sample_mogp(layout, w, bases, 7);
  Eigen::VectorXd c = sample_mogp(layout, w, bases, 8);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
  CHECK(a.allFinite());
  CHECK(a.size() == 6);
}

TEST_CASE("shape validation names the failure") {
  std::vector<Task> tasks;
  tasks.push_back({0, TaskKind::kRegression, points({0.0})});
  tasks.push_back({5, TaskKind::kClassification, points({1.0})});
  TaskLayout layout(tasks);
  const std::vector<Basis> bases = two_rbf_bases();

  // Task id 5 falls outside a 2-row mixing matrix.
  CHECK_THROWS_AS(validate_mogp_shapes(layout, paper_mixing(), bases), InputError);
  // Mixing columns must match the basis count.
  std::vector<Task> ok_tasks;
  ok_tasks.push_back({0, TaskKind::kRegression, points({0.0})});
  ok_tasks.push_back({1, TaskKind::kClassification, points({1.0})});
  TaskLayout ok_layout(ok_tasks);
  CHECK_THROWS_AS(validate_mogp_shapes(ok_layout, Eigen::MatrixXd::Ones(2, 3), bases), InputError);
  CHECK_THROWS_AS(validate_mogp_shapes(ok_layout, paper_mixing(), {}), InputError);
}
