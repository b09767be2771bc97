#include <Eigen/Dense>
#include <cmath>
#include <doctest.h>
#include <initializer_list>
#include <limits>
#include <vector>

#include "fedmogp/diagnostics.hpp"
#include "fedmogp/errors.hpp"
#include "fedmogp/inference.hpp"
#include "fedmogp/kernels.hpp"
#include "fedmogp/mogp.hpp"
#include "fedmogp/polya_gamma.hpp"

using namespace fedmogp;

namespace {

Eigen::MatrixXd points(std::initializer_list<double> xs) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index r = 0;
  for (double x : xs) m(r++, 0) = x;
  return m;
}

// One task, unit RBF kernel, so the prior covariance at a single point is
// exactly [[1]] and every posterior quantity has a hand-computable value.
struct UnitFixture {
  std::vector<Basis> bases;
  MixingWeights w;
  TaskLayout layout;
  CholeskyFactor k;

  UnitFixture(TaskKind kind, std::initializer_list<double> xs)
      : bases{{KernelSpec(KernelFamily::kRbf, 1.0, 1.0), FeatureMap::identity(1)}},
        w(Eigen::MatrixXd::Ones(1, 1)),
        layout(std::vector<Task>{{0, kind, points(xs)}}) {
    GramMatrix gram = assemble_k(layout, w, bases);
    k = stabilized_cholesky(gram, "unit fixture", 0.0);
  }
};

}  // namespace

TEST_CASE("single regression point reproduces the conjugate Gaussian update") {
  UnitFixture fix(TaskKind::kRegression, {0.0});
  REQUIRE(fix.k.jitter == 0.0);

  ObservationSet obs{fix.layout, Eigen::VectorXd::Ones(1), {0.1}};
  PGState pg{Eigen::VectorXd(0), Eigen::VectorXd(0)};
  SiteMatrices sites = site_matrices(pg, obs);
  CHECK(sites.precision[0] == 10.0);
  CHECK(sites.pseudo_target[0] == 1.0);

  GaussianPosterior post = update_q_f(sites, fix.k);
  // cov = (1/k + 1/sigma^2)^{-1} = 1/11, mean = cov * y / sigma^2 = 10/11.
  CHECK(post.cov(0, 0) == doctest::Approx(1.0 / 11.0).epsilon(1e-15));
  CHECK(post.mean[0] == doctest::Approx(10.0 / 11.0).epsilon(1e-15));
  CHECK(post.log_det_cov == doctest::Approx(-std::log(11.0)).epsilon(1e-15));
}

TEST_CASE("posterior plus predict equals exact GP regression") {
  UnitFixture fix(TaskKind::kRegression, {0.0});
  ObservationSet obs{fix.layout, Eigen::VectorXd::Ones(1), {0.1}};
  MeanFieldState state = mean_field_sweep(initial_state(fix.k, fix.layout), obs, fix.k, 1);

  Eigen::VectorXd x_star(1);
  x_star << 1.0;
  Prediction pred = predict(fix.bases, fix.w, fix.layout, fix.k, state.posterior, 0, x_star);
  // Closed form at distance 1: k* = e^{-1/2}, mean = k*/(1 + sigma^2),
  // var = 1 - k*^2/(1 + sigma^2).
  const double ks = std::exp(-0.5);
  CHECK(pred.mean == doctest::Approx(ks / 1.1).epsilon(1e-14));
  CHECK(pred.variance == doctest::Approx(1.0 - ks * ks / 1.1).epsilon(1e-14));
  CHECK_FALSE(pred.class_probability.has_value());

  Eigen::VectorXd at_site(1);
  at_site << 0.0;
  Prediction on_site = predict(fix.bases, fix.w, fix.layout, fix.k, state.posterior, 0, at_site);
  CHECK(on_site.mean == doctest::Approx(10.0 / 11.0).epsilon(1e-14));
  CHECK(on_site.variance == doctest::Approx(1.0 / 11.0).epsilon(1e-14));
}

TEST_CASE("single classification point with fixed PG mean") {
  UnitFixture fix(TaskKind::kClassification, {0.0});
  ObservationSet obs{fix.layout, Eigen::VectorXd::Ones(1), {}};
  PGState pg;
  pg.tilt = Eigen::VectorXd::Zero(1);
  pg.omega_mean = Eigen::VectorXd::Constant(1, 0.25);

  SiteMatrices sites = site_matrices(pg, obs);
  CHECK(sites.precision[0] == 0.25);
  CHECK(sites.pseudo_target[0] == 2.0);  // y / (2 omega)

  GaussianPosterior post = update_q_f(sites, fix.k);
  CHECK(post.cov(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(post.mean[0] == doctest::Approx(0.4).epsilon(1e-15));

  PGState next = update_q_omega(post, fix.layout);
  CHECK(next.tilt[0] == doctest::Approx(std::sqrt(0.96)).epsilon(1e-15));
  CHECK(next.omega_mean[0] ==
        doctest::Approx(pg_expectation(1.0, std::sqrt(0.96))).epsilon(1e-15));
}

TEST_CASE("initial state sits at the prior") {
  UnitFixture fix(TaskKind::kClassification, {0.0});
  MeanFieldState state = initial_state(fix.k, fix.layout);
  CHECK(state.posterior.mean[0] == 0.0);
  CHECK(state.posterior.cov(0, 0) == 1.0);
  CHECK(state.posterior.log_det_cov == 0.0);
  // tilt = sqrt(prior marginal second moment) = sqrt(1).
  CHECK(state.pg.tilt[0] == 1.0);
  CHECK(state.pg.omega_mean[0] == doctest::Approx(0.23105857863000487).epsilon(1e-15));
}

TEST_CASE("mean-field sweep is deterministic and idempotent for regression") {
  UnitFixture fix(TaskKind::kRegression, {0.0, 1.0, 2.5});
  Eigen::VectorXd y(3);
  y << 1.0, -0.5, 0.25;
  ObservationSet obs{fix.layout, y, {0.1}};

  MeanFieldState init = initial_state(fix.k, fix.layout);
  MeanFieldState a = mean_field_sweep(init, obs, fix.k, 1);
  MeanFieldState b = mean_field_sweep(init, obs, fix.k, 4);
  // Regression sites do not depend on the posterior, so one sweep already
  // reaches the fixed point bit for bit.
  CHECK((a.posterior.mean - b.posterior.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.posterior.cov - b.posterior.cov).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.posterior.log_det_cov == b.posterior.log_det_cov);

  MeanFieldState c = mean_field_sweep(init, obs, fix.k, 0);
  CHECK((c.posterior.mean - init.posterior.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(mean_field_sweep(init, obs, fix.k, -1), InputError);
}

TEST_CASE("mixed-task update matches the dense normal equations") {
  std::vector<Basis> bases{
      {KernelSpec(KernelFamily::kRbf, 1.0, 0.02), FeatureMap::identity(1)},
      {KernelSpec(KernelFamily::kRbf, 2.0, 0.01), FeatureMap::identity(1)},
  };
  MixingWeights w(2, 2);
  w << 0.6, 0.4, 0.4, 0.6;
  TaskLayout layout(std::vector<Task>{
      {0, TaskKind::kRegression, points({0.0, 1.0})},
      {1, TaskKind::kClassification, points({0.5})},
  });
  GramMatrix gram = assemble_k(layout, w, bases);
  Eigen::MatrixXd k_dense = gram.entries;
  CholeskyFactor k = stabilized_cholesky(gram, "mixed", 0.0);
  REQUIRE(k.jitter == 0.0);

  Eigen::VectorXd y(3);
  y << 1.0, -1.0, 1.0;
  ObservationSet obs{layout, y, {0.1}};
  PGState pg;
  pg.tilt = Eigen::VectorXd::Zero(1);
  pg.omega_mean = Eigen::VectorXd::Constant(1, 0.25);
  SiteMatrices sites = site_matrices(pg, obs);
  GaussianPosterior post = update_q_f(sites, k);

  Eigen::MatrixXd h = sites.precision.asDiagonal();
  Eigen::MatrixXd cov_direct = (k_dense.inverse() + h).inverse();
  Eigen::VectorXd mean_direct = cov_direct * h * sites.pseudo_target;
  CHECK((post.cov - cov_direct).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((post.mean - mean_direct).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(post.log_det_cov ==
        doctest::Approx(std::log(cov_direct.determinant())).epsilon(1e-10));
}

TEST_CASE("moment-matched class probability") {
  UnitFixture fix(TaskKind::kClassification, {0.0});
  GaussianPosterior post;
  post.mean = Eigen::VectorXd::Constant(1, 1.0);
  post.cov = Eigen::MatrixXd::Constant(1, 1, 2.0);

  Eigen::VectorXd at_site(1);
  at_site << 0.0;
  Prediction pred = predict(fix.bases, fix.w, fix.layout, fix.k, post, 0, at_site);
  CHECK(pred.mean == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pred.variance == doctest::Approx(2.0).epsilon(1e-15));
  REQUIRE(pred.class_probability.has_value());
  // sigmoid(1 / sqrt(1 + pi/4)) to 17 digits.
  CHECK(*pred.class_probability == doctest::Approx(0.67882947110239067).epsilon(1e-14));
}

TEST_CASE("numerical guardrails clamp and count") {
  diagnostics::reset();

  UnitFixture fix(TaskKind::kClassification, {0.0});
  GaussianPosterior negative;
  negative.mean = Eigen::VectorXd::Zero(1);
  negative.cov = Eigen::MatrixXd::Constant(1, 1, -1e-3);
  PGState pg = update_q_omega(negative, fix.layout);
  CHECK(pg.tilt[0] == 0.0);
  CHECK(pg.omega_mean[0] == 0.25);
  CHECK(diagnostics::second_moment_clamps() == 1);

  GaussianPosterior degenerate;
  degenerate.mean = Eigen::VectorXd::Zero(1);
  degenerate.cov = Eigen::MatrixXd::Zero(1, 1);
  Eigen::VectorXd at_site(1);
  at_site << 0.0;
  Prediction pred = predict(fix.bases, fix.w, fix.layout, fix.k, degenerate, 0, at_site);
  CHECK(pred.variance == kVarianceFloor);
  CHECK(diagnostics::variance_clamps() == 1);

  diagnostics::reset();
  CHECK(diagnostics::second_moment_clamps() == 0);
  CHECK(diagnostics::variance_clamps() == 0);
}

TEST_CASE("observation validation rejects malformed inputs") {
  TaskLayout layout(std::vector<Task>{
      {0, TaskKind::kRegression, points({0.0})},
      {1, TaskKind::kClassification, points({1.0})},
  });

  ObservationSet ok{layout, Eigen::VectorXd::Ones(2), {0.1}};
  CHECK_NOTHROW(validate_observations(ok));

  ObservationSet short_targets = ok;
  short_targets.targets = Eigen::VectorXd::Ones(1);
  CHECK_THROWS_AS(validate_observations(short_targets), InputError);

  ObservationSet bad_label = ok;
  bad_label.targets[1] = 0.5;
  CHECK_THROWS_AS(validate_observations(bad_label), InputError);

  ObservationSet missing_noise = ok;
  missing_noise.noise_variance = {};
  CHECK_THROWS_AS(validate_observations(missing_noise), InputError);

  ObservationSet bad_noise = ok;
  bad_noise.noise_variance = {0.0};
  CHECK_THROWS_AS(validate_observations(bad_noise), InputError);

  ObservationSet nan_target = ok;
  nan_target.targets[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate_observations(nan_target), NumericError);
}

TEST_CASE("site and posterior shape mismatches throw") {
  UnitFixture fix(TaskKind::kClassification, {0.0});
  ObservationSet obs{fix.layout, Eigen::VectorXd::Ones(1), {}};

  PGState too_long;
  too_long.tilt = Eigen::VectorXd::Zero(2);
  too_long.omega_mean = Eigen::VectorXd::Constant(2, 0.25);
  CHECK_THROWS_AS(site_matrices(too_long, obs), InputError);

  PGState zero_omega;
  zero_omega.tilt = Eigen::VectorXd::Zero(1);
  zero_omega.omega_mean = Eigen::VectorXd::Zero(1);
  CHECK_THROWS_AS(site_matrices(zero_omega, obs), NumericError);

  SiteMatrices mismatched;
  mismatched.precision = Eigen::VectorXd::Ones(2);
  mismatched.pseudo_target = Eigen::VectorXd::Ones(2);
  CHECK_THROWS_AS(update_q_f(mismatched, fix.k), InputError);

  CHECK_THROWS_AS(make_posterior(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(1, 1)),
                  InputError);
}
