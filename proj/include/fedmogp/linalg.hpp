#pragma once

#include <Eigen/Dense>
#include <string>

namespace fedmogp {

// Symmetric positive semi-definite matrix produced by a covariance assembly.
// `jitter_applied` records the diagonal boost a later factorization needed;
// it is zero until stabilized_cholesky has run.
struct GramMatrix {
  Eigen::MatrixXd entries;
  double jitter_applied = 0.0;
};

// Lower-triangular Cholesky factor of `entries + jitter * I`. Consumers that
// share a factor automatically share a consistent jitter.
struct CholeskyFactor {
  Eigen::MatrixXd lower;
  double jitter = 0.0;

  [[nodiscard]] Eigen::Index size() const { return lower.rows(); }

  // log det of the factorized (jittered) matrix.
  [[nodiscard]] double log_det() const;

  // Solves (L L^T) x = b.
  [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  [[nodiscard]] Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const;

  // Quadratic form b^T (L L^T)^{-1} b.
  [[nodiscard]] double inv_quad(const Eigen::VectorXd& b) const;
};

// Factorizes a symmetric PSD matrix, escalating a diagonal jitter from
// `base_jitter` by factors of 10 (at most `max_escalations` escalations)
// until the factorization succeeds. Records the jitter actually applied on
// the returned factor and on `gram`. Throws SingularMatrixError with
// `label` in the message once the escalation budget is exhausted, and
// NumericError if the matrix contains non-finite entries.
CholeskyFactor stabilized_cholesky(GramMatrix& gram, const std::string& label,
                                   double base_jitter = 1e-6, int max_escalations = 6);

// Convenience overload for callers that do not need the jitter recorded
// back onto the Gram matrix.
CholeskyFactor stabilized_cholesky(const Eigen::MatrixXd& entries, const std::string& label,
                                   double base_jitter = 1e-6, int max_escalations = 6);

// Pairwise (cascade) summation; the result does not depend on how callers
// interleave contributions of equal index order, and error stays O(log n).
double pairwise_sum(const Eigen::VectorXd& values);
double pairwise_sum(const std::vector<double>& values);

}  // namespace fedmogp
