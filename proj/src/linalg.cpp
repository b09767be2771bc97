#include "fedmogp/linalg.hpp"

#include <cmath>
#include <vector>

#include "fedmogp/errors.hpp"
#include "fedmogp/logging.hpp"

namespace fedmogp {

double CholeskyFactor::log_det() const {
  return 2.0 * lower.diagonal().array().log().sum();
}

Eigen::VectorXd CholeskyFactor::solve(const Eigen::VectorXd& b) const {
  Eigen::VectorXd y = lower.triangularView<Eigen::Lower>().solve(b);
  return lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

Eigen::MatrixXd CholeskyFactor::solve(const Eigen::MatrixXd& b) const {
  Eigen::MatrixXd y = lower.triangularView<Eigen::Lower>().solve(b);
  return lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

double CholeskyFactor::inv_quad(const Eigen::VectorXd& b) const {
  Eigen::VectorXd y = lower.triangularView<Eigen::Lower>().solve(b);
  return y.squaredNorm();
}

static CholeskyFactor factorize_with_escalation(const Eigen::MatrixXd& entries,
                                                const std::string& label, double base_jitter,
                                                int max_escalations, double* jitter_out) {
  if (entries.rows() != entries.cols()) {
    throw InputError("stabilized_cholesky: matrix '" + label + "' is not square");
  }
  if (!entries.allFinite()) {
    throw NumericError("stabilized_cholesky: matrix '" + label + "' has non-finite entries");
  }

  double jitter = base_jitter;
  for (int attempt = 0; attempt <= max_escalations; ++attempt) {
    Eigen::MatrixXd boosted = entries;
    boosted.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(boosted);
    if (llt.info() == Eigen::Success) {
      if (attempt > 0) {
        log::debug("stabilized_cholesky: '" + label + "' needed jitter " + std::to_string(jitter));
      }
      if (jitter_out != nullptr) *jitter_out = jitter;
      return CholeskyFactor{llt.matrixL(), jitter};
    }
    // A zero base (exactness tests) still needs somewhere to escalate to.
    jitter = jitter == 0.0 ? 1e-12 : jitter * 10.0;
  }
  throw SingularMatrixError("stabilized_cholesky: matrix '" + label +
                            "' is singular (jitter escalation exhausted)");
}

CholeskyFactor stabilized_cholesky(GramMatrix& gram, const std::string& label, double base_jitter,
                                   int max_escalations) {
  return factorize_with_escalation(gram.entries, label, base_jitter, max_escalations,
                                   &gram.jitter_applied);
}

CholeskyFactor stabilized_cholesky(const Eigen::MatrixXd& entries, const std::string& label,
                                   double base_jitter, int max_escalations) {
  return factorize_with_escalation(entries, label, base_jitter, max_escalations, nullptr);
}

static double pairwise_sum_range(const double* data, std::size_t n) {
  if (n == 0) return 0.0;
  if (n <= 8) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += data[i];
    return acc;
  }
  const std::size_t half = n / 2;
  return pairwise_sum_range(data, half) + pairwise_sum_range(data + half, n - half);
}

double pairwise_sum(const Eigen::VectorXd& values) {
  return pairwise_sum_range(values.data(), static_cast<std::size_t>(values.size()));
}

double pairwise_sum(const std::vector<double>& values) {
  return pairwise_sum_range(values.data(), values.size());
}

}  // namespace fedmogp
