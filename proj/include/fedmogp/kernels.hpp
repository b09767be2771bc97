#pragma once

#include <Eigen/Dense>
#include <string>

#include "fedmogp/linalg.hpp"

namespace fedmogp {

enum class KernelFamily { kRbf, kLinear, kLaplace, kCauchy };

KernelFamily kernel_family_from_string(const std::string& name);
std::string to_string(KernelFamily family);

// Stationary/base kernel with two positive hyperparameters:
//   rbf      k(x, x') = phi0 * exp(-phi1/2 * ||x - x'||_2^2)
//   laplace  k(x, x') = phi0 * exp(-phi1/2 * ||x - x'||_1)
//   cauchy   k(x, x') = 1 / (phi1 * ||x - x'||_2^2 + 1)
//   linear   k(x, x') = <x / ||x||_2, x' / ||x'||_2>
// phi0 and phi1 are stored in log space so gradient-based updates stay
// unconstrained; accessors decode. The linear family uses neither
// hyperparameter and the cauchy family uses only phi1; unused values are
// stored but never read.
class KernelSpec {
 public:
  KernelSpec(KernelFamily family, double phi0, double phi1);

  [[nodiscard]] KernelFamily family() const { return family_; }
  [[nodiscard]] double phi0() const { return std::exp(log_phi0_); }
  [[nodiscard]] double phi1() const { return std::exp(log_phi1_); }
  [[nodiscard]] double log_phi0() const { return log_phi0_; }
  [[nodiscard]] double log_phi1() const { return log_phi1_; }

  void set_log_phi0(double v) { log_phi0_ = v; }
  void set_log_phi1(double v) { log_phi1_ = v; }

  // True when the family actually reads the hyperparameter; drives which
  // entries enter the optimizer's parameter vector.
  [[nodiscard]] bool uses_phi0() const;
  [[nodiscard]] bool uses_phi1() const;

 private:
  KernelFamily family_;
  double log_phi0_;
  double log_phi1_;
};

enum class FeatureMapKind { kIdentity, kAffine };

// Deterministic input transform applied before the base kernel. The
// identity map passes inputs through unchanged. The affine map is a single
// dense layer z = A x + b whose entries (A row-major, then b) form the
// trainable parameter vector shared across all tasks.
class FeatureMap {
 public:
  static FeatureMap identity(int input_dim);
  static FeatureMap affine(int input_dim, int latent_dim);

  [[nodiscard]] FeatureMapKind kind() const { return kind_; }
  [[nodiscard]] int input_dim() const { return input_dim_; }
  [[nodiscard]] int latent_dim() const { return latent_dim_; }

  [[nodiscard]] const Eigen::VectorXd& params() const { return params_; }
  void set_params(const Eigen::VectorXd& params);
  [[nodiscard]] int n_params() const { return static_cast<int>(params_.size()); }

  // Maps a single point (throws InputError on dimension mismatch).
  [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  // Maps a row-per-point matrix.
  [[nodiscard]] Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& x) const;

 private:
  FeatureMap(FeatureMapKind kind, int input_dim, int latent_dim, Eigen::VectorXd params);

  FeatureMapKind kind_;
  int input_dim_;
  int latent_dim_;
  Eigen::VectorXd params_;
};

// One latent-process basis of the coregionalization model: a base kernel
// plus the feature map it is evaluated under.
struct Basis {
  KernelSpec kernel;
  FeatureMap map;
};

// k(x, x') for a single pair. Throws InputError on dimension mismatch and
// NumericError on non-finite inputs.
double eval_kernel(const KernelSpec& spec, const FeatureMap& map, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& x_prime);

// Gram matrix between two point sets (rows are points). With identical
// sets the result is symmetric up to roundoff; assemble via gram(spec, map, X)
// to get an exactly symmetric matrix.
Eigen::MatrixXd gram(const KernelSpec& spec, const FeatureMap& map, const Eigen::MatrixXd& x1,
                     const Eigen::MatrixXd& x2);
GramMatrix gram(const KernelSpec& spec, const FeatureMap& map, const Eigen::MatrixXd& x);

}  // namespace fedmogp
