#include "fedmogp/kernels.hpp"

#include <cmath>

#include "fedmogp/errors.hpp"

namespace fedmogp {

KernelFamily kernel_family_from_string(const std::string& name) {
  if (name == "rbf") return KernelFamily::kRbf;
  if (name == "linear") return KernelFamily::kLinear;
  if (name == "laplace") return KernelFamily::kLaplace;
  if (name == "cauchy") return KernelFamily::kCauchy;
  throw InputError("unknown kernel family '" + name + "' (expected rbf|linear|laplace|cauchy)");
}

std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::kRbf: return "rbf";
    case KernelFamily::kLinear: return "linear";
    case KernelFamily::kLaplace: return "laplace";
    case KernelFamily::kCauchy: return "cauchy";
  }
  throw InputError("invalid kernel family enum value");
}

KernelSpec::KernelSpec(KernelFamily family, double phi0, double phi1) : family_(family) {
  if (!(phi0 > 0.0) || !std::isfinite(phi0)) {
    throw InputError("KernelSpec: phi0 must be positive and finite");
  }
  if (!(phi1 > 0.0) || !std::isfinite(phi1)) {
    throw InputError("KernelSpec: phi1 must be positive and finite");
  }
  log_phi0_ = std::log(phi0);
  log_phi1_ = std::log(phi1);
}

bool KernelSpec::uses_phi0() const {
  return family_ == KernelFamily::kRbf || family_ == KernelFamily::kLaplace;
}

bool KernelSpec::uses_phi1() const { return family_ != KernelFamily::kLinear; }

FeatureMap::FeatureMap(FeatureMapKind kind, int input_dim, int latent_dim, Eigen::VectorXd params)
    : kind_(kind), input_dim_(input_dim), latent_dim_(latent_dim), params_(std::move(params)) {}

FeatureMap FeatureMap::identity(int input_dim) {
  if (input_dim <= 0) throw InputError("FeatureMap::identity: input_dim must be positive");
  return FeatureMap(FeatureMapKind::kIdentity, input_dim, input_dim, Eigen::VectorXd());
}

FeatureMap FeatureMap::affine(int input_dim, int latent_dim) {
  if (input_dim <= 0 || latent_dim <= 0) {
    throw InputError("FeatureMap::affine: dimensions must be positive");
  }
  // A starts as (a slice of) the identity and b as zero, so the initial map
  // is the least surprising linear projection.
  Eigen::VectorXd params = Eigen::VectorXd::Zero(latent_dim * input_dim + latent_dim);
  for (int r = 0; r < latent_dim; ++r) {
    int c = r % input_dim;
    params[r * input_dim + c] = 1.0;
  }
  return FeatureMap(FeatureMapKind::kAffine, input_dim, latent_dim, std::move(params));
}

void FeatureMap::set_params(const Eigen::VectorXd& params) {
  if (params.size() != params_.size()) {
    throw InputError("FeatureMap::set_params: expected " + std::to_string(params_.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  params_ = params;
}

Eigen::VectorXd FeatureMap::apply(const Eigen::VectorXd& x) const {
  if (x.size() != input_dim_) {
    throw InputError("FeatureMap::apply: point has dimension " + std::to_string(x.size()) +
                     ", map expects " + std::to_string(input_dim_));
  }
  if (kind_ == FeatureMapKind::kIdentity) return x;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> a(
      params_.data(), latent_dim_, input_dim_);
  Eigen::Map<const Eigen::VectorXd> b(params_.data() + latent_dim_ * input_dim_, latent_dim_);
  return a * x + b;
}

Eigen::MatrixXd FeatureMap::apply_rows(const Eigen::MatrixXd& x) const {
  if (x.cols() != input_dim_) {
    throw InputError("FeatureMap::apply_rows: points have dimension " + std::to_string(x.cols()) +
                     ", map expects " + std::to_string(input_dim_));
  }
  if (kind_ == FeatureMapKind::kIdentity) return x;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> a(
      params_.data(), latent_dim_, input_dim_);
  Eigen::Map<const Eigen::VectorXd> b(params_.data() + latent_dim_ * input_dim_, latent_dim_);
  return (x * a.transpose()).rowwise() + b.transpose();
}

// Unit L2 normalization used by the linear family; the zero vector maps to
// itself so the kernel degrades to 0 instead of dividing by zero.
static Eigen::VectorXd normalize_or_zero(const Eigen::VectorXd& z) {
  double n = z.norm();
  if (n == 0.0) return z;
  return z / n;
}

static double eval_mapped(const KernelSpec& spec, const Eigen::VectorXd& z1,
                          const Eigen::VectorXd& z2) {
  switch (spec.family()) {
    case KernelFamily::kRbf:
      return spec.phi0() * std::exp(-0.5 * spec.phi1() * (z1 - z2).squaredNorm());
    case KernelFamily::kLaplace:
      return spec.phi0() * std::exp(-0.5 * spec.phi1() * (z1 - z2).lpNorm<1>());
    case KernelFamily::kCauchy:
      return 1.0 / (spec.phi1() * (z1 - z2).squaredNorm() + 1.0);
    case KernelFamily::kLinear:
      return normalize_or_zero(z1).dot(normalize_or_zero(z2));
  }
  throw InputError("invalid kernel family enum value");
}

double eval_kernel(const KernelSpec& spec, const FeatureMap& map, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& x_prime) {
  if (!x.allFinite() || !x_prime.allFinite()) {
    throw NumericError("eval_kernel: non-finite input point");
  }
  return eval_mapped(spec, map.apply(x), map.apply(x_prime));
}

Eigen::MatrixXd gram(const KernelSpec& spec, const FeatureMap& map, const Eigen::MatrixXd& x1,
                     const Eigen::MatrixXd& x2) {
  if (!x1.allFinite() || !x2.allFinite()) {
    throw NumericError("gram: non-finite input points");
  }
  Eigen::MatrixXd z1 = map.apply_rows(x1);
  Eigen::MatrixXd z2 = map.apply_rows(x2);
  Eigen::MatrixXd out(z1.rows(), z2.rows());
  for (Eigen::Index i = 0; i < z1.rows(); ++i) {
    for (Eigen::Index j = 0; j < z2.rows(); ++j) {
      out(i, j) = eval_mapped(spec, z1.row(i), z2.row(j));
    }
  }
  return out;
}

GramMatrix gram(const KernelSpec& spec, const FeatureMap& map, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd full = gram(spec, map, x, x);
  // Force exact symmetry so downstream factorizations see a clean input.
  GramMatrix g;
  g.entries = 0.5 * (full + full.transpose());
  return g;
}

}  // namespace fedmogp
