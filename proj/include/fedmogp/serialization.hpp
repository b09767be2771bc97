#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fedmogp/elbo.hpp"
#include "fedmogp/inference.hpp"
#include "fedmogp/kernels.hpp"

namespace fedmogp {

// Matrices travel as {rows, cols, data(row-major)}; vectors as plain
// arrays. Values survive a text round trip exactly (shortest round-trip
// decimal rendering) and a CBOR round trip bit-for-bit.

nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

nlohmann::json basis_to_json(const Basis& basis);
Basis basis_from_json(const nlohmann::json& j);

nlohmann::json prior_to_json(const GlobalPrior& prior);
GlobalPrior prior_from_json(const nlohmann::json& j);

nlohmann::json adam_to_json(const AdamState& state);
AdamState adam_from_json(const nlohmann::json& j);

nlohmann::json pg_to_json(const PGState& pg);
PGState pg_from_json(const nlohmann::json& j);

nlohmann::json posterior_to_json(const GaussianPosterior& posterior);
GaussianPosterior posterior_from_json(const nlohmann::json& j);

nlohmann::json elbo_to_json(const ELBOBreakdown& elbo);
ELBOBreakdown elbo_from_json(const nlohmann::json& j);

}  // namespace fedmogp
