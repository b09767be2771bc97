#include "fedmogp/serialization.hpp"

#include "fedmogp/errors.hpp"

using nlohmann::json;

namespace fedmogp {

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("serialized vector must be an array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json out;
  out["rows"] = m.rows();
  out["cols"] = m.cols();
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  out["data"] = std::move(data);
  return out;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data")) {
    throw ParseError("serialized matrix must carry rows, cols, data");
  }
  const Eigen::Index rows = j["rows"].get<Eigen::Index>();
  const Eigen::Index cols = j["cols"].get<Eigen::Index>();
  const json& data = j["data"];
  if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ParseError("serialized matrix data length disagrees with its shape");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[i++].get<double>();
  }
  return m;
}

json basis_to_json(const Basis& basis) {
  json out;
  out["family"] = to_string(basis.kernel.family());
  out["log_phi0"] = basis.kernel.log_phi0();
  out["log_phi1"] = basis.kernel.log_phi1();
  out["map"] = {
      {"kind", basis.map.kind() == FeatureMapKind::kIdentity ? "identity" : "affine"},
      {"input_dim", basis.map.input_dim()},
      {"latent_dim", basis.map.latent_dim()},
      {"params", vector_to_json(basis.map.params())},
  };
  return out;
}

Basis basis_from_json(const json& j) {
  KernelSpec kernel(kernel_family_from_string(j.at("family").get<std::string>()), 1.0, 1.0);
  kernel.set_log_phi0(j.at("log_phi0").get<double>());
  kernel.set_log_phi1(j.at("log_phi1").get<double>());
  const json& jm = j.at("map");
  const std::string kind = jm.at("kind").get<std::string>();
  FeatureMap map = kind == "identity"
                       ? FeatureMap::identity(jm.at("input_dim").get<int>())
                       : FeatureMap::affine(jm.at("input_dim").get<int>(),
                                            jm.at("latent_dim").get<int>());
  map.set_params(vector_from_json(jm.at("params")));
  return Basis{kernel, map};
}

json prior_to_json(const GlobalPrior& prior) {
  json out;
  out["bases"] = json::array();
  for (const Basis& b : prior.bases) out["bases"].push_back(basis_to_json(b));
  out["mixing"] = matrix_to_json(prior.mixing);
  json noise = json::array();
  for (const auto& [task_id, s2] : prior.noise_variance) {
    noise.push_back({{"task_id", task_id}, {"sigma2", s2}});
  }
  out["noise"] = std::move(noise);
  return out;
}

GlobalPrior prior_from_json(const json& j) {
  GlobalPrior prior;
  for (const json& jb : j.at("bases")) prior.bases.push_back(basis_from_json(jb));
  prior.mixing = matrix_from_json(j.at("mixing"));
  for (const json& jn : j.at("noise")) {
    prior.noise_variance[jn.at("task_id").get<int>()] = jn.at("sigma2").get<double>();
  }
  validate_prior(prior);
  return prior;
}

json adam_to_json(const AdamState& state) {
  json out;
  out["step"] = state.step;
  out["first_moment"] = vector_to_json(state.first_moment);
  out["second_moment"] = vector_to_json(state.second_moment);
  out["learning_rate"] = state.learning_rate;
  out["beta1"] = state.beta1;
  out["beta2"] = state.beta2;
  out["epsilon"] = state.epsilon;
  return out;
}

AdamState adam_from_json(const json& j) {
  AdamState s;
  s.step = j.at("step").get<int>();
  s.first_moment = vector_from_json(j.at("first_moment"));
  s.second_moment = vector_from_json(j.at("second_moment"));
  s.learning_rate = j.at("learning_rate").get<double>();
  s.beta1 = j.at("beta1").get<double>();
  s.beta2 = j.at("beta2").get<double>();
  s.epsilon = j.at("epsilon").get<double>();
  return s;
}

json pg_to_json(const PGState& pg) {
  return {{"tilt", vector_to_json(pg.tilt)}, {"omega_mean", vector_to_json(pg.omega_mean)}};
}

PGState pg_from_json(const json& j) {
  PGState pg;
  pg.tilt = vector_from_json(j.at("tilt"));
  pg.omega_mean = vector_from_json(j.at("omega_mean"));
  if (pg.tilt.size() != pg.omega_mean.size()) {
    throw ParseError("serialized PG state has inconsistent lengths");
  }
  return pg;
}

json posterior_to_json(const GaussianPosterior& posterior) {
  return {{"mean", vector_to_json(posterior.mean)},
          {"cov", matrix_to_json(posterior.cov)},
          {"log_det_cov", posterior.log_det_cov}};
}

GaussianPosterior posterior_from_json(const json& j) {
  GaussianPosterior p;
  p.mean = vector_from_json(j.at("mean"));
  p.cov = matrix_from_json(j.at("cov"));
  p.log_det_cov = j.at("log_det_cov").get<double>();
  if (p.mean.size() != p.cov.rows() || p.cov.rows() != p.cov.cols()) {
    throw ParseError("serialized posterior has inconsistent shapes");
  }
  return p;
}

json elbo_to_json(const ELBOBreakdown& elbo) {
  return {{"a", elbo.term_a}, {"b", elbo.term_b}, {"c", elbo.term_c},
          {"d", elbo.term_d}, {"total", elbo.total}};
}

ELBOBreakdown elbo_from_json(const json& j) {
  ELBOBreakdown e;
  e.term_a = j.at("a").get<double>();
  e.term_b = j.at("b").get<double>();
  e.term_c = j.at("c").get<double>();
  e.term_d = j.at("d").get<double>();
  e.total = j.at("total").get<double>();
  return e;
}

}  // namespace fedmogp
