#include <algorithm>
#include <doctest.h>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "fedmogp/config.hpp"
#include "fedmogp/errors.hpp"

using namespace fedmogp;
namespace fs = std::filesystem;

namespace {

fs::path write_config(const std::string& name, const std::string& body) {
  fs::path dir = fs::temp_directory_path() / "fedmogp_tests" / "config";
  fs::create_directories(dir);
  fs::path path = dir / name;
  std::ofstream out(path);
  out << body;
  return path;
}

}  // namespace

TEST_CASE("defaults reproduce the benchmark schedule") {
  ExperimentConfig cfg = parse_config("", {});
  CHECK(cfg.federation.rounds == 20);
  CHECK(cfg.federation.n_clients == 5);
  CHECK(cfg.federation.sample_size == 5);
  CHECK(cfg.federation.mf_iters == 2);
  CHECK(cfg.federation.local_iters == 2);
  CHECK(cfg.federation.mode == AggregationMode::kA);
  CHECK(cfg.federation.inducing_m == 0);
  CHECK(cfg.federation.learning_rate == 0.01);
  CHECK(cfg.federation.seed == 1);
  CHECK(cfg.federation.line_search);
  CHECK_FALSE(cfg.federation.warm_start);
  CHECK(cfg.points == 50);
  CHECK(cfg.new_clients == 0);
  CHECK(cfg.noise_variance == 0.1);
  CHECK(cfg.data_kernel == KernelFamily::kRbf);
  CHECK(cfg.kernel == KernelFamily::kRbf);
  REQUIRE(cfg.kernel_params.size() == 2);
  CHECK(cfg.kernel_params[0] == std::pair<double, double>{1.0, 0.02});
  CHECK(cfg.mixing.rows() == 2);
  CHECK(cfg.sigma2_init == 0.1);
  CHECK(cfg.feature_map == "identity");
  CHECK(cfg.out_dir == "out");
  CHECK(cfg.calibration_bins == 10);
  CHECK(cfg.checkpoint_every == 1);
}

TEST_CASE("file values land on the right fields") {
  fs::path path = write_config("full.json", R"({
    "rounds": 7,
    "clients": 9,
    "sample_size": 4,
    "mf_iters": 3,
    "local_iters": 1,
    "aggregation_mode": "K",
    "inducing_m": 12,
    "learning_rate": 0.05,
    "seed": 42,
    "line_search": false,
    "warm_start": true,
    "data": "some/manifest.json",
    "points": 16,
    "new_clients": 2,
    "noise_variance": 0.2,
    "data_kernel": "laplace",
    "domain": [-1.0, 4.0],
    "random_placement": true,
    "test_fraction": 0.25,
    "k_shot": 3,
    "kernel": "cauchy",
    "kernel_params": [[2.0, 0.5]],
    "mixing": [[0.7], [0.3]],
    "sigma2_init": 0.3,
    "feature_map": "affine",
    "feature_dim": 2,
    "out": "artifacts",
    "resume": "ck.cbor",
    "calibration_bins": 5,
    "checkpoint_every": 3
  })");
  ExperimentConfig cfg = parse_config(path.string(), {});
  CHECK(cfg.federation.rounds == 7);
  CHECK(cfg.federation.n_clients == 9);
  CHECK(cfg.federation.sample_size == 4);
  CHECK(cfg.federation.mf_iters == 3);
  CHECK(cfg.federation.local_iters == 1);
  CHECK(cfg.federation.mode == AggregationMode::kK);
  CHECK(cfg.federation.inducing_m == 12);
  CHECK(cfg.federation.learning_rate == 0.05);
  CHECK(cfg.federation.seed == 42);
  CHECK_FALSE(cfg.federation.line_search);
  CHECK(cfg.federation.warm_start);
  CHECK(cfg.data_manifest == "some/manifest.json");
  CHECK(cfg.points == 16);
  CHECK(cfg.new_clients == 2);
  CHECK(cfg.noise_variance == 0.2);
  CHECK(cfg.data_kernel == KernelFamily::kLaplace);
  CHECK(cfg.domain_lo == -1.0);
  CHECK(cfg.domain_hi == 4.0);
  CHECK(cfg.random_placement);
  CHECK(cfg.test_fraction == 0.25);
  CHECK(cfg.k_shot == 3);
  CHECK(cfg.kernel == KernelFamily::kCauchy);
  REQUIRE(cfg.kernel_params.size() == 1);
  CHECK(cfg.kernel_params[0] == std::pair<double, double>{2.0, 0.5});
  CHECK(cfg.mixing(0, 0) == 0.7);
  CHECK(cfg.mixing(1, 0) == 0.3);
  CHECK(cfg.sigma2_init == 0.3);
  CHECK(cfg.feature_map == "affine");
  CHECK(cfg.feature_dim == 2);
  CHECK(cfg.out_dir == "artifacts");
  CHECK(cfg.resume_from == "ck.cbor");
  CHECK(cfg.calibration_bins == 5);
  CHECK(cfg.checkpoint_every == 3);
}

TEST_CASE("command-line flags override the file") {
  fs::path path = write_config("base.json", R"({"rounds": 7, "out": "from_file"})");
  CliOverrides overrides;
  overrides.rounds = 3;
  overrides.out_dir = "from_flag";
  overrides.aggregation_mode = "N";
  overrides.seed = 99;
  ExperimentConfig cfg = parse_config(path.string(), overrides);
  CHECK(cfg.federation.rounds == 3);
  CHECK(cfg.out_dir == "from_flag");
  CHECK(cfg.federation.mode == AggregationMode::kN);
  CHECK(cfg.federation.seed == 99);
}

TEST_CASE("sample size follows the client count unless pinned") {
  fs::path more_clients = write_config("clients.json", R"({"clients": 8})");
  CHECK(parse_config(more_clients.string(), {}).federation.sample_size == 8);

  fs::path pinned = write_config("pinned.json", R"({"clients": 8, "sample_size": 2})");
  CHECK(parse_config(pinned.string(), {}).federation.sample_size == 2);

  CliOverrides fewer;
  fewer.clients = 3;
  CHECK(parse_config("", fewer).federation.sample_size == 3);

  CliOverrides flag_pinned;
  flag_pinned.clients = 6;
  flag_pinned.sample_size = 2;
  ExperimentConfig cfg = parse_config("", flag_pinned);
  CHECK(cfg.federation.n_clients == 6);
  CHECK(cfg.federation.sample_size == 2);
}

TEST_CASE("whitespace-only files mean defaults; unreadable files are errors") {
  fs::path blank = write_config("blank.json", " \n\t  \n");
  CHECK(parse_config(blank.string(), {}).federation.rounds == 20);
  CHECK_THROWS_AS(parse_config("/nonexistent/config.json", {}), InputError);
}

TEST_CASE("unknown keys and type mismatches are named in the error") {
  fs::path unknown = write_config("unknown.json", R"({"round": 3})");
  CHECK_THROWS_WITH_AS(parse_config(unknown.string(), {}), doctest::Contains("round"),
                       InputError);

  fs::path mistyped = write_config("mistyped.json", R"({"rounds": "three"})");
  CHECK_THROWS_WITH_AS(parse_config(mistyped.string(), {}), doctest::Contains("rounds"),
                       InputError);

  fs::path bad_json = write_config("bad.json", "{not json");
  CHECK_THROWS_AS(parse_config(bad_json.string(), {}), ParseError);

  fs::path not_object = write_config("array.json", "[1, 2]");
  CHECK_THROWS_AS(parse_config(not_object.string(), {}), ParseError);

  fs::path bad_domain = write_config("domain.json", R"({"domain": [1.0]})");
  CHECK_THROWS_WITH_AS(parse_config(bad_domain.string(), {}), doctest::Contains("domain"),
                       InputError);

  fs::path bad_params = write_config("params.json", R"({"kernel_params": [[1.0]]})");
  CHECK_THROWS_WITH_AS(parse_config(bad_params.string(), {}),
                       doctest::Contains("kernel_params"), InputError);

  fs::path ragged = write_config("ragged.json", R"({"mixing": [[1.0, 2.0], [3.0]]})");
  CHECK_THROWS_WITH_AS(parse_config(ragged.string(), {}), doctest::Contains("mixing"),
                       InputError);
}

TEST_CASE("constraint violations surface through validation") {
  CHECK_THROWS_AS(parse_config(write_config("v1.json", R"({"rounds": 0})").string(), {}),
                  InputError);
  CHECK_THROWS_AS(
      parse_config(write_config("v2.json", R"({"clients": 2, "sample_size": 5})").string(), {}),
      InputError);
  CHECK_THROWS_AS(
      parse_config(write_config("v3.json", R"({"test_fraction": 1.0})").string(), {}),
      InputError);
  CHECK_THROWS_AS(
      parse_config(write_config("v4.json", R"({"feature_map": "mlp"})").string(), {}),
      InputError);
  CHECK_THROWS_AS(
      parse_config(write_config("v5.json", R"({"calibration_bins": 0})").string(), {}),
      InputError);
  CHECK_THROWS_AS(
      parse_config(write_config("v6.json", R"({"mixing": [[0.6], [0.4]]})").string(), {}),
      InputError);  // two bases by default, one mixing column
  CHECK_THROWS_AS(parse_config(write_config("v7.json", R"({"out": ""})").string(), {}),
                  InputError);
  CHECK_THROWS_AS(
      parse_config(write_config("v8.json", R"({"learning_rate": 0.0})").string(), {}),
      InputError);
  CHECK_THROWS_AS(
      parse_config(write_config("v9.json", R"({"noise_variance": -0.5})").string(), {}),
      InputError);
  CHECK_THROWS_AS(
      parse_config(write_config("v10.json", R"({"domain": [4.0, 4.0]})").string(), {}),
      InputError);
}

TEST_CASE("the documented key list covers the file schema") {
  const std::vector<std::string>& keys = config_keys();
  CHECK(keys.size() == 30);
  for (const std::string& key : {"rounds", "clients", "aggregation_mode", "kernel_params",
                                 "mixing", "checkpoint_every", "data", "out"}) {
    CHECK(std::find(keys.begin(), keys.end(), key) != keys.end());
  }
}
