#include <CLI11.hpp>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "fedmogp/config.hpp"
#include "fedmogp/errors.hpp"
#include "fedmogp/experiment.hpp"

namespace {

struct FlagValues {
  std::string config_path;
  int rounds = 0;
  int clients = 0;
  int sample_size = 0;
  int mf_iters = 0;
  int local_iters = 0;
  std::string aggregation_mode;
  int inducing_m = 0;
  std::string kernel;
  std::uint64_t seed = 0;
  std::string out_dir;
  std::string resume_from;
  std::string data_manifest;
};

// Shared flag set; every subcommand accepts the full set so a single config
// file plus overrides drives gen, run and ablate alike.
void add_common_flags(CLI::App* cmd, FlagValues& flags) {
  cmd->add_option("--config", flags.config_path, "JSON config file (flags win over file values)");
  cmd->add_option("--rounds", flags.rounds, "Server rounds");
  cmd->add_option("--clients", flags.clients, "Training clients");
  cmd->add_option("--sample-size", flags.sample_size, "Clients drawn per round");
  cmd->add_option("--mf-iters", flags.mf_iters, "Mean-field alternations per local update");
  cmd->add_option("--local-iters", flags.local_iters, "Local updates per round");
  cmd->add_option("--aggregation-mode", flags.aggregation_mode, "Aggregation mode: N|K|W|A");
  cmd->add_option("--inducing-m", flags.inducing_m, "Inducing points per client (0 = exact)");
  cmd->add_option("--kernel", flags.kernel, "Model kernel: rbf|linear|laplace|cauchy");
  cmd->add_option("--seed", flags.seed, "Base random seed");
  cmd->add_option("--out", flags.out_dir, "Output directory");
  cmd->add_option("--resume", flags.resume_from, "Checkpoint file to resume from");
  cmd->add_option("--data", flags.data_manifest, "Dataset manifest (instead of synthetic data)");
}

fedmogp::CliOverrides overrides_from(const CLI::App* cmd, const FlagValues& flags) {
  fedmogp::CliOverrides o;
  if (cmd->count("--rounds") > 0) o.rounds = flags.rounds;
  if (cmd->count("--clients") > 0) o.clients = flags.clients;
  if (cmd->count("--sample-size") > 0) o.sample_size = flags.sample_size;
  if (cmd->count("--mf-iters") > 0) o.mf_iters = flags.mf_iters;
  if (cmd->count("--local-iters") > 0) o.local_iters = flags.local_iters;
  if (cmd->count("--aggregation-mode") > 0) o.aggregation_mode = flags.aggregation_mode;
  if (cmd->count("--inducing-m") > 0) o.inducing_m = flags.inducing_m;
  if (cmd->count("--kernel") > 0) o.kernel = flags.kernel;
  if (cmd->count("--seed") > 0) o.seed = flags.seed;
  if (cmd->count("--out") > 0) o.out_dir = flags.out_dir;
  if (cmd->count("--resume") > 0) o.resume_from = flags.resume_from;
  if (cmd->count("--data") > 0) o.data_manifest = flags.data_manifest;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated multi-output GP experiments"};
  app.require_subcommand(1);

  FlagValues gen_flags;
  FlagValues run_flags;
  FlagValues ablate_flags;
  std::string ablate_axis = "mode";

  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  add_common_flags(gen, gen_flags);
  CLI::App* run = app.add_subcommand("run", "Run the federated experiment");
  add_common_flags(run, run_flags);
  CLI::App* ablate = app.add_subcommand("ablate", "Run one experiment per axis value");
  add_common_flags(ablate, ablate_flags);
  ablate->add_option("--axis", ablate_axis, "Ablation axis: mode|kernel");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return fedmogp::cmd_gen(
          fedmogp::parse_config(gen_flags.config_path, overrides_from(gen, gen_flags)));
    }
    if (run->parsed()) {
      return fedmogp::cmd_run(
          fedmogp::parse_config(run_flags.config_path, overrides_from(run, run_flags)));
    }
    return fedmogp::cmd_ablate(
        fedmogp::parse_config(ablate_flags.config_path, overrides_from(ablate, ablate_flags)),
        ablate_axis);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
