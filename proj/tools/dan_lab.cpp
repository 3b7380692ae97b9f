// dan-lab: command-line front end over the danlab C API.
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "danlab.h"

namespace {

void print_line(const char* line, void*) {
  std::fprintf(stderr, "%s\n", line);
  std::fflush(stderr);
}

int report(danlab_status status) {
  if (status != DANLAB_OK) {
    std::fprintf(stderr, "dan-lab: %s: %s\n", danlab_status_name(status), danlab_last_error());
  }
  return danlab_exit_code(status);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Data assimilation laboratory: filters, DAN training and twin experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::int64_t count = 1;
  std::int64_t horizon = 0;
  std::string checkpoint;

  auto add_common = [&](CLI::App* cmd, bool config_required) {
    auto* opt = cmd->add_option("--config", config_path, "experiment config file");
    if (config_required) opt->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "override the config seed");
    cmd->add_option("--out", out, "output directory (file path for gen)");
  };

  auto* gen = app.add_subcommand("gen", "generate a trajectory file");
  add_common(gen, true);
  gen->add_option("-I", count, "number of trajectories")->check(CLI::PositiveNumber);
  gen->add_option("-T", horizon, "last time index")->check(CLI::NonNegativeNumber);

  auto* train = app.add_subcommand("train", "train a DAN with periodic tests and baselines");
  add_common(train, true);

  auto* test = app.add_subcommand("test", "frozen-weight test of a checkpoint");
  add_common(test, true);
  test->add_option("--checkpoint", checkpoint, "parameter file (default <out>/final.danparm)");

  auto* baseline = app.add_subcommand("baseline", "run the classical filter baseline");
  add_common(baseline, true);

  auto* oracle = app.add_subcommand("oracle", "run the oracle validation suite");
  add_common(oracle, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (oracle->parsed()) {
    std::uint64_t s = seed.value_or(0);
    if (!config_path.empty() && !seed) {
      danlab_config* cfg = nullptr;
      if (const auto st = danlab_config_load(config_path.c_str(), &cfg); st != DANLAB_OK) return report(st);
      s = danlab_config_seed(cfg);
      danlab_config_free(cfg);
    }
    return report(danlab_run_oracle(s, print_line, nullptr));
  }

  danlab_config* cfg = nullptr;
  if (const auto st = danlab_config_load(config_path.c_str(), &cfg); st != DANLAB_OK) return report(st);
  danlab_status st = DANLAB_OK;
  if (seed) st = danlab_config_set_seed(cfg, *seed);
  if (st == DANLAB_OK && out) st = danlab_config_set_out(cfg, out->c_str());

  if (st == DANLAB_OK) {
    if (gen->parsed()) {
      const std::string path = out ? *out : std::string(danlab_config_out(cfg)) + "/trajectories.dantraj";
      st = danlab_run_gen(cfg, count, horizon, path.c_str());
    } else if (train->parsed()) {
      st = danlab_run_train(cfg, nullptr, print_line, nullptr);
    } else if (test->parsed()) {
      st = danlab_run_test(cfg, checkpoint.empty() ? nullptr : checkpoint.c_str(), nullptr, print_line, nullptr);
    } else if (baseline->parsed()) {
      st = danlab_run_baseline(cfg, nullptr, print_line, nullptr);
    }
  }
  danlab_config_free(cfg);
  return report(st);
}
