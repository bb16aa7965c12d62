// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0
//
// fedlsr: run one federated experiment or compare methods across seeds.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <exception>

#include "fedlsr/error.hpp"
#include "fedlsr/harness.hpp"

namespace {

void add_overrides(CLI::App* cmd, fedlsr::ConfigOverrides& o, std::string& method) {
  cmd->add_option("--seed", o.seed, "Master seed");
  if (cmd->get_name() == "run") cmd->add_option("--method", method, "Training method");
  cmd->add_option("--noise-type", o.noise_type, "none, symmetric or pairwise");
  cmd->add_option("--noise-ratio", o.noise_ratio, "Noise ratio in [0, 1]");
  cmd->add_option("--out", o.out, "Output directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning with noisy labels"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress");

  std::filesystem::path config;
  fedlsr::ConfigOverrides overrides;
  std::string method;

  auto* run = app.add_subcommand("run", "Run one experiment");
  run->add_option("--config", config, "JSON config file")->required()->check(CLI::ExistingFile);
  add_overrides(run, overrides, method);

  std::vector<std::string> methods;
  std::vector<std::uint64_t> seeds;
  auto* compare = app.add_subcommand("compare", "Compare methods over several seeds");
  compare->add_option("--config", config, "JSON config file")->required()->check(CLI::ExistingFile);
  compare->add_option("--methods", methods, "Methods, comma separated")->required()->delimiter(',');
  compare->add_option("--seeds", seeds, "Seeds, comma separated")->required()->delimiter(',');
  add_overrides(compare, overrides, method);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);
  if (!method.empty()) overrides.method = method;

  if (*run) return fedlsr::run_experiment(config, overrides);

  try {
    const auto table = fedlsr::compare_methods(config, methods, seeds, overrides);
    for (const auto& row : table) {
      std::printf("%-16s %.4f +- %.4f (n=%zu)\n", row.method.c_str(), row.mean, row.std,
                  row.finals.size());
    }
  } catch (const fedlsr::ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("compare failed: {}", e.what());
    return 1;
  }
  return 0;
}
