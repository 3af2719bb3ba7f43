#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qeba/errors.hpp"
#include "qeba/experiment.hpp"

namespace {

struct Overrides {
  std::string out_dir;
  std::string seed;
  std::string max_queries;
};

std::uint64_t parse_override(const std::string& value, const char* flag) {
  try {
    size_t used = 0;
    const auto v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw qeba::ConfigError(std::string(flag) + ": expected an integer, got '" +
                            value + "'");
  }
}

void apply(qeba::ExperimentConfig& config, const Overrides& o) {
  if (!o.out_dir.empty()) config.out_dir = o.out_dir;
  if (!o.seed.empty()) config.seed = parse_override(o.seed, "--seed");
  if (!o.max_queries.empty()) {
    config.max_queries = parse_override(o.max_queries, "--max-queries");
  }
}

void add_overrides(CLI::App* cmd, Overrides& o, bool with_queries = true) {
  cmd->add_option("--out-dir", o.out_dir, "Output directory override");
  cmd->add_option("--seed", o.seed, "Root seed override");
  if (with_queries) {
    cmd->add_option("--max-queries", o.max_queries, "Query budget override");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QEBA decision-only blackbox attack toolkit"};
  app.require_subcommand(1);

  Overrides overrides;
  std::string config_path;
  std::vector<std::string> config_paths;

  auto* attack_cmd =
      app.add_subcommand("attack", "Run an attack experiment from a config");
  attack_cmd->add_option("config", config_path, "Experiment config file")
      ->required();
  add_overrides(attack_cmd, overrides);

  auto* compare_cmd = app.add_subcommand(
      "compare", "Paired comparison of configs differing in subspace");
  compare_cmd->add_option("configs", config_paths, "Experiment config files")
      ->required()
      ->expected(-1);
  add_overrides(compare_cmd, overrides);

  auto* theory_cmd = app.add_subcommand(
      "theory", "Validate the gradient-estimation bounds on a grid");
  theory_cmd->add_option("config", config_path, "Theory config file")
      ->required();
  add_overrides(theory_cmd, overrides, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(attack_cmd)) {
      auto config = qeba::ExperimentConfig::parse_file(config_path);
      apply(config, overrides);
      const auto result = qeba::run_experiment(config);
      std::printf("wrote %zu trace(s) to %s\n", result.traces.size(),
                  config.out_dir.c_str());
    } else if (app.got_subcommand(compare_cmd)) {
      std::vector<qeba::ExperimentConfig> configs;
      for (const auto& path : config_paths) {
        configs.push_back(qeba::ExperimentConfig::parse_file(path));
        apply(configs.back(), overrides);
      }
      const auto result = qeba::compare_methods(configs);
      for (size_t a = 0; a < result.labels.size(); ++a) {
        for (size_t b = a + 1; b < result.labels.size(); ++b) {
          std::printf("%s vs %s: win fraction %.3f\n",
                      result.labels[a].c_str(), result.labels[b].c_str(),
                      result.win_fraction[a][b]);
        }
      }
    } else {
      auto config = qeba::TheoryConfig::parse_file(config_path);
      if (!overrides.out_dir.empty()) config.out_dir = overrides.out_dir;
      if (!overrides.seed.empty()) {
        config.seed = parse_override(overrides.seed, "--seed");
      }
      const auto reports = qeba::validate_theory(config);
      std::printf("wrote %zu bound report(s) to %s\n", reports.size(),
                  config.out_dir.c_str());
    }
  } catch (const qeba::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
