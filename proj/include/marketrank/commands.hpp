#pragma once

// Pipeline commands behind the marketrank executable. Each command is a pure
// function of its configuration and input files and writes its artifacts plus
// a <command>.manifest.json into the output directory.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "marketrank/config.hpp"
#include "marketrank/policy.hpp"
#include "marketrank/sim.hpp"

namespace marketrank::cli {

using std::filesystem::path;

// Command-line overrides layered over the config file.
struct Overrides {
  std::optional<path> config;
  std::optional<std::uint64_t> seed;
  std::optional<path> out;
  std::optional<std::string> spec;
  std::optional<std::string> alpha_grid;
  std::optional<unsigned> threads;
  std::optional<std::size_t> n_sessions;
};

RunConfig resolve_config(const Overrides& overrides);

ItemCatalog catalog_for(const RunConfig& config);

// "random", "oracle", "oracle-noisy", "retrieval", or a model JSON path.
SimPolicy load_sim_policy(const std::string& source, const RunConfig& config);

// Accepts the {"spec_tag", "policy"} wrapper written by `train` or a bare
// scorer JSON.
Policy load_policy(const path& file);
ScoringFunction load_scorer(const path& file);

struct ModelFile {
  std::string spec_tag;
  Policy policy;
};
void write_model(const ModelFile& model, const path& file);

void cmd_simulate(const RunConfig& config);
void cmd_fit_propensity(const RunConfig& config, const path& logs);
void cmd_train(const RunConfig& config, const path& logs,
               const std::optional<path>& ground_truth = std::nullopt);

struct EvalInputs {
  path model;
  std::optional<path> logs;
  std::optional<path> dataset;
  std::optional<path> baseline_model;  // enables segments.csv
  std::optional<path> propensity;
};
void cmd_eval(const RunConfig& config, const EvalInputs& inputs);

void cmd_abtest(const RunConfig& config, const std::string& policy_a, const std::string& policy_b);

struct SweepInputs {
  path model_acquisition;
  path model_engagement;
  path logs;
  std::optional<path> calibration_logs;
  std::optional<path> propensity;
};
void cmd_sweep(const RunConfig& config, const SweepInputs& inputs);

std::string cmd_print_config(const RunConfig& config);

// {command, config_hash, seed, inputs: {name: sha256}, outputs: [names]}
nlohmann::json make_manifest(const std::string& command, const RunConfig& config,
                             const std::vector<path>& inputs, const std::vector<std::string>& outputs);

}  // namespace marketrank::cli
