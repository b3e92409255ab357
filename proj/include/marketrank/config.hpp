#pragma once

// Run configuration: a sectioned key = value file with every default
// embedded. Unknown keys are rejected so typos do not silently fall back to
// defaults.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "marketrank/ab_test.hpp"
#include "marketrank/dataset.hpp"
#include "marketrank/reward.hpp"
#include "marketrank/sim.hpp"
#include "marketrank/trainer.hpp"

namespace marketrank {

struct RunConfig {
  // [run]
  std::optional<std::uint64_t> seed;  // mandatory for every pipeline command
  std::size_t n_sessions = 20000;
  unsigned threads = 0;  // 0 = hardware concurrency
  std::filesystem::path out = "out";

  // [sim]
  SimConfig sim;
  std::uint64_t catalog_seed = 1;  // the marketplace stays fixed across runs
  std::string logging_policy = "random";  // random | oracle | oracle-noisy | retrieval | <model.json path>
  double logging_noise = 1.0;             // oracle-noisy logit noise

  // [reward]
  std::string spec = "engagement";  // preset name, or "custom"
  RewardKind custom_kind = RewardKind::EngagementCount;
  AttributionScheme custom_attribution = AttributionScheme::LastTouch;
  std::optional<double> clipping_cap = 10.0;
  bool self_normalize = true;
  bool idcg_normalize = true;
  int n_value_buckets = 5;
  LabelSource label_source = LabelSource::Clicks;
  DatasetOptions dataset;

  // [train]
  TrainConfig train;
  std::string scorer = "linear";     // linear | mlp1
  std::string objective = "lambda";  // lambda | pointwise
  std::size_t hidden_width = 16;

  // [eval]
  int bootstrap_replicates = kDefaultBootstrapReplicates;
  std::vector<double> alpha_grid;  // empty = 0, 0.1, ..., 1
  std::size_t ab_sessions = 20000;
  BehaviorPairing ab_pairing = BehaviorPairing::Common;
  double label_cap = kDefaultLabelCap;

  void validate() const;
  unsigned worker_threads() const;
  std::uint64_t require_seed() const;  // ConfigError when unset

  RewardSpec reward_spec(const std::string& name) const;
  RewardSpec reward_spec() const { return reward_spec(spec); }
  std::vector<double> alphas() const;
};

RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text);

// Canonical text: every key, fixed section and key order. Parsing the dump
// gives back an equal configuration.
std::string dump_config(const RunConfig& config);
// SHA-256 hex digest of dump_config.
std::string config_hash(const RunConfig& config);
std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

std::vector<double> parse_double_list(const std::string& text);

}  // namespace marketrank
