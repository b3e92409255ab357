#pragma once

// Training and evaluation datasets built from session logs under a RewardSpec.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "marketrank/records.hpp"
#include "marketrank/reward.hpp"

namespace marketrank {

struct Dataset {
  RewardSpec spec;
  std::vector<TrainingContext> contexts;

  bool empty() const { return contexts.empty(); }
  std::size_t size() const { return contexts.size(); }
};

struct DatasetOptions {
  int negatives_per_context = 3;
  // Label of a clicked-but-not-purchased item under purchase and revenue specs.
  double partial_click_label = 0.2;
};

// Corpus-level fits a spec depends on: value buckets for Revenue, the touch
// chain for MarkovMultiTouch.
struct CorpusFits {
  std::optional<ValueBuckets> value_buckets;
  std::optional<MarkovAttributionModel> markov;
};

CorpusFits fit_corpus(std::span<const SessionRecord> logs, const RewardSpec& spec);

// One context per attributed (session, query): positives plus up to
// negatives_per_context impressed unengaged items sampled without replacement.
// Negatives are drawn from a per-session stream of `seed`, so shards built
// separately concatenate to the same dataset.
Dataset build_training_set(std::span<const SessionRecord> logs, const RewardSpec& spec,
                           const CorpusFits& fits, const DatasetOptions& options,
                           std::uint64_t seed);

// Same contexts and weights, with every retrieved candidate kept. Under
// purchase and revenue specs only the purchased item carries a label.
Dataset build_eval_set(std::span<const SessionRecord> logs, const RewardSpec& spec,
                       const CorpusFits& fits, const DatasetOptions& options = {});

// Line 1 is {"spec_tag": ...}; each later line is one TrainingContext.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
// Returns the stored tag alongside the contexts; the spec fields are not
// restorable from a tag, so callers compare tags.
std::pair<std::string, std::vector<TrainingContext>> read_dataset(
    const std::filesystem::path& path);

// Fills ItemRecord::soft_relevance from a session_id -> (item_id -> relevance)
// oracle table.
void attach_soft_labels(std::span<SessionRecord> sessions,
                        const std::map<SessionId, std::map<ItemId, double>>& oracle);

}  // namespace marketrank
