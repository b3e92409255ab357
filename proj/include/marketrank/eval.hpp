#pragma once

// Counterfactual evaluation of ranking policies on held-out logs: per-context
// DCG over debiased logged labels, session-bootstrap intervals, per-segment
// lifts and the alpha sweep between two trained policies.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marketrank/dataset.hpp"
#include "marketrank/policy.hpp"
#include "marketrank/reward.hpp"
#include "marketrank/stats.hpp"

namespace marketrank {

enum class Metric { ExpClicks, ExpPurchases, ExpRevenue };

std::string to_string(Metric metric);
Metric parse_metric(std::string_view s);
// The reward kind whose eval set a metric is computed on.
RewardKind reward_kind_of(Metric metric);
Metric metric_of(RewardKind kind);

struct MetricEstimate {
  Metric metric = Metric::ExpClicks;
  double value = 0.0;
  std::size_t n_contexts = 0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct EvalOptions {
  RankDiscount discount = RankDiscount::log_discount();
  // Examination model used to debias clicked labels; nullopt uses `discount`.
  std::optional<RankDiscount> propensity;
  double label_cap = kDefaultLabelCap;
  int bootstrap_replicates = kDefaultBootstrapReplicates;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

// Orders every item of a context (indices into context.items).
using Ranker = std::function<std::vector<std::size_t>(const TrainingContext&)>;

Ranker policy_ranker(const Policy& policy);
// Impressed items by logged rank, then the rest in stored order.
std::vector<std::size_t> logged_order(const TrainingContext& context);

// Throws SpecMismatchError when the tags differ.
void require_spec(std::string_view dataset_tag, const RewardSpec& spec);

// Per-context contribution: context_weight *
// per_query_expected_reward(ranker(context), debiased labels).
std::vector<double> context_values(const Dataset& eval_set, const Ranker& ranker,
                                   const EvalOptions& options);

// Sum of contributions, divided by the summed context weight when the spec
// self-normalizes. Bootstrap resamples sessions. `segment` restricts to
// contexts of one price-intent bucket.
MetricEstimate counterfactual_metric(const Dataset& eval_set, const Ranker& ranker,
                                     const RewardSpec& spec, const EvalOptions& options = {},
                                     std::optional<int> segment = std::nullopt);
MetricEstimate counterfactual_metric(const Dataset& eval_set, const Policy& policy,
                                     const RewardSpec& spec, const EvalOptions& options = {},
                                     std::optional<int> segment = std::nullopt);

struct SegmentLift {
  Metric metric = Metric::ExpClicks;
  std::optional<int> bucket;  // nullopt = all contexts
  double estimate_a = 0.0;
  double estimate_b = 0.0;
  std::optional<double> lift;  // absent when estimate_b is 0
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// (m_a - m_b) / m_b per bucket of the context segment, plus an overall row,
// with a paired session bootstrap.
std::vector<SegmentLift> segment_lift(const Dataset& eval_set, const Ranker& policy_a,
                                      const Ranker& policy_b, const RewardSpec& spec,
                                      const EvalOptions& options = {});

struct SweepRow {
  double alpha = 0.0;
  Metric metric = Metric::ExpClicks;
  std::optional<int> bucket;
  double estimate = 0.0;
  std::optional<double> lift;  // against alpha = 0
  double ci_low = 0.0;         // interval of the lift
  double ci_high = 0.0;
};

struct SweepCurve {
  std::vector<double> alphas;
  std::vector<SweepRow> rows;

  const SweepRow* find(double alpha, Metric metric, std::optional<int> bucket = std::nullopt) const;
};

std::vector<double> default_alpha_grid();
// Sorted, unique, inside [0,1]; otherwise ConfigError.
void validate_alpha_grid(std::span<const double> alphas);

// One eval set per metric; each must carry the spec of that metric's reward
// kind. Rows come in (alpha, metric, bucket) order with the overall row first.
SweepCurve alpha_sweep(const ScoringFunction& f_acquisition, const ScoringFunction& f_engagement,
                       std::span<const double> alphas,
                       const std::map<Metric, const Dataset*>& eval_sets,
                       const Dataset& calibration, const EvalOptions& options = {});

// Fraction of contexts whose full orders differ, and the mean fraction of
// discordant item pairs.
struct Disagreement {
  double contexts_differing = 0.0;
  double mean_discordant_pairs = 0.0;
};
Disagreement ranking_disagreement(const Dataset& dataset, const Ranker& a, const Ranker& b);

// Self-normalized IPW estimate of a target policy's expected clicks per SERP
// from logs with known examination propensities: each logged click at slot k
// on an item the target places at slot j counts propensity(j) / propensity(k)
// (slots beyond the logged SERP size count 0). Weights are per query.
double ipw_expected_clicks(std::span<const SessionRecord> logs, const Policy& target,
                           const RankDiscount& propensity, std::size_t serp_size);

void write_sweep_csv(const SweepCurve& curve, const std::filesystem::path& path);
void write_segments_csv(std::span<const SegmentLift> lifts, const std::filesystem::path& path);

}  // namespace marketrank
