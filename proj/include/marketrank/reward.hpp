#pragma once

// Empirical marketplace expected-reward machinery: rank discounts and fitted
// propensities, in-session attribution, session valuation, weight clipping and
// self-normalization, and the per-query DCG reward estimate.

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "marketrank/records.hpp"

namespace marketrank {

enum class RewardKind { EngagementCount, PurchaseCount, Revenue };
enum class AttributionScheme { LastTouch, AllTouch, MarkovMultiTouch };
enum class LabelSource { Clicks, Soft };

std::string to_string(RewardKind kind);
std::string to_string(AttributionScheme scheme);
std::string to_string(LabelSource source);
RewardKind parse_reward_kind(std::string_view s);
AttributionScheme parse_attribution(std::string_view s);
LabelSource parse_label_source(std::string_view s);

struct RewardSpec {
  std::string name = "custom";
  RewardKind kind = RewardKind::EngagementCount;
  AttributionScheme attribution = AttributionScheme::LastTouch;
  std::optional<double> clipping_cap = 10.0;
  bool self_normalize = true;
  bool idcg_normalize = true;
  int n_value_buckets = 5;
  LabelSource label_source = LabelSource::Clicks;

  void validate() const;
  // Canonical description; datasets carry it and evaluation checks it.
  std::string tag() const;
};

// "engagement", "purchase", "revenue". Unknown names throw ConfigError
// listing the valid ones.
RewardSpec preset_spec(std::string_view name);
const std::vector<std::string>& preset_names();

// 1 / log2(1 + r) for r >= 1.
double rank_discount(int rank);

class RankDiscount {
 public:
  enum class Kind { LogDiscount, Fitted };

  static RankDiscount log_discount();
  // r^(-exponent), tabulated for ranks 1..tabulated_ranks and extended beyond.
  static RankDiscount power(double exponent, int tabulated_ranks = 50);

  Kind kind() const { return kind_; }
  double exponent() const { return exponent_; }
  const std::vector<double>& fitted_curve() const { return curve_; }

  double operator()(int rank) const;

  friend void to_json(nlohmann::json& j, const RankDiscount& d);
  friend void from_json(const nlohmann::json& j, RankDiscount& d);

 private:
  Kind kind_ = Kind::LogDiscount;
  double exponent_ = 0.0;
  std::vector<double> curve_;
};

// Least-squares fit of log CTR(r) = c - eta * log r over ranks with clicks, from
// logs ranked by a uniformly random policy.
RankDiscount fit_propensity_curve(std::span<const SessionRecord> randomized_logs);

// query_id -> mass.
using AttributionDistribution = std::map<int, double>;

struct SuccessEvent {
  ItemId item_id = 0;
  int query_id = 0;
};

// Purchase kinds: the purchase. Engagement: the last click of the session.
std::optional<SuccessEvent> success_event(const SessionRecord& session, RewardKind kind);

// First-order chain over query touch points. States bin a query by whether it
// was clicked and by the tertile of its position in the session; a conversion
// and a null state absorb. A query's credit is the removal effect of its state.
class MarkovAttributionModel {
 public:
  static constexpr int kTransient = 6;
  static constexpr int kStart = kTransient;
  static constexpr int kConversion = kTransient + 1;
  static constexpr int kNull = kTransient + 2;
  static constexpr int kStates = kTransient + 3;

  static MarkovAttributionModel fit(std::span<const SessionRecord> sessions, RewardKind kind);

  static int state_of(bool clicked, std::size_t position, std::size_t session_length);

  double conversion_probability(std::optional<int> removed_state = std::nullopt) const;
  // 1 - P(convert | state removed) / P(convert); zero when nothing converts.
  double removal_effect(int state) const;

  const std::array<std::array<double, kStates>, kStates>& counts() const { return counts_; }

  friend void to_json(nlohmann::json& j, const MarkovAttributionModel& m);
  friend void from_json(const nlohmann::json& j, MarkovAttributionModel& m);

 private:
  void refresh_effects();

  std::array<std::array<double, kStates>, kStates> counts_{};
  std::array<double, kTransient> removal_effects_{};
};

// Requires a fitted model for MarkovMultiTouch.
AttributionDistribution attribute(const SessionRecord& session, ItemId success_item,
                                  AttributionScheme scheme,
                                  const MarkovAttributionModel* markov = nullptr);

struct ValueBuckets {
  std::vector<double> boundaries;  // ascending; bucket i holds [b_{i-1}, b_i)
  std::vector<double> revenue_share;
  std::vector<int> converting_session_count;

  std::size_t size() const { return revenue_share.size(); }
  int bucket_of(double price) const;

  friend void to_json(nlohmann::json& j, const ValueBuckets& b);
  friend void from_json(const nlohmann::json& j, ValueBuckets& b);
};

// Cuts the price-sorted cumulative revenue curve at i/k. Tied prices can merge
// adjacent cuts, so fewer than k buckets may come back.
ValueBuckets fit_value_buckets(std::span<const SessionRecord> logs, int k);

double session_value(const SessionRecord& session, const RewardSpec& spec,
                     const ValueBuckets* buckets);

struct ContextWeight {
  double value = 0.0;
};

double clip_weight(double weight, std::optional<double> cap);

ContextWeight context_weight(const SessionRecord& session, int query_id, const RewardSpec& spec,
                             const ValueBuckets* buckets,
                             const AttributionDistribution& attribution);

std::vector<double> normalize_weights(std::span<const double> weights);

// sum_r discount(r) * relevance[order[r-1]]. With idcg_normalize the value is
// divided by the same sum under descending relevance (0 when that is 0).
double dcg(std::span<const std::size_t> order, std::span<const double> relevance,
           const RankDiscount& discount);
double ideal_dcg(std::span<const double> relevance, const RankDiscount& discount);
double per_query_expected_reward(std::span<const std::size_t> order,
                                 std::span<const double> relevance, const RankDiscount& discount,
                                 bool idcg_normalize);

constexpr double kDefaultLabelCap = 10.0;

// Inverse-propensity labels: clicked item label / propensity(logged_rank),
// capped; non-impressed positives keep their label unweighted.
std::vector<double> debias_labels(const TrainingContext& context, const RankDiscount& propensity,
                                  double cap = kDefaultLabelCap);

}  // namespace marketrank
