#include "marketrank/reward.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "marketrank/error.hpp"

namespace marketrank {

std::string to_string(RewardKind kind) {
  switch (kind) {
    case RewardKind::EngagementCount: return "engagement_count";
    case RewardKind::PurchaseCount: return "purchase_count";
    case RewardKind::Revenue: return "revenue";
  }
  return "?";
}

std::string to_string(AttributionScheme scheme) {
  switch (scheme) {
    case AttributionScheme::LastTouch: return "last_touch";
    case AttributionScheme::AllTouch: return "all_touch";
    case AttributionScheme::MarkovMultiTouch: return "markov_multi_touch";
  }
  return "?";
}

std::string to_string(LabelSource source) {
  return source == LabelSource::Clicks ? "clicks" : "soft";
}

RewardKind parse_reward_kind(std::string_view s) {
  if (s == "engagement_count") return RewardKind::EngagementCount;
  if (s == "purchase_count") return RewardKind::PurchaseCount;
  if (s == "revenue") return RewardKind::Revenue;
  throw ConfigError("unknown reward kind '" + std::string(s) +
                    "' (engagement_count, purchase_count, revenue)");
}

AttributionScheme parse_attribution(std::string_view s) {
  if (s == "last_touch") return AttributionScheme::LastTouch;
  if (s == "all_touch") return AttributionScheme::AllTouch;
  if (s == "markov_multi_touch") return AttributionScheme::MarkovMultiTouch;
  throw ConfigError("unknown attribution '" + std::string(s) +
                    "' (last_touch, all_touch, markov_multi_touch)");
}

LabelSource parse_label_source(std::string_view s) {
  if (s == "clicks") return LabelSource::Clicks;
  if (s == "soft") return LabelSource::Soft;
  throw ConfigError("unknown label source '" + std::string(s) + "' (clicks, soft)");
}

void RewardSpec::validate() const {
  if (kind == RewardKind::Revenue && n_value_buckets < 1)
    throw ConfigError("revenue spec needs n_value_buckets >= 1");
  if (clipping_cap && !(*clipping_cap > 0.0)) throw ConfigError("clipping_cap must be positive");
}

std::string RewardSpec::tag() const {
  std::ostringstream os;
  os << name << ':' << to_string(kind) << ':' << to_string(attribution) << ":cap=";
  if (clipping_cap)
    os << *clipping_cap;
  else
    os << "none";
  os << ":sn=" << self_normalize << ":idcg=" << idcg_normalize;
  if (kind == RewardKind::Revenue) os << ":k=" << n_value_buckets;
  os << ':' << to_string(label_source);
  return os.str();
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"engagement", "purchase", "revenue"};
  return names;
}

RewardSpec preset_spec(std::string_view name) {
  RewardSpec spec;
  spec.name = std::string(name);
  if (name == "engagement") {
    spec.kind = RewardKind::EngagementCount;
    spec.attribution = AttributionScheme::LastTouch;
  } else if (name == "purchase") {
    spec.kind = RewardKind::PurchaseCount;
    spec.attribution = AttributionScheme::AllTouch;
  } else if (name == "revenue") {
    spec.kind = RewardKind::Revenue;
    spec.attribution = AttributionScheme::AllTouch;
  } else {
    std::string valid;
    for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown spec '" + std::string(name) + "'; valid names: " + valid);
  }
  return spec;
}

double rank_discount(int rank) {
  if (rank < 1) throw std::invalid_argument("rank must be >= 1");
  return 1.0 / std::log2(1.0 + rank);
}

RankDiscount RankDiscount::log_discount() { return RankDiscount{}; }

RankDiscount RankDiscount::power(double exponent, int tabulated_ranks) {
  RankDiscount d;
  d.kind_ = Kind::Fitted;
  d.exponent_ = exponent;
  d.curve_.resize(static_cast<std::size_t>(std::max(1, tabulated_ranks)));
  for (std::size_t r = 0; r < d.curve_.size(); ++r)
    d.curve_[r] = std::pow(static_cast<double>(r + 1), -exponent);
  return d;
}

double RankDiscount::operator()(int rank) const {
  if (rank < 1) throw std::invalid_argument("rank must be >= 1");
  if (kind_ == Kind::LogDiscount) return rank_discount(rank);
  if (static_cast<std::size_t>(rank) <= curve_.size()) return curve_[rank - 1];
  return std::pow(static_cast<double>(rank), -exponent_);
}

void to_json(nlohmann::json& j, const RankDiscount& d) {
  if (d.kind_ == RankDiscount::Kind::LogDiscount) {
    j = {{"kind", "log_discount"}};
  } else {
    j = {{"kind", "fitted"}, {"exponent", d.exponent_}, {"fitted_curve", d.curve_}};
  }
}

void from_json(const nlohmann::json& j, RankDiscount& d) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "log_discount") {
    d = RankDiscount::log_discount();
  } else if (kind == "fitted") {
    d = RankDiscount::power(j.at("exponent").get<double>());
    d.curve_ = j.at("fitted_curve").get<std::vector<double>>();
  } else {
    throw ConfigError("unknown discount kind '" + kind + "'");
  }
}

RankDiscount fit_propensity_curve(std::span<const SessionRecord> randomized_logs) {
  std::vector<double> impressions, clicks;
  for (const auto& s : randomized_logs) {
    for (const auto& q : s.queries) {
      if (impressions.size() < q.ranking.size()) {
        impressions.resize(q.ranking.size(), 0.0);
        clicks.resize(q.ranking.size(), 0.0);
      }
      for (std::size_t r = 0; r < q.ranking.size(); ++r) impressions[r] += 1.0;
      for (int slot : q.clicks) clicks[static_cast<std::size_t>(slot)] += 1.0;
    }
  }
  std::vector<double> xs, ys;
  for (std::size_t r = 0; r < clicks.size(); ++r) {
    if (clicks[r] <= 0.0) continue;
    xs.push_back(std::log(static_cast<double>(r + 1)));
    ys.push_back(std::log(clicks[r] / impressions[r]));
  }
  if (xs.size() < 2) throw FitError("propensity fit needs clicks at >= 2 ranks");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double eta = -sxy / sxx;
  return RankDiscount::power(eta, static_cast<int>(std::max<std::size_t>(clicks.size(), 1)));
}

std::optional<SuccessEvent> success_event(const SessionRecord& session, RewardKind kind) {
  if (kind == RewardKind::EngagementCount) {
    for (auto it = session.queries.rbegin(); it != session.queries.rend(); ++it) {
      if (!it->has_click()) continue;
      return SuccessEvent{it->ranking[static_cast<std::size_t>(it->clicks.back())], it->query_id};
    }
    return std::nullopt;
  }
  if (!session.purchase) return std::nullopt;
  return SuccessEvent{session.purchase->item_id, session.purchase->query_id};
}

namespace {

// Query of the touch that realized the success: the purchase query for the
// purchased item, otherwise the last query where the item was clicked.
int success_query(const SessionRecord& session, ItemId item) {
  if (session.purchase && session.purchase->item_id == item) return session.purchase->query_id;
  for (auto it = session.queries.rbegin(); it != session.queries.rend(); ++it)
    if (it->clicked(item)) return it->query_id;
  throw std::invalid_argument("success item " + std::to_string(item) +
                              " has no click or purchase in session " +
                              std::to_string(session.session_id));
}

std::size_t query_index(const SessionRecord& session, int query_id) {
  for (std::size_t i = 0; i < session.queries.size(); ++i)
    if (session.queries[i].query_id == query_id) return i;
  throw std::invalid_argument("unknown query id");
}

}  // namespace

int MarkovAttributionModel::state_of(bool clicked, std::size_t position,
                                     std::size_t session_length) {
  const std::size_t len = std::max<std::size_t>(session_length, 1);
  const int tertile = static_cast<int>(std::min<std::size_t>(2, 3 * position / len));
  return (clicked ? 3 : 0) + tertile;
}

MarkovAttributionModel MarkovAttributionModel::fit(std::span<const SessionRecord> sessions,
                                                   RewardKind kind) {
  MarkovAttributionModel m;
  for (const auto& s : sessions) {
    if (s.queries.empty()) continue;
    const auto success = success_event(s, kind);
    const std::size_t end = success ? query_index(s, success->query_id) + 1 : s.queries.size();
    int prev = kStart;
    for (std::size_t i = 0; i < end; ++i) {
      const int state = state_of(s.queries[i].has_click(), i, end);
      m.counts_[prev][state] += 1.0;
      prev = state;
    }
    m.counts_[prev][success ? kConversion : kNull] += 1.0;
  }
  m.refresh_effects();
  return m;
}

double MarkovAttributionModel::conversion_probability(std::optional<int> removed_state) const {
  // p[s] = sum_t P(s->t) p[t] with p[conv] = 1, p[null] = 0, p[removed] = 0.
  std::array<std::array<double, kStates>, kStates> prob{};
  for (int s = 0; s <= kStart; ++s) {
    double total = 0.0;
    for (int t = 0; t < kStates; ++t) total += counts_[s][t];
    if (total > 0.0)
      for (int t = 0; t < kStates; ++t) prob[s][t] = counts_[s][t] / total;
  }
  std::array<double, kStates> p{};
  p[kConversion] = 1.0;
  for (int iter = 0; iter < 10000; ++iter) {
    double change = 0.0;
    for (int s = 0; s <= kStart; ++s) {
      double v = 0.0;
      if (!(removed_state && *removed_state == s))
        for (int t = 0; t < kStates; ++t) v += prob[s][t] * p[t];
      change = std::max(change, std::abs(v - p[s]));
      p[s] = v;
    }
    if (change < 1e-15) break;
  }
  return p[kStart];
}

void MarkovAttributionModel::refresh_effects() {
  for (int s = 0; s < kTransient; ++s) removal_effects_[s] = 0.0;
  const double base = conversion_probability();
  if (base <= 0.0) return;
  for (int s = 0; s < kTransient; ++s)
    removal_effects_[s] = std::max(0.0, 1.0 - conversion_probability(s) / base);
}

double MarkovAttributionModel::removal_effect(int state) const {
  if (state < 0 || state >= kTransient) throw std::out_of_range("not a transient state");
  return removal_effects_[state];
}

void to_json(nlohmann::json& j, const MarkovAttributionModel& m) {
  j = nlohmann::json{{"states", MarkovAttributionModel::kStates}, {"transition_counts", m.counts_}};
}

void from_json(const nlohmann::json& j, MarkovAttributionModel& m) {
  m.counts_ = j.at("transition_counts")
                  .get<std::array<std::array<double, MarkovAttributionModel::kStates>,
                                  MarkovAttributionModel::kStates>>();
  m.refresh_effects();
}

AttributionDistribution attribute(const SessionRecord& session, ItemId success_item,
                                  AttributionScheme scheme, const MarkovAttributionModel* markov) {
  const int last = success_query(session, success_item);
  AttributionDistribution out;
  switch (scheme) {
    case AttributionScheme::LastTouch:
      out[last] = 1.0;
      break;
    case AttributionScheme::AllTouch: {
      std::vector<int> touching;
      for (const auto& q : session.queries)
        if (q.retrieved(success_item)) touching.push_back(q.query_id);
      if (touching.empty()) {
        std::cerr << "warning: session " << session.session_id << ": item " << success_item
                  << " never retrieved; using last-touch attribution\n";
        out[last] = 1.0;
        break;
      }
      for (int id : touching) out[id] = 1.0 / static_cast<double>(touching.size());
      break;
    }
    case AttributionScheme::MarkovMultiTouch: {
      if (!markov) throw std::invalid_argument("markov attribution needs a fitted chain");
      const std::size_t end = query_index(session, last) + 1;
      double total = 0.0;
      std::vector<double> credit(end);
      for (std::size_t i = 0; i < end; ++i) {
        const auto state = MarkovAttributionModel::state_of(session.queries[i].has_click(), i, end);
        credit[i] = markov->removal_effect(state);
        total += credit[i];
      }
      if (!(total > 0.0)) {
        out[last] = 1.0;
        break;
      }
      for (std::size_t i = 0; i < end; ++i)
        if (credit[i] > 0.0) out[session.queries[i].query_id] = credit[i] / total;
      break;
    }
  }
  return out;
}

int ValueBuckets::bucket_of(double price) const {
  int b = 0;
  for (double bound : boundaries)
    if (price >= bound) ++b;
  return b;
}

void to_json(nlohmann::json& j, const ValueBuckets& b) {
  j = nlohmann::json{{"boundaries", b.boundaries},
                     {"revenue_share", b.revenue_share},
                     {"converting_session_count", b.converting_session_count}};
}

void from_json(const nlohmann::json& j, ValueBuckets& b) {
  j.at("boundaries").get_to(b.boundaries);
  j.at("revenue_share").get_to(b.revenue_share);
  j.at("converting_session_count").get_to(b.converting_session_count);
}

ValueBuckets fit_value_buckets(std::span<const SessionRecord> logs, int k) {
  if (k < 1) throw ConfigError("value bucket count must be >= 1");
  std::vector<double> prices;
  for (const auto& s : logs)
    if (s.purchase) prices.push_back(s.purchase->price);
  if (prices.size() < static_cast<std::size_t>(k))
    throw FitError("value buckets need >= " + std::to_string(k) + " purchases, got " +
                   std::to_string(prices.size()));
  std::sort(prices.begin(), prices.end());
  const double total = std::accumulate(prices.begin(), prices.end(), 0.0);

  ValueBuckets out;
  double cumulative = 0.0;
  int next_cut = 1;
  for (double p : prices) {
    cumulative += p;
    while (next_cut < k && cumulative >= total * next_cut / k) {
      // The price that reaches the cut opens the next bucket.
      if (p > prices.front() && (out.boundaries.empty() || p > out.boundaries.back()))
        out.boundaries.push_back(p);
      ++next_cut;
    }
  }
  const std::size_t n = out.boundaries.size() + 1;
  out.revenue_share.assign(n, 0.0);
  out.converting_session_count.assign(n, 0);
  for (double p : prices) {
    const auto b = static_cast<std::size_t>(out.bucket_of(p));
    out.revenue_share[b] += p / total;
    out.converting_session_count[b] += 1;
  }
  return out;
}

double session_value(const SessionRecord& session, const RewardSpec& spec,
                     const ValueBuckets* buckets) {
  switch (spec.kind) {
    case RewardKind::EngagementCount: return session.has_click() ? 1.0 : 0.0;
    case RewardKind::PurchaseCount: return session.purchase ? 1.0 : 0.0;
    case RewardKind::Revenue: {
      if (!session.purchase) return 0.0;
      if (!buckets) throw std::invalid_argument("revenue valuation needs fitted value buckets");
      const auto b = static_cast<std::size_t>(buckets->bucket_of(session.purchase->price));
      const int count = buckets->converting_session_count[b];
      return count > 0 ? buckets->revenue_share[b] / count : 0.0;
    }
  }
  return 0.0;
}

double clip_weight(double weight, std::optional<double> cap) {
  return cap ? std::min(weight, *cap) : weight;
}

ContextWeight context_weight(const SessionRecord& session, int query_id, const RewardSpec& spec,
                             const ValueBuckets* buckets,
                             const AttributionDistribution& attribution) {
  auto it = attribution.find(query_id);
  const double mass = it == attribution.end() ? 0.0 : it->second;
  return {clip_weight(session_value(session, spec, buckets) * mass, spec.clipping_cap)};
}

std::vector<double> normalize_weights(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("weights must be non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("cannot normalize all-zero weights");
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w /= total;
  return out;
}

double dcg(std::span<const std::size_t> order, std::span<const double> relevance,
           const RankDiscount& discount) {
  double sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r)
    sum += discount(static_cast<int>(r + 1)) * relevance[order[r]];
  return sum;
}

double ideal_dcg(std::span<const double> relevance, const RankDiscount& discount) {
  std::vector<double> sorted(relevance.begin(), relevance.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double sum = 0.0;
  for (std::size_t r = 0; r < sorted.size(); ++r)
    sum += discount(static_cast<int>(r + 1)) * sorted[r];
  return sum;
}

double per_query_expected_reward(std::span<const std::size_t> order,
                                 std::span<const double> relevance, const RankDiscount& discount,
                                 bool idcg_normalize) {
  if (order.empty()) throw std::invalid_argument("empty ranking");
  if (order.size() != relevance.size())
    throw DimensionError("ranking and relevance sizes differ");
  const double value = dcg(order, relevance, discount);
  if (!idcg_normalize) return value;
  const double ideal = ideal_dcg(relevance, discount);
  return ideal > 0.0 ? value / ideal : 0.0;
}

std::vector<double> debias_labels(const TrainingContext& context, const RankDiscount& propensity,
                                  double cap) {
  std::vector<double> out;
  out.reserve(context.items.size());
  for (const auto& item : context.items) {
    if (!item.clicked) {
      out.push_back(item.label);
      continue;
    }
    if (!item.logged_rank)
      throw std::invalid_argument("clicked item " + std::to_string(item.item_id) +
                                  " has no logged rank");
    out.push_back(std::min(cap, item.label / propensity(*item.logged_rank)));
  }
  return out;
}

}  // namespace marketrank
