#include "marketrank/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "marketrank/error.hpp"
#include "marketrank/random.hpp"

namespace marketrank {

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::ExpClicks:
      return "ExpClicks";
    case Metric::ExpPurchases:
      return "ExpPurchases";
    case Metric::ExpRevenue:
      return "ExpRevenue";
  }
  return "?";
}

Metric parse_metric(std::string_view s) {
  for (Metric m : {Metric::ExpClicks, Metric::ExpPurchases, Metric::ExpRevenue})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown metric '" + std::string(s) +
                    "' (valid: ExpClicks, ExpPurchases, ExpRevenue)");
}

RewardKind reward_kind_of(Metric metric) {
  switch (metric) {
    case Metric::ExpClicks:
      return RewardKind::EngagementCount;
    case Metric::ExpPurchases:
      return RewardKind::PurchaseCount;
    case Metric::ExpRevenue:
      return RewardKind::Revenue;
  }
  return RewardKind::EngagementCount;
}

Metric metric_of(RewardKind kind) {
  switch (kind) {
    case RewardKind::EngagementCount:
      return Metric::ExpClicks;
    case RewardKind::PurchaseCount:
      return Metric::ExpPurchases;
    case RewardKind::Revenue:
      return Metric::ExpRevenue;
  }
  return Metric::ExpClicks;
}

Ranker policy_ranker(const Policy& policy) {
  return [policy](const TrainingContext& c) {
    return rank(policy, std::span<const ContextItem>(c.items), c.context_features);
  };
}

std::vector<std::size_t> logged_order(const TrainingContext& context) {
  std::vector<std::size_t> order(context.items.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = context.items[a].logged_rank;
    const auto& rb = context.items[b].logged_rank;
    if (ra && rb) return *ra < *rb;
    return ra.has_value() && !rb.has_value();
  });
  return order;
}

void require_spec(std::string_view dataset_tag, const RewardSpec& spec) {
  const std::string expected = spec.tag();
  if (dataset_tag != expected)
    throw SpecMismatchError("dataset was built under spec '" + std::string(dataset_tag) +
                            "' but evaluation uses '" + expected + "'");
}

namespace {

bool soft_labels(const RewardSpec& spec) { return spec.label_source == LabelSource::Soft; }

// Per-session sums of contributions and weights, in first-appearance order.
struct SessionSums {
  std::vector<double> value;
  std::vector<double> weight;
  std::vector<int> segment;
  std::size_t n_contexts = 0;
};

SessionSums session_sums(const Dataset& eval_set, std::span<const double> contributions,
                         std::optional<int> segment) {
  SessionSums s;
  std::unordered_map<SessionId, std::size_t> index;
  for (std::size_t i = 0; i < eval_set.contexts.size(); ++i) {
    const auto& c = eval_set.contexts[i];
    if (segment && c.segment != *segment) continue;
    auto [it, fresh] = index.emplace(c.session_id, s.value.size());
    if (fresh) {
      s.value.push_back(0.0);
      s.weight.push_back(0.0);
      s.segment.push_back(c.segment);
    }
    s.value[it->second] += contributions[i];
    s.weight[it->second] += c.context_weight;
    ++s.n_contexts;
  }
  return s;
}

double estimate_of(const SessionSums& s, std::span<const std::uint32_t> m, bool self_normalize) {
  double v = 0.0, w = 0.0;
  for (std::size_t i = 0; i < s.value.size(); ++i) {
    v += m[i] * s.value[i];
    w += m[i] * s.weight[i];
  }
  if (!self_normalize) return v;
  return w > 0.0 ? v / w : std::numeric_limits<double>::quiet_NaN();
}

double estimate_of(const SessionSums& s, bool self_normalize) {
  const std::vector<std::uint32_t> ones(s.value.size(), 1);
  return estimate_of(s, ones, self_normalize);
}

std::uint64_t stream_key(Metric metric, std::optional<int> bucket) {
  return static_cast<std::uint64_t>(metric) * 1000 + static_cast<std::uint64_t>(bucket.value_or(-1) + 1);
}

void ensure_evaluable(const Dataset& eval_set, const RewardSpec& spec) {
  if (eval_set.empty()) throw std::invalid_argument("cannot evaluate on an empty eval set");
  require_spec(eval_set.spec.tag(), spec);
}

std::vector<int> segments_of(const Dataset& eval_set) {
  std::vector<int> seg;
  for (const auto& c : eval_set.contexts) seg.push_back(c.segment);
  std::sort(seg.begin(), seg.end());
  seg.erase(std::unique(seg.begin(), seg.end()), seg.end());
  return seg;
}

// Lift of a over b with a paired session bootstrap over the shared sessions.
struct PairedLift {
  double a = 0.0;
  double b = 0.0;
  std::optional<double> lift;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

PairedLift paired_lift(const SessionSums& sa, const SessionSums& sb, bool self_normalize,
                       const EvalOptions& options, std::uint64_t key) {
  PairedLift out;
  out.a = estimate_of(sa, self_normalize);
  out.b = estimate_of(sb, self_normalize);
  const double lift = relative_lift(out.a, out.b);
  if (!std::isfinite(lift)) return out;
  out.lift = lift;
  const auto reps = bootstrap_replicates(
      sa.value.size(), options.bootstrap_replicates, derive_seed(options.seed, 51, key),
      options.threads, [&](std::span<const std::uint32_t> m) {
        return relative_lift(estimate_of(sa, m, self_normalize), estimate_of(sb, m, self_normalize));
      });
  const Interval ci = percentile_interval(reps);
  out.ci_low = std::isfinite(ci.low) ? std::min(ci.low, lift) : lift;
  out.ci_high = std::isfinite(ci.high) ? std::max(ci.high, lift) : lift;
  return out;
}

}  // namespace

std::vector<double> context_values(const Dataset& eval_set, const Ranker& ranker,
                                   const EvalOptions& options) {
  const RankDiscount& propensity = options.propensity ? *options.propensity : options.discount;
  const bool soft = soft_labels(eval_set.spec);
  const bool idcg = eval_set.spec.idcg_normalize;
  std::vector<double> out(eval_set.contexts.size(), 0.0);
  parallel_for(out.size(), options.threads, [&](std::size_t i) {
    const auto& c = eval_set.contexts[i];
    if (c.items.empty() || c.context_weight == 0.0) return;
    std::vector<double> labels;
    if (soft) {
      for (const auto& it : c.items) labels.push_back(it.label);
    } else {
      labels = debias_labels(c, propensity, options.label_cap);
    }
    const auto order = ranker(c);
    out[i] = c.context_weight * per_query_expected_reward(order, labels, options.discount, idcg);
  });
  return out;
}

MetricEstimate counterfactual_metric(const Dataset& eval_set, const Ranker& ranker,
                                     const RewardSpec& spec, const EvalOptions& options,
                                     std::optional<int> segment) {
  ensure_evaluable(eval_set, spec);
  const auto values = context_values(eval_set, ranker, options);
  const SessionSums sums = session_sums(eval_set, values, segment);
  MetricEstimate est;
  est.metric = metric_of(spec.kind);
  est.n_contexts = sums.n_contexts;
  if (sums.value.empty()) {
    est.value = est.ci_low = est.ci_high = 0.0;
    return est;
  }
  est.value = estimate_of(sums, spec.self_normalize);
  const auto reps = bootstrap_replicates(
      sums.value.size(), options.bootstrap_replicates,
      derive_seed(options.seed, 52, stream_key(est.metric, segment)), options.threads,
      [&](std::span<const std::uint32_t> m) { return estimate_of(sums, m, spec.self_normalize); });
  const Interval ci = percentile_interval(reps);
  est.ci_low = std::isfinite(ci.low) ? std::min(ci.low, est.value) : est.value;
  est.ci_high = std::isfinite(ci.high) ? std::max(ci.high, est.value) : est.value;
  return est;
}

MetricEstimate counterfactual_metric(const Dataset& eval_set, const Policy& policy,
                                     const RewardSpec& spec, const EvalOptions& options,
                                     std::optional<int> segment) {
  return counterfactual_metric(eval_set, policy_ranker(policy), spec, options, segment);
}

std::vector<SegmentLift> segment_lift(const Dataset& eval_set, const Ranker& policy_a,
                                      const Ranker& policy_b, const RewardSpec& spec,
                                      const EvalOptions& options) {
  ensure_evaluable(eval_set, spec);
  const auto va = context_values(eval_set, policy_a, options);
  const auto vb = context_values(eval_set, policy_b, options);
  const Metric metric = metric_of(spec.kind);

  std::vector<std::optional<int>> buckets{std::nullopt};
  for (int b : segments_of(eval_set)) buckets.emplace_back(b);

  std::vector<SegmentLift> out;
  for (const auto& bucket : buckets) {
    const auto sa = session_sums(eval_set, va, bucket);
    const auto sb = session_sums(eval_set, vb, bucket);
    const auto p = paired_lift(sa, sb, spec.self_normalize, options, stream_key(metric, bucket));
    out.push_back({metric, bucket, p.a, p.b, p.lift, p.ci_low, p.ci_high});
  }
  return out;
}

const SweepRow* SweepCurve::find(double alpha, Metric metric, std::optional<int> bucket) const {
  for (const auto& r : rows)
    if (r.alpha == alpha && r.metric == metric && r.bucket == bucket) return &r;
  return nullptr;
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 10; ++i) grid.push_back(i / 10.0);
  return grid;
}

void validate_alpha_grid(std::span<const double> alphas) {
  if (alphas.empty()) throw ConfigError("alpha grid is empty");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] >= 0.0 && alphas[i] <= 1.0)) throw ConfigError("alpha grid values must lie in [0,1]");
    if (i > 0 && !(alphas[i] > alphas[i - 1]))
      throw ConfigError("alpha grid must be strictly ascending");
  }
}

SweepCurve alpha_sweep(const ScoringFunction& f_acquisition, const ScoringFunction& f_engagement,
                       std::span<const double> alphas,
                       const std::map<Metric, const Dataset*>& eval_sets,
                       const Dataset& calibration, const EvalOptions& options) {
  validate_alpha_grid(alphas);
  if (eval_sets.empty()) throw std::invalid_argument("alpha sweep needs at least one eval set");

  struct Prepared {
    Metric metric;
    const Dataset* data;
    std::vector<std::optional<int>> buckets;
    std::vector<SessionSums> baseline;  // per bucket, alpha = 0
  };
  std::vector<Prepared> prepared;
  const Policy base = mix(f_acquisition, f_engagement, 0.0, calibration);
  for (const auto& [metric, data] : eval_sets) {
    if (!data || data->empty()) throw std::invalid_argument("empty eval set for " + to_string(metric));
    if (data->spec.kind != reward_kind_of(metric))
      throw SpecMismatchError("eval set for " + to_string(metric) + " was built under spec '" +
                              data->spec.tag() + "'");
    Prepared p{metric, data, {std::nullopt}, {}};
    for (int b : segments_of(*data)) p.buckets.emplace_back(b);
    const auto v0 = context_values(*data, policy_ranker(base), options);
    for (const auto& b : p.buckets) p.baseline.push_back(session_sums(*data, v0, b));
    prepared.push_back(std::move(p));
  }

  SweepCurve curve;
  curve.alphas.assign(alphas.begin(), alphas.end());
  for (double alpha : alphas) {
    const Policy pol = mix(f_acquisition, f_engagement, alpha, calibration);
    for (const auto& p : prepared) {
      const auto v = context_values(*p.data, policy_ranker(pol), options);
      for (std::size_t k = 0; k < p.buckets.size(); ++k) {
        const auto sums = session_sums(*p.data, v, p.buckets[k]);
        const auto lift = paired_lift(sums, p.baseline[k], p.data->spec.self_normalize, options,
                                      stream_key(p.metric, p.buckets[k]));
        curve.rows.push_back({alpha, p.metric, p.buckets[k], lift.a, lift.lift, lift.ci_low, lift.ci_high});
      }
    }
  }
  return curve;
}

Disagreement ranking_disagreement(const Dataset& dataset, const Ranker& a, const Ranker& b) {
  if (dataset.empty()) throw std::invalid_argument("empty dataset");
  std::size_t differing = 0;
  double discordant = 0.0;
  std::size_t counted = 0;
  for (const auto& c : dataset.contexts) {
    const auto oa = a(c);
    const auto ob = b(c);
    if (oa != ob) ++differing;
    const std::size_t n = c.items.size();
    if (n < 2) continue;
    std::vector<std::size_t> ra(n), rb(n);
    for (std::size_t r = 0; r < n; ++r) {
      ra[oa[r]] = r;
      rb[ob[r]] = r;
    }
    std::size_t bad = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if ((ra[i] < ra[j]) != (rb[i] < rb[j])) ++bad;
    discordant += static_cast<double>(bad) / (n * (n - 1) / 2.0);
    ++counted;
  }
  Disagreement d;
  d.contexts_differing = static_cast<double>(differing) / dataset.contexts.size();
  d.mean_discordant_pairs = counted ? discordant / counted : 0.0;
  return d;
}

double ipw_expected_clicks(std::span<const SessionRecord> logs, const Policy& target,
                           const RankDiscount& propensity, std::size_t serp_size) {
  double total = 0.0;
  double weight = 0.0;
  for (const auto& s : logs) {
    for (const auto& q : s.queries) {
      weight += 1.0;
      if (q.clicks.empty()) continue;
      const auto order = rank(target, std::span<const ItemRecord>(q.candidates), q.context_features);
      std::unordered_map<ItemId, std::size_t> target_slot;
      for (std::size_t r = 0; r < order.size(); ++r) target_slot[q.candidates[order[r]].item_id] = r;
      for (int k : q.clicks) {
        const std::size_t j = target_slot.at(q.ranking[k]);
        if (j >= serp_size) continue;
        total += propensity(static_cast<int>(j + 1)) / propensity(k + 1);
      }
    }
  }
  if (weight == 0.0) throw std::invalid_argument("no logged queries");
  return total / weight;
}

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(10) << x;
  return os.str();
}

std::string bucket_label(const std::optional<int>& b) { return b ? std::to_string(*b) : "all"; }

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

}  // namespace

void write_sweep_csv(const SweepCurve& curve, const std::filesystem::path& path) {
  auto os = open_csv(path);
  os << "alpha,metric,bucket,estimate,lift,ci_low,ci_high\n";
  for (const auto& r : curve.rows) {
    os << fmt(r.alpha) << ',' << to_string(r.metric) << ',' << bucket_label(r.bucket) << ','
       << fmt(r.estimate) << ',';
    if (r.lift)
      os << fmt(*r.lift) << ',' << fmt(r.ci_low) << ',' << fmt(r.ci_high);
    else
      os << ",,";
    os << '\n';
  }
}

void write_segments_csv(std::span<const SegmentLift> lifts, const std::filesystem::path& path) {
  auto os = open_csv(path);
  os << "metric,bucket,estimate_a,estimate_b,lift,ci_low,ci_high\n";
  for (const auto& l : lifts) {
    os << to_string(l.metric) << ',' << bucket_label(l.bucket) << ',' << fmt(l.estimate_a) << ','
       << fmt(l.estimate_b) << ',';
    if (l.lift)
      os << fmt(*l.lift) << ',' << fmt(l.ci_low) << ',' << fmt(l.ci_high);
    else
      os << ",,";
    os << '\n';
  }
}

}  // namespace marketrank
