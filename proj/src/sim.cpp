#include "marketrank/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "json.hpp"
#include "marketrank/error.hpp"

namespace marketrank {

namespace {

// Stream ids for derive_seed / keyed_uniform.
constexpr std::uint64_t kCatalogStream = 11;
constexpr std::uint64_t kIntentStream = 12;
constexpr std::uint64_t kRetrievalStream = 13;
constexpr std::uint64_t kPolicyStream = 14;
constexpr std::uint64_t kExamineEvent = 21;
constexpr std::uint64_t kRelevantEvent = 22;
constexpr std::uint64_t kResolveEvent = 23;

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double lerp_bucket(double low, double high, int bucket, int n_buckets) {
  if (n_buckets <= 1) return low;
  const double t = static_cast<double>(bucket) / static_cast<double>(n_buckets - 1);
  return low + t * (high - low);
}

std::uint64_t pack(std::uint64_t event, std::uint64_t arm) { return (arm << 8) | event; }

}  // namespace

double ClickModelParams::examination(int rank) const {
  if (rank < 1) throw std::invalid_argument("rank must be >= 1");
  return std::pow(static_cast<double>(rank), -examination_exponent);
}

void ClickModelParams::validate() const {
  if (!(examination_exponent > 0.0)) throw ConfigError("examination_exponent must be positive");
  if (!(relevance_sharpness > 0.0)) throw ConfigError("relevance_sharpness must be positive");
}

void SimConfig::validate() const {
  if (n_buckets < 1) throw ConfigError("n_buckets must be >= 1");
  if (n_items < n_buckets) throw ConfigError("n_items must be >= n_buckets");
  if (quality_dim < 1) throw ConfigError("quality_dim must be >= 1");
  if (feature_noise < 0.0) throw ConfigError("feature_noise must be non-negative");
  if (!(base_price > 0.0)) throw ConfigError("base_price must be positive");
  if (!(bucket_price_ratio > 1.0)) throw ConfigError("bucket_price_ratio must exceed 1");
  click.validate();
  if (price_sensitivity < 0.0 || price_sensitivity_above < 0.0 || purchase_price_sensitivity < 0.0)
    throw ConfigError("price sensitivities must be non-negative");
  for (double r : {purchase_resolve_low, purchase_resolve_high})
    if (r < 0.0 || r > 1.0) throw ConfigError("purchase_resolve must lie in [0,1]");
  if (extra_queries_low < 0.0 || extra_queries_high < 0.0)
    throw ConfigError("extra query means must be non-negative");
  if (max_browse_depth < 1) throw ConfigError("max_browse_depth must be >= 1");
  if (retrieval_k < 1) throw ConfigError("retrieval_k must be >= 1");
  if (query_refinement < 0.0) throw ConfigError("query_refinement must be non-negative");
  if (retrieval_noise < 0.0) throw ConfigError("retrieval_noise must be non-negative");
  if (serp_size < 1) throw ConfigError("serp_size must be >= 1");
  if (!segment_mix.empty() && segment_mix.size() != static_cast<std::size_t>(n_buckets))
    throw ConfigError("segment_mix must have one entry per bucket");
}

std::vector<double> SimConfig::mix() const {
  if (!segment_mix.empty()) return segment_mix;
  return std::vector<double>(n_buckets, 1.0 / n_buckets);
}

std::size_t SimConfig::item_feature_dim() const { return 1 + quality_dim + 1; }

ItemCatalog sample_catalog(int n_items, int n_buckets, std::uint64_t seed,
                           const SimConfig& config) {
  if (n_buckets < 1 || n_items < n_buckets)
    throw ConfigError("sample_catalog needs n_items >= n_buckets >= 1");
  if (config.quality_dim < 1) throw ConfigError("quality_dim must be >= 1");
  Rng rng(derive_seed(seed, kCatalogStream, 0));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  ItemCatalog cat;
  cat.n_buckets = n_buckets;
  cat.quality_dim = config.quality_dim;
  for (int b = 0; b <= n_buckets; ++b)
    cat.bucket_edges.push_back(config.base_price * std::pow(config.bucket_price_ratio, b));

  const double log_ratio = std::log(config.bucket_price_ratio);
  cat.items.reserve(n_items);
  for (int i = 0; i < n_items; ++i) {
    Item it;
    it.item_id = i + 1;
    it.price_bucket = i % n_buckets;  // round-robin keeps every bucket populated
    it.price = cat.bucket_edges[it.price_bucket] * std::exp(unit(rng) * log_ratio);
    it.quality.resize(config.quality_dim);
    for (double& q : it.quality) q = normal(rng);
    cat.items.push_back(std::move(it));
  }

  double mean = 0.0;
  for (const auto& it : cat.items) mean += std::log(it.price);
  mean /= n_items;
  double var = 0.0;
  for (const auto& it : cat.items) var += (std::log(it.price) - mean) * (std::log(it.price) - mean);
  cat.log_price_mean = mean;
  cat.log_price_sd = n_items > 1 && var > 0.0 ? std::sqrt(var / n_items) : 1.0;

  for (auto& it : cat.items) {
    it.features.reserve(config.quality_dim + 1);
    for (double q : it.quality) it.features.push_back(q + config.feature_noise * normal(rng));
    it.features.push_back((std::log(it.price) - cat.log_price_mean) / cat.log_price_sd);
  }
  return cat;
}

UserIntent sample_intent(std::span<const double> segment_mix, Rng& rng,
                         const ItemCatalog& catalog, const SimConfig& config) {
  if (segment_mix.size() != static_cast<std::size_t>(catalog.n_buckets))
    throw ConfigError("segment_mix length does not match the number of buckets");
  double total = 0.0;
  for (double p : segment_mix) {
    if (p < 0.0 || !std::isfinite(p)) throw ConfigError("segment_mix entries must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ConfigError("segment_mix must sum to 1, got " + std::to_string(total));

  UserIntent intent;
  std::discrete_distribution<int> pick(segment_mix.begin(), segment_mix.end());
  intent.price_intent_bucket = pick(rng);

  std::normal_distribution<double> normal(0.0, 1.0);
  intent.intent_vector.resize(catalog.quality_dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (double& v : intent.intent_vector) {
      v = normal(rng);
      norm += v * v;
    }
  } while (norm < 1e-12);
  norm = std::sqrt(norm);
  for (double& v : intent.intent_vector) v /= norm;

  const int b = intent.price_intent_bucket;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double lo = catalog.bucket_edges[b];
  const double hi = catalog.bucket_edges[b + 1];
  intent.target_price = lo * std::exp(unit(rng) * std::log(hi / lo));

  const double extra_mean =
      lerp_bucket(config.extra_queries_low, config.extra_queries_high, b, catalog.n_buckets);
  int depth = 1;
  if (extra_mean > 0.0) depth += std::poisson_distribution<int>(extra_mean)(rng);
  intent.browse_depth = std::min(depth, config.max_browse_depth);
  intent.purchase_resolve =
      lerp_bucket(config.purchase_resolve_low, config.purchase_resolve_high, b, catalog.n_buckets);
  return intent;
}

double affinity(const Item& item, const UserIntent& intent) {
  if (item.quality.size() != intent.intent_vector.size())
    throw DimensionError("item quality and intent vector differ in dimension");
  return std::inner_product(item.quality.begin(), item.quality.end(),
                            intent.intent_vector.begin(), 0.0);
}

double relevance_prob(const Item& item, const UserIntent& intent, const SimConfig& config) {
  const double gap = std::log(item.price / intent.target_price);
  const double penalty = gap < 0.0 ? -gap * config.price_sensitivity : gap * config.price_sensitivity_above;
  const double logit =
      config.click.relevance_sharpness * (affinity(item, intent) - config.relevance_offset) - penalty;
  // Keep strictly inside (0,1) even where the logistic saturates in floating point.
  return std::clamp(logistic(logit), 1e-12, 1.0 - 1e-12);
}

double purchase_prob(double price, const UserIntent& intent, const SimConfig& config) {
  const double mismatch = std::abs(std::log(price / intent.target_price));
  return intent.purchase_resolve * std::exp(-config.purchase_price_sensitivity * mismatch);
}

CandidateSet retrieve_candidates(const ItemCatalog& catalog, const UserIntent& intent,
                                 const SimConfig& config, Rng& rng,
                                 std::vector<double> context_features, double price_focus) {
  if (catalog.items.empty()) throw std::invalid_argument("empty catalog");
  std::normal_distribution<double> noise(0.0, config.retrieval_noise);
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(catalog.items.size());
  for (std::size_t i = 0; i < catalog.items.size(); ++i) {
    const Item& item = catalog.items[i];
    double a = affinity(item, intent);
    if (price_focus != 0.0) a -= price_focus * std::abs(std::log(item.price / intent.target_price));
    scored.emplace_back(config.retrieval_noise > 0.0 ? a + noise(rng) : a, i);
  }
  const std::size_t k = std::min<std::size_t>(config.retrieval_k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + k, scored.end(), [&](const auto& x, const auto& y) {
    if (x.first != y.first) return x.first > y.first;
    return x.second < y.second;
  });

  CandidateSet set;
  set.context_features = std::move(context_features);
  set.items.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    const Item& item = catalog.items[scored[j].second];
    Candidate c;
    c.record.item_id = item.item_id;
    c.record.price = item.price;
    c.record.features.reserve(item.features.size() + 1);
    c.record.features.push_back(scored[j].first);
    c.record.features.insert(c.record.features.end(), item.features.begin(), item.features.end());
    c.relevance = relevance_prob(item, intent, config);
    set.items.push_back(std::move(c));
  }
  return set;
}

SimPolicy SimPolicy::random() { return SimPolicy{}; }

SimPolicy SimPolicy::oracle() {
  SimPolicy p;
  p.kind_ = Kind::Oracle;
  return p;
}

SimPolicy SimPolicy::oracle_noisy(double logit_noise_sd) {
  if (logit_noise_sd < 0.0) throw ConfigError("oracle noise must be non-negative");
  SimPolicy p;
  p.kind_ = Kind::OracleNoisy;
  p.noise_sd_ = logit_noise_sd;
  return p;
}

SimPolicy SimPolicy::model(Policy policy) {
  SimPolicy p;
  p.kind_ = Kind::Model;
  p.model_ = std::make_shared<const Policy>(std::move(policy));
  return p;
}

SimPolicy SimPolicy::retrieval(const SimConfig& config) {
  auto f = ScoringFunction::linear(config.item_feature_dim() + SimConfig::kContextFeatureDim);
  f.parameters()[0] = 1.0;
  return model(Policy(std::move(f)));
}

std::vector<std::size_t> SimPolicy::order(const CandidateSet& candidates, Rng& rng) const {
  const std::size_t n = candidates.items.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (kind_ == Kind::Random) {
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
  }
  std::vector<double> scores(n);
  std::vector<ItemId> ids(n);
  std::normal_distribution<double> noise(0.0, noise_sd_);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = candidates.items[i];
    ids[i] = c.record.item_id;
    switch (kind_) {
      case Kind::Oracle:
        scores[i] = c.relevance;
        break;
      case Kind::OracleNoisy:
        scores[i] = std::log(c.relevance / (1.0 - c.relevance)) + noise(rng);
        break;
      default:
        scores[i] = model_->score(c.record.features, candidates.context_features);
    }
  }
  return argsort_scores(scores, ids);
}

double BehaviorStream::examine(int query_id, int slot) const {
  return keyed_uniform(seed, pack(kExamineEvent, arm), static_cast<std::uint64_t>(session_id),
                       static_cast<std::uint64_t>(query_id), static_cast<std::uint64_t>(slot));
}

double BehaviorStream::relevant(int query_id, ItemId item) const {
  return keyed_uniform(seed, pack(kRelevantEvent, arm), static_cast<std::uint64_t>(session_id),
                       static_cast<std::uint64_t>(query_id), static_cast<std::uint64_t>(item));
}

double BehaviorStream::resolve(int query_id, ItemId item) const {
  return keyed_uniform(seed, pack(kResolveEvent, arm), static_cast<std::uint64_t>(session_id),
                       static_cast<std::uint64_t>(query_id), static_cast<std::uint64_t>(item));
}

int SERPOutcome::click_count() const {
  return static_cast<int>(std::count(clicked.begin(), clicked.end(), true));
}

SERPOutcome simulate_serp(const SimPolicy& policy, const CandidateSet& candidates,
                          const UserIntent& intent, const SimConfig& config,
                          const BehaviorStream& behavior, int query_id, Rng& policy_rng) {
  if (candidates.items.empty()) throw std::invalid_argument("empty candidate set");
  SERPOutcome out;
  out.order = policy.order(candidates, policy_rng);
  out.ranking.reserve(out.order.size());
  for (std::size_t i : out.order) out.ranking.push_back(candidates.items[i].record.item_id);

  const std::size_t n = std::min<std::size_t>(config.serp_size, out.order.size());
  out.examined.assign(n, false);
  out.clicked.assign(n, false);
  for (std::size_t r = 0; r < n; ++r) {
    const Candidate& c = candidates.items[out.order[r]];
    const int slot = static_cast<int>(r);
    out.examined[r] = behavior.examine(query_id, slot) < config.click.examination(slot + 1);
    if (!out.examined[r]) continue;
    out.clicked[r] = behavior.relevant(query_id, c.record.item_id) < c.relevance;
    if (!out.clicked[r] || out.purchased_item) continue;
    if (c.relevance > config.purchase_threshold &&
        behavior.resolve(query_id, c.record.item_id) < purchase_prob(c.record.price, intent, config)) {
      out.purchased_item = c.record.item_id;
      out.purchase_slot = slot;
    }
  }
  return out;
}

UserIntent session_intent(const ItemCatalog& catalog, const SimConfig& config, std::uint64_t seed,
                          SessionId session_id) {
  Rng rng(derive_seed(seed, kIntentStream, static_cast<std::uint64_t>(session_id)));
  const auto mix = config.mix();
  return sample_intent(mix, rng, catalog, config);
}

SimulatedSession simulate_session(const SimPolicy& policy, const UserIntent& intent,
                                  const ItemCatalog& catalog, const SimConfig& config,
                                  std::uint64_t seed, SessionId session_id, std::uint64_t arm) {
  SimulatedSession sim;
  sim.intent = intent;
  sim.record.session_id = session_id;
  sim.record.intent_bucket = intent.price_intent_bucket;
  const BehaviorStream behavior{seed, session_id, arm};
  // The intent proxy is the mean standardized log price of the items clicked so
  // far in the session, 0 before the first click.
  int prior_clicks = 0;
  double clicked_log_price = 0.0;
  for (int q = 1; q <= intent.browse_depth; ++q) {
    const std::uint64_t key = static_cast<std::uint64_t>(session_id) * 1024 + q;
    Rng retrieval_rng(derive_seed(seed, kRetrievalStream, key));
    Rng policy_rng(derive_seed(seed, kPolicyStream + (arm << 8), key));
    const double intent_proxy = prior_clicks > 0 ? clicked_log_price / prior_clicks : 0.0;
    std::vector<double> context{static_cast<double>(q - 1), static_cast<double>(prior_clicks),
                                intent_proxy};
    const CandidateSet cands = retrieve_candidates(catalog, intent, config, retrieval_rng, context,
                                                   q > 1 ? config.query_refinement : 0.0);
    const SERPOutcome serp = simulate_serp(policy, cands, intent, config, behavior, q, policy_rng);

    QueryRecord query;
    query.query_id = q;
    query.context_features = cands.context_features;
    const std::size_t n = serp.clicked.size();
    query.candidates.reserve(serp.order.size());
    for (std::size_t r = 0; r < serp.order.size(); ++r) {
      const Candidate& c = cands.items[serp.order[r]];
      ItemRecord rec = c.record;
      rec.impressed = r < n;
      query.candidates.push_back(std::move(rec));
      sim.true_relevance.emplace(c.record.item_id, c.relevance);
      if (r < n) query.ranking.push_back(c.record.item_id);
      if (r < n && serp.clicked[r]) {
        query.clicks.push_back(static_cast<int>(r));
        clicked_log_price += c.record.features.back();
        ++prior_clicks;
      }
    }
    sim.record.queries.push_back(std::move(query));
    if (serp.purchased_item) {
      const auto& item = catalog.items.at(static_cast<std::size_t>(*serp.purchased_item - 1));
      sim.record.purchase = PurchaseRecord{item.item_id, item.price, q};
      break;
    }
  }
  return sim;
}

std::vector<SimulatedSession> simulate_corpus(const SimPolicy& policy, const ItemCatalog& catalog,
                                              const SimConfig& config, std::size_t n_sessions,
                                              std::uint64_t seed, unsigned threads,
                                              std::uint64_t arm) {
  config.validate();
  std::vector<SimulatedSession> out(n_sessions);
  parallel_for(n_sessions, threads, [&](std::size_t i) {
    const auto id = static_cast<SessionId>(i + 1);
    out[i] = simulate_session(policy, session_intent(catalog, config, seed, id), catalog, config,
                              seed, id, arm);
  });
  return out;
}

std::vector<SessionRecord> records_of(std::span<const SimulatedSession> sessions) {
  std::vector<SessionRecord> out;
  out.reserve(sessions.size());
  for (const auto& s : sessions) out.push_back(s.record);
  return out;
}

void write_ground_truth(std::span<const SimulatedSession> sessions,
                        const std::filesystem::path& path) {
  nlohmann::json all = nlohmann::json::object();
  for (const auto& s : sessions) {
    nlohmann::json rel = nlohmann::json::object();
    for (const auto& [item, p] : s.true_relevance) rel[std::to_string(item)] = p;
    all[std::to_string(s.record.session_id)] = {{"price_intent_bucket", s.intent.price_intent_bucket},
                                                {"target_price", s.intent.target_price},
                                                {"relevance", std::move(rel)}};
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << nlohmann::json{{"sessions", std::move(all)}}.dump() << '\n';
}

std::map<SessionId, std::map<ItemId, double>> read_ground_truth(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, std::string("ground truth: ") + e.what());
  }
  std::map<SessionId, std::map<ItemId, double>> out;
  for (const auto& [sid, entry] : j.at("sessions").items()) {
    auto& m = out[std::stoll(sid)];
    for (const auto& [iid, p] : entry.at("relevance").items()) m[std::stoll(iid)] = p.get<double>();
  }
  return out;
}

}  // namespace marketrank
