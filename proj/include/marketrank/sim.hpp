#pragma once

// Generative marketplace: catalog and heterogeneous user intents, a
// position-based examination/relevance click model with a price-dependent
// purchase step, and multi-query sessions logged as SessionRecords.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "marketrank/policy.hpp"
#include "marketrank/random.hpp"
#include "marketrank/records.hpp"

namespace marketrank {

struct ClickModelParams {
  double examination_exponent = 1.0;  // e(r) = r^(-eta)
  double relevance_sharpness = 2.0;   // logistic slope on intent-quality affinity

  double examination(int rank) const;
  void validate() const;
};

struct SimConfig {
  int n_items = 1000;
  int n_buckets = 5;
  int quality_dim = 4;
  double feature_noise = 0.3;  // sd of the observable view of quality

  // Bucket b draws prices log-uniformly from [base * ratio^b, base * ratio^(b+1)).
  double base_price = 5.0;
  double bucket_price_ratio = 3.0;

  std::vector<double> segment_mix;  // empty = uniform over buckets

  ClickModelParams click;
  double relevance_offset = 2.5;
  // Click logit penalty per unit log price gap, for items below and above the
  // target price. Users browse upward more readily than they buy upward.
  double price_sensitivity = 2.0;
  double price_sensitivity_above = 0.1;

  double purchase_threshold = 0.5;
  // Conversion of a relevant click: purchase_resolve * exp(-k |log(price / target)|).
  double purchase_price_sensitivity = 2.0;
  // Linear in bucket index from the lowest to the highest bucket.
  double purchase_resolve_low = 0.8;
  double purchase_resolve_high = 0.1;
  // browse_depth = 1 + Poisson(mean), mean linear in bucket index.
  double extra_queries_low = 0.1;
  double extra_queries_high = 5.0;
  int max_browse_depth = 12;

  // Follow-up queries narrow toward the user's price range: from the second
  // query on, retrieval scores lose this much per unit |log(price / target)|.
  double query_refinement = 8.0;

  int retrieval_k = 25;
  double retrieval_noise = 0.5;
  int serp_size = 10;

  void validate() const;
  std::vector<double> mix() const;
  std::size_t item_feature_dim() const;     // logged ItemRecord::features length
  static constexpr std::size_t kContextFeatureDim = 3;
};

struct Item {
  ItemId item_id = 0;
  double price = 0.0;
  int price_bucket = 0;
  std::vector<double> quality;   // latent, dimension F
  std::vector<double> features;  // observable: noisy quality, standardized log price

  bool operator==(const Item&) const = default;
};

struct ItemCatalog {
  int n_buckets = 0;
  int quality_dim = 0;
  std::vector<double> bucket_edges;  // n_buckets + 1 price edges
  double log_price_mean = 0.0;
  double log_price_sd = 1.0;
  std::vector<Item> items;

  bool operator==(const ItemCatalog&) const = default;
};

ItemCatalog sample_catalog(int n_items, int n_buckets, std::uint64_t seed,
                           const SimConfig& config = {});

struct UserIntent {
  std::vector<double> intent_vector;
  int price_intent_bucket = 0;
  double target_price = 1.0;
  int browse_depth = 1;
  double purchase_resolve = 0.5;
};

// Mixture must be non-negative and sum to 1 (1e-9).
UserIntent sample_intent(std::span<const double> segment_mix, Rng& rng,
                         const ItemCatalog& catalog, const SimConfig& config);

double affinity(const Item& item, const UserIntent& intent);
// logistic(sharpness * (affinity - offset) - price penalty), the penalty being
// linear in |log(price / target)| with separate slopes below and above target.
double relevance_prob(const Item& item, const UserIntent& intent, const SimConfig& config);
// P(purchase | clicked) for an item above the relevance threshold.
double purchase_prob(double price, const UserIntent& intent, const SimConfig& config);

struct Candidate {
  ItemRecord record;       // logged view: features, price; impressed set by the SERP
  double relevance = 0.0;  // true P(R = 1)
};

struct CandidateSet {
  std::vector<Candidate> items;
  std::vector<double> context_features;
};

// Top-K catalog items by noisy affinity minus price_focus * |log(price / target)|.
// Logged features are [retrieval score, item.features...].
CandidateSet retrieve_candidates(const ItemCatalog& catalog, const UserIntent& intent,
                                 const SimConfig& config, Rng& rng,
                                 std::vector<double> context_features, double price_focus = 0.0);

// Who orders a SERP: uniform shuffle, true relevance, relevance-plus-noise, or
// a trained Policy over logged features. `retrieval` keeps the retrieval-score
// order, a stand-in for a deployed production ranker.
class SimPolicy {
 public:
  enum class Kind { Random, Oracle, OracleNoisy, Model };

  static SimPolicy random();
  static SimPolicy oracle();
  static SimPolicy oracle_noisy(double logit_noise_sd);
  static SimPolicy model(Policy policy);
  static SimPolicy retrieval(const SimConfig& config);

  Kind kind() const { return kind_; }
  const Policy* model_policy() const { return model_.get(); }

  // Candidate indices in slot order.
  std::vector<std::size_t> order(const CandidateSet& candidates, Rng& rng) const;

 private:
  Kind kind_ = Kind::Random;
  double noise_sd_ = 0.0;
  std::shared_ptr<const Policy> model_;
};

// Keyed uniforms for user behavior. Draws depend on (seed, session, query,
// slot or item, event, arm), so two arms with arm = 0 share the user's
// examination and relevance reactions while their rankings differ.
struct BehaviorStream {
  std::uint64_t seed = 0;
  SessionId session_id = 0;
  std::uint64_t arm = 0;

  double examine(int query_id, int slot) const;
  double relevant(int query_id, ItemId item) const;
  double resolve(int query_id, ItemId item) const;
};

struct SERPOutcome {
  std::vector<std::size_t> order;  // candidate indices, slot order
  std::vector<ItemId> ranking;     // all candidates, slot order
  std::vector<bool> examined;      // impressed slots
  std::vector<bool> clicked;       // impressed slots
  std::optional<ItemId> purchased_item;
  std::optional<int> purchase_slot;

  int click_count() const;
};

SERPOutcome simulate_serp(const SimPolicy& policy, const CandidateSet& candidates,
                          const UserIntent& intent, const SimConfig& config,
                          const BehaviorStream& behavior, int query_id, Rng& policy_rng);

struct SimulatedSession {
  SessionRecord record;
  UserIntent intent;
  std::map<ItemId, double> true_relevance;  // every retrieved candidate
};

// Environment draws (intent, retrieval noise) come from `seed` and the session
// id only; behavior and policy randomness additionally depend on `arm`.
SimulatedSession simulate_session(const SimPolicy& policy, const UserIntent& intent,
                                  const ItemCatalog& catalog, const SimConfig& config,
                                  std::uint64_t seed, SessionId session_id,
                                  std::uint64_t arm = 0);

UserIntent session_intent(const ItemCatalog& catalog, const SimConfig& config, std::uint64_t seed,
                          SessionId session_id);

std::vector<SimulatedSession> simulate_corpus(const SimPolicy& policy, const ItemCatalog& catalog,
                                              const SimConfig& config, std::size_t n_sessions,
                                              std::uint64_t seed, unsigned threads = 1,
                                              std::uint64_t arm = 0);

std::vector<SessionRecord> records_of(std::span<const SimulatedSession> sessions);

// {"sessions": {"<session_id>": {"price_intent_bucket", "target_price",
//   "relevance": {"<item_id>": p}}}}
void write_ground_truth(std::span<const SimulatedSession> sessions,
                        const std::filesystem::path& path);
std::map<SessionId, std::map<ItemId, double>> read_ground_truth(const std::filesystem::path& path);

}  // namespace marketrank
