#pragma once

// Logged session data model. Field names match the JSONL schema one-to-one.

#include <cstdint>
#include <optional>
#include <vector>

namespace marketrank {

using ItemId = std::int64_t;
using SessionId = std::int64_t;

struct ItemRecord {
  ItemId item_id = 0;
  std::vector<double> features;  // query-item features as seen by the ranker
  double price = 0.0;
  bool impressed = false;
  std::optional<double> soft_relevance;

  bool operator==(const ItemRecord&) const = default;
};

struct QueryRecord {
  int query_id = 0;
  // Retrieved set, stored in the logging policy's order: impressed items first.
  std::vector<ItemRecord> candidates;
  std::vector<ItemId> ranking;  // slot -> item_id over impressed items
  std::vector<int> clicks;      // 0-based slot indices, ascending
  std::vector<double> context_features;

  bool operator==(const QueryRecord&) const = default;

  bool retrieved(ItemId item) const;
  bool clicked(ItemId item) const;
  // 0-based slot of an impressed item, or nullopt.
  std::optional<int> slot_of(ItemId item) const;
  bool has_click() const { return !clicks.empty(); }
};

struct PurchaseRecord {
  ItemId item_id = 0;
  double price = 0.0;
  int query_id = 0;

  bool operator==(const PurchaseRecord&) const = default;
};

struct SessionRecord {
  SessionId session_id = 0;
  int intent_bucket = 0;
  std::vector<QueryRecord> queries;
  std::optional<PurchaseRecord> purchase;

  bool operator==(const SessionRecord&) const = default;

  const QueryRecord* find_query(int query_id) const;
  bool has_click() const;
};

// Throws std::invalid_argument naming the first broken invariant.
void validate(const QueryRecord& query);
void validate(const SessionRecord& session);

struct ContextItem {
  ItemId item_id = 0;
  std::vector<double> features;
  double label = 0.0;
  std::optional<int> logged_rank;  // 1-based, impressed items only
  bool clicked = false;
  bool impressed = false;

  bool operator==(const ContextItem&) const = default;
};

// One (session, query) term of the value-weighted objective.
struct TrainingContext {
  SessionId session_id = 0;
  int query_id = 0;
  std::vector<ContextItem> items;
  std::vector<double> context_features;
  double context_weight = 0.0;
  int segment = 0;

  bool operator==(const TrainingContext&) const = default;
};

}  // namespace marketrank
