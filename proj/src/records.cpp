#include "marketrank/records.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>
#include <string>

namespace marketrank {

bool QueryRecord::retrieved(ItemId item) const {
  return std::any_of(candidates.begin(), candidates.end(),
                     [item](const ItemRecord& c) { return c.item_id == item; });
}

std::optional<int> QueryRecord::slot_of(ItemId item) const {
  auto it = std::find(ranking.begin(), ranking.end(), item);
  if (it == ranking.end()) return std::nullopt;
  return static_cast<int>(it - ranking.begin());
}

bool QueryRecord::clicked(ItemId item) const {
  auto slot = slot_of(item);
  return slot && std::binary_search(clicks.begin(), clicks.end(), *slot);
}

const QueryRecord* SessionRecord::find_query(int query_id) const {
  for (const auto& q : queries)
    if (q.query_id == query_id) return &q;
  return nullptr;
}

bool SessionRecord::has_click() const {
  return std::any_of(queries.begin(), queries.end(),
                     [](const QueryRecord& q) { return q.has_click(); });
}

void validate(const QueryRecord& query) {
  const auto q = "query " + std::to_string(query.query_id) + ": ";
  if (query.ranking.size() > query.candidates.size())
    throw std::invalid_argument(q + "ranking longer than candidate set");
  std::set<ItemId> ids;
  for (const auto& c : query.candidates) {
    if (!ids.insert(c.item_id).second)
      throw std::invalid_argument(q + "duplicate candidate " + std::to_string(c.item_id));
    if (!(c.price > 0.0)) throw std::invalid_argument(q + "non-positive price");
    if (c.soft_relevance && (*c.soft_relevance < 0.0 || *c.soft_relevance > 1.0))
      throw std::invalid_argument(q + "soft_relevance outside [0,1]");
  }
  std::set<ItemId> ranked;
  for (ItemId id : query.ranking) {
    if (!ids.count(id)) throw std::invalid_argument(q + "ranked item is not a candidate");
    if (!ranked.insert(id).second) throw std::invalid_argument(q + "duplicate ranked item");
  }
  for (const auto& c : query.candidates)
    if (c.impressed != static_cast<bool>(ranked.count(c.item_id)))
      throw std::invalid_argument(q + "impressed flag disagrees with ranking");
  const int n = static_cast<int>(query.ranking.size());
  for (std::size_t i = 0; i < query.clicks.size(); ++i) {
    if (query.clicks[i] < 0 || query.clicks[i] >= n)
      throw std::invalid_argument(q + "click slot out of range");
    if (i > 0 && query.clicks[i] <= query.clicks[i - 1])
      throw std::invalid_argument(q + "click slots not strictly ascending");
  }
}

void validate(const SessionRecord& session) {
  std::set<int> qids;
  for (const auto& q : session.queries) {
    validate(q);
    if (!qids.insert(q.query_id).second)
      throw std::invalid_argument("duplicate query_id " + std::to_string(q.query_id));
  }
  if (session.purchase) {
    const auto* q = session.find_query(session.purchase->query_id);
    if (!q) throw std::invalid_argument("purchase references unknown query");
    if (!q->clicked(session.purchase->item_id))
      throw std::invalid_argument("purchased item was not clicked in its query");
  }
}

}  // namespace marketrank
