#pragma once

// Hand-built log records for unit tests.

#include <algorithm>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "marketrank/records.hpp"

namespace marketrank::testing {

// Candidate with a one-dimensional feature equal to its id.
inline ItemRecord make_item(ItemId id, bool impressed, double price = 10.0) {
  ItemRecord r;
  r.item_id = id;
  r.features = {static_cast<double>(id)};
  r.price = price;
  r.impressed = impressed;
  return r;
}

// Impressed items in slot order, then retrieved-only items.
inline QueryRecord make_query(int query_id, const std::vector<ItemId>& impressed,
                              const std::vector<int>& clicks,
                              const std::vector<ItemId>& retrieved_only = {}) {
  QueryRecord q;
  q.query_id = query_id;
  for (ItemId id : impressed) {
    q.candidates.push_back(make_item(id, true));
    q.ranking.push_back(id);
  }
  for (ItemId id : retrieved_only) q.candidates.push_back(make_item(id, false));
  q.clicks = clicks;
  q.context_features = {static_cast<double>(query_id - 1)};
  return q;
}

inline SessionRecord make_session(SessionId id, std::vector<QueryRecord> queries,
                                  std::optional<PurchaseRecord> purchase = std::nullopt,
                                  int bucket = 0) {
  SessionRecord s;
  s.session_id = id;
  s.intent_bucket = bucket;
  s.queries = std::move(queries);
  s.purchase = purchase;
  return s;
}

// Random valid session: 1-4 queries of 2-8 impressed items out of a shared
// id pool, random clicks, and a purchase of a clicked item with probability
// one half.
inline SessionRecord random_session(SessionId id, std::mt19937_64& rng, int n_buckets = 5) {
  std::uniform_int_distribution<int> n_queries(1, 4), n_items(2, 8), pool(1, 30), extra(0, 3);
  std::bernoulli_distribution coin(0.5), click(0.3);
  std::uniform_real_distribution<double> price(1.0, 500.0), feature(-1.0, 1.0);
  SessionRecord s;
  s.session_id = id;
  s.intent_bucket = std::uniform_int_distribution<int>(0, n_buckets - 1)(rng);
  const int nq = n_queries(rng);
  for (int q = 1; q <= nq; ++q) {
    QueryRecord qr;
    qr.query_id = q;
    std::vector<ItemId> ids;
    const int n = n_items(rng) + extra(rng);
    while (static_cast<int>(ids.size()) < n) {
      const ItemId c = pool(rng);
      if (std::find(ids.begin(), ids.end(), c) == ids.end()) ids.push_back(c);
    }
    const int impressed = std::min<int>(n, n_items(rng));
    for (int i = 0; i < n; ++i) {
      ItemRecord r;
      r.item_id = ids[static_cast<std::size_t>(i)];
      r.features = {feature(rng), feature(rng)};
      r.price = price(rng);
      r.impressed = i < impressed;
      qr.candidates.push_back(r);
      if (r.impressed) {
        qr.ranking.push_back(r.item_id);
        if (click(rng)) qr.clicks.push_back(i);
      }
    }
    qr.context_features = {static_cast<double>(q - 1)};
    s.queries.push_back(std::move(qr));
  }
  if (coin(rng)) {
    for (auto it = s.queries.rbegin(); it != s.queries.rend(); ++it) {
      if (it->clicks.empty()) continue;
      const int slot = it->clicks.front();
      const auto& item = it->candidates[static_cast<std::size_t>(slot)];
      s.purchase = PurchaseRecord{item.item_id, item.price, it->query_id};
      // Sessions end on purchase.
      s.queries.erase(it.base(), s.queries.end());
      break;
    }
  }
  return s;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("marketrank_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace marketrank::testing
