#include "marketrank/log_io.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

#include "marketrank/error.hpp"

namespace marketrank {

using nlohmann::json;

void to_json(json& j, const ItemRecord& r) {
  j = json{{"item_id", r.item_id},
           {"features", r.features},
           {"price", r.price},
           {"impressed", r.impressed}};
  if (r.soft_relevance) j["soft_relevance"] = *r.soft_relevance;
}

void from_json(const json& j, ItemRecord& r) {
  j.at("item_id").get_to(r.item_id);
  j.at("features").get_to(r.features);
  j.at("price").get_to(r.price);
  j.at("impressed").get_to(r.impressed);
  if (auto it = j.find("soft_relevance"); it != j.end() && !it->is_null())
    r.soft_relevance = it->get<double>();
  else
    r.soft_relevance.reset();
}

void to_json(json& j, const QueryRecord& r) {
  j = json{{"query_id", r.query_id},
           {"candidates", r.candidates},
           {"ranking", r.ranking},
           {"clicks", r.clicks},
           {"context_features", r.context_features}};
}

void from_json(const json& j, QueryRecord& r) {
  j.at("query_id").get_to(r.query_id);
  j.at("candidates").get_to(r.candidates);
  j.at("ranking").get_to(r.ranking);
  j.at("clicks").get_to(r.clicks);
  j.at("context_features").get_to(r.context_features);
}

void to_json(json& j, const PurchaseRecord& r) {
  j = json{{"item_id", r.item_id}, {"price", r.price}, {"query_id", r.query_id}};
}

void from_json(const json& j, PurchaseRecord& r) {
  j.at("item_id").get_to(r.item_id);
  j.at("price").get_to(r.price);
  j.at("query_id").get_to(r.query_id);
}

void to_json(json& j, const SessionRecord& r) {
  j = json{{"session_id", r.session_id},
           {"intent_bucket", r.intent_bucket},
           {"queries", r.queries},
           {"purchase", nullptr}};
  if (r.purchase) j["purchase"] = *r.purchase;
}

void from_json(const json& j, SessionRecord& r) {
  j.at("session_id").get_to(r.session_id);
  j.at("intent_bucket").get_to(r.intent_bucket);
  j.at("queries").get_to(r.queries);
  const auto& p = j.at("purchase");
  if (p.is_null())
    r.purchase.reset();
  else
    r.purchase = p.get<PurchaseRecord>();
}

void to_json(json& j, const ContextItem& r) {
  j = json{{"item_id", r.item_id},
           {"features", r.features},
           {"label", r.label},
           {"logged_rank", nullptr},
           {"clicked", r.clicked},
           {"impressed", r.impressed}};
  if (r.logged_rank) j["logged_rank"] = *r.logged_rank;
}

void from_json(const json& j, ContextItem& r) {
  j.at("item_id").get_to(r.item_id);
  j.at("features").get_to(r.features);
  j.at("label").get_to(r.label);
  const auto& rank = j.at("logged_rank");
  if (rank.is_null())
    r.logged_rank.reset();
  else
    r.logged_rank = rank.get<int>();
  j.at("clicked").get_to(r.clicked);
  j.at("impressed").get_to(r.impressed);
}

void to_json(json& j, const TrainingContext& r) {
  j = json{{"session_id", r.session_id},
           {"query_id", r.query_id},
           {"items", r.items},
           {"context_features", r.context_features},
           {"context_weight", r.context_weight},
           {"segment", r.segment}};
}

void from_json(const json& j, TrainingContext& r) {
  j.at("session_id").get_to(r.session_id);
  j.at("query_id").get_to(r.query_id);
  j.at("items").get_to(r.items);
  j.at("context_features").get_to(r.context_features);
  j.at("context_weight").get_to(r.context_weight);
  j.at("segment").get_to(r.segment);
}

void write_log(std::span<const SessionRecord> sessions, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& s : sessions) out << json(s).dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<SessionRecord> read_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<SessionRecord> sessions;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto record = json::parse(line).get<SessionRecord>();
      validate(record);
      sessions.push_back(std::move(record));
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return sessions;
}

}  // namespace marketrank
