#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"
#include "marketrank/records.hpp"

namespace marketrank {

void to_json(nlohmann::json& j, const ItemRecord& r);
void from_json(const nlohmann::json& j, ItemRecord& r);
void to_json(nlohmann::json& j, const QueryRecord& r);
void from_json(const nlohmann::json& j, QueryRecord& r);
void to_json(nlohmann::json& j, const PurchaseRecord& r);
void from_json(const nlohmann::json& j, PurchaseRecord& r);
void to_json(nlohmann::json& j, const SessionRecord& r);
void from_json(const nlohmann::json& j, SessionRecord& r);
void to_json(nlohmann::json& j, const ContextItem& r);
void from_json(const nlohmann::json& j, ContextItem& r);
void to_json(nlohmann::json& j, const TrainingContext& r);
void from_json(const nlohmann::json& j, TrainingContext& r);

// One JSON object per line, one line per session.
void write_log(std::span<const SessionRecord> sessions, const std::filesystem::path& path);
// Blank lines are skipped. Malformed or invalid records throw ParseError with
// the 1-based line number.
std::vector<SessionRecord> read_log(const std::filesystem::path& path);

}  // namespace marketrank
