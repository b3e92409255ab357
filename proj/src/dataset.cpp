#include "marketrank/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "marketrank/error.hpp"
#include "marketrank/log_io.hpp"
#include "marketrank/random.hpp"

namespace marketrank {

namespace {

constexpr std::uint64_t kNegativeStream = 0x6e65676174697665ULL;

Dataset build(std::span<const SessionRecord> logs, const RewardSpec& spec, const CorpusFits& fits,
              const DatasetOptions& options, std::optional<std::uint64_t> sampling_seed) {
  spec.validate();
  if (sampling_seed && options.negatives_per_context < 1)
    throw ConfigError("negatives_per_context must be >= 1");
  if (spec.kind == RewardKind::Revenue && !fits.value_buckets)
    throw std::invalid_argument("revenue datasets need fitted value buckets");
  if (spec.attribution == AttributionScheme::MarkovMultiTouch && !fits.markov)
    throw std::invalid_argument("markov attribution needs a fitted chain");

  const ValueBuckets* buckets = fits.value_buckets ? &*fits.value_buckets : nullptr;
  const MarkovAttributionModel* markov = fits.markov ? &*fits.markov : nullptr;
  const bool engagement = spec.kind == RewardKind::EngagementCount;

  Dataset out;
  out.spec = spec;
  for (const auto& session : logs) {
    const auto success = success_event(session, spec.kind);
    if (!success) continue;
    if (!(session_value(session, spec, buckets) > 0.0)) continue;
    const auto attribution = attribute(session, success->item_id, spec.attribution, markov);
    Rng rng(derive_seed(sampling_seed.value_or(0), kNegativeStream,
                        static_cast<std::uint64_t>(session.session_id)));
    const std::optional<ItemId> purchased =
        engagement || !session.purchase ? std::nullopt
                                        : std::optional<ItemId>(session.purchase->item_id);

    for (const auto& [query_id, mass] : attribution) {
      if (!(mass > 0.0)) continue;
      const auto weight = context_weight(session, query_id, spec, buckets, attribution);
      if (!(weight.value > 0.0)) continue;
      const QueryRecord& query = *session.find_query(query_id);

      TrainingContext ctx;
      ctx.session_id = session.session_id;
      ctx.query_id = query_id;
      ctx.context_features = query.context_features;
      ctx.context_weight = weight.value;
      ctx.segment = session.intent_bucket;

      std::vector<ContextItem> positives, negatives;
      for (const auto& cand : query.candidates) {
        ContextItem item;
        item.item_id = cand.item_id;
        item.features = cand.features;
        item.impressed = cand.impressed;
        if (auto slot = query.slot_of(cand.item_id)) {
          item.logged_rank = *slot + 1;
          item.clicked = std::binary_search(query.clicks.begin(), query.clicks.end(), *slot);
        }
        const bool is_purchase = purchased && *purchased == cand.item_id;
        if (engagement)
          item.label = item.clicked ? 1.0 : 0.0;
        else
          item.label = is_purchase ? 1.0 : (item.clicked ? options.partial_click_label : 0.0);
        const bool engaged = item.clicked || is_purchase;
        if (spec.label_source == LabelSource::Soft) {
          if (!cand.soft_relevance)
            throw std::invalid_argument("soft label requested but item " +
                                        std::to_string(cand.item_id) + " has none");
          item.label = *cand.soft_relevance;
        }
        if (!sampling_seed || (engaged && item.label > 0.0) ||
            (spec.label_source == LabelSource::Soft && engaged)) {
          positives.push_back(std::move(item));
        } else if (item.impressed && !engaged) {
          negatives.push_back(std::move(item));
        }
      }
      if (sampling_seed) {
        const auto take = std::min<std::size_t>(
            static_cast<std::size_t>(options.negatives_per_context), negatives.size());
        std::vector<std::size_t> idx(negatives.size());
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t i = 0; i < take; ++i) {
          std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
          std::swap(idx[i], idx[pick(rng)]);
        }
        idx.resize(take);
        std::sort(idx.begin(), idx.end());
        if (positives.empty()) continue;
        ctx.items = std::move(positives);
        for (auto i : idx) ctx.items.push_back(std::move(negatives[i]));
      } else {
        ctx.items = std::move(positives);
      }
      if (ctx.items.size() < 2) continue;
      out.contexts.push_back(std::move(ctx));
    }
  }

  if (spec.self_normalize && !out.contexts.empty()) {
    std::vector<double> w;
    w.reserve(out.contexts.size());
    for (const auto& c : out.contexts) w.push_back(c.context_weight);
    const auto normalized = normalize_weights(w);
    for (std::size_t i = 0; i < out.contexts.size(); ++i)
      out.contexts[i].context_weight = normalized[i];
  }
  return out;
}

}  // namespace

CorpusFits fit_corpus(std::span<const SessionRecord> logs, const RewardSpec& spec) {
  CorpusFits fits;
  if (spec.kind == RewardKind::Revenue)
    fits.value_buckets = fit_value_buckets(logs, spec.n_value_buckets);
  if (spec.attribution == AttributionScheme::MarkovMultiTouch)
    fits.markov = MarkovAttributionModel::fit(logs, spec.kind);
  return fits;
}

Dataset build_training_set(std::span<const SessionRecord> logs, const RewardSpec& spec,
                           const CorpusFits& fits, const DatasetOptions& options,
                           std::uint64_t seed) {
  return build(logs, spec, fits, options, seed);
}

Dataset build_eval_set(std::span<const SessionRecord> logs, const RewardSpec& spec,
                       const CorpusFits& fits, const DatasetOptions& options) {
  // Partial click credit shapes training labels only; purchase and revenue
  // metrics count the purchase alone.
  DatasetOptions eval_options = options;
  eval_options.partial_click_label = 0.0;
  return build(logs, spec, fits, eval_options, std::nullopt);
}

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << nlohmann::json{{"spec_tag", dataset.spec.tag()}}.dump() << '\n';
  for (const auto& c : dataset.contexts) out << nlohmann::json(c).dump() << '\n';
}

std::pair<std::string, std::vector<TrainingContext>> read_dataset(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::size_t line_no = 0;
  std::string tag;
  std::vector<TrainingContext> contexts;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (line_no == 1)
        tag = j.at("spec_tag").get<std::string>();
      else
        contexts.push_back(j.get<TrainingContext>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  if (line_no == 0) throw ParseError(1, "missing spec_tag header");
  return {tag, std::move(contexts)};
}

void attach_soft_labels(std::span<SessionRecord> sessions,
                        const std::map<SessionId, std::map<ItemId, double>>& oracle) {
  for (auto& s : sessions) {
    auto table = oracle.find(s.session_id);
    if (table == oracle.end()) continue;
    for (auto& q : s.queries)
      for (auto& c : q.candidates)
        if (auto it = table->second.find(c.item_id); it != table->second.end())
          c.soft_relevance = it->second;
  }
}

}  // namespace marketrank
