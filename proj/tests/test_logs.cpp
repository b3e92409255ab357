#include <fstream>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "marketrank/dataset.hpp"
#include "marketrank/error.hpp"
#include "marketrank/log_io.hpp"
#include "marketrank/sim.hpp"

using namespace marketrank;
using testing::make_query;
using testing::make_session;

namespace {

// Session of one query with four impressed items and a click on slot 1,
// followed by a purchase of that item when `buy` is set.
SessionRecord four_item_session(bool buy) {
  auto q = make_query(1, {11, 12, 13, 14}, {1});
  std::optional<PurchaseRecord> p;
  if (buy) p = PurchaseRecord{12, 10.0, 1};
  return make_session(1, {q}, p);
}

const ContextItem* find_item(const TrainingContext& ctx, ItemId id) {
  for (const auto& it : ctx.items)
    if (it.item_id == id) return &it;
  return nullptr;
}

}  // namespace

TEST_SUITE("logs") {
  TEST_CASE("records validate") {
    auto s = four_item_session(true);
    CHECK_NOTHROW(validate(s));
    CHECK(s.queries[0].slot_of(13) == 2);
    CHECK_FALSE(s.queries[0].slot_of(99).has_value());
    CHECK(s.queries[0].clicked(12));
    CHECK_FALSE(s.queries[0].clicked(11));

    auto bad = s;
    bad.queries[0].clicks = {7};
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = s;
    bad.purchase->item_id = 14;  // never clicked
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
    bad = s;
    bad.queries[0].ranking.push_back(99);
    CHECK_THROWS_AS(validate(bad), std::invalid_argument);
  }

  TEST_CASE("log round trip is exact") {
    std::mt19937_64 rng(3);
    std::vector<SessionRecord> sessions;
    for (int i = 1; i <= 200; ++i) {
      sessions.push_back(testing::random_session(i, rng));
      if (i % 3 == 0) sessions.back().queries[0].candidates[0].soft_relevance = 0.125 * (i % 8);
    }
    testing::TempDir dir("logs");
    write_log(sessions, dir / "logs.jsonl");
    CHECK(read_log(dir / "logs.jsonl") == sessions);

    // Writing what was read gives the same bytes.
    write_log(read_log(dir / "logs.jsonl"), dir / "again.jsonl");
    std::ifstream a(dir / "logs.jsonl"), b(dir / "again.jsonl");
    const std::string sa((std::istreambuf_iterator<char>(a)), {});
    const std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
  }

  TEST_CASE("simulated logs round trip") {
    SimConfig config;
    config.n_items = 200;
    const auto cat = sample_catalog(config.n_items, config.n_buckets, 1, config);
    const auto records = records_of(simulate_corpus(SimPolicy::random(), cat, config, 50, 3));
    testing::TempDir dir("simlogs");
    write_log(records, dir / "logs.jsonl");
    CHECK(read_log(dir / "logs.jsonl") == records);
  }

  TEST_CASE("empty file reads as no sessions") {
    testing::TempDir dir("empty");
    { std::ofstream(dir / "empty.jsonl"); }
    CHECK(read_log(dir / "empty.jsonl").empty());
    CHECK_THROWS(read_log(dir / "missing.jsonl"));
  }

  TEST_CASE("a truncated record reports its line") {
    testing::TempDir dir("trunc");
    std::vector<SessionRecord> sessions{four_item_session(false), four_item_session(true)};
    sessions[1].session_id = 2;
    write_log(sessions, dir / "logs.jsonl");
    std::ifstream in(dir / "logs.jsonl");
    std::string l1, l2;
    std::getline(in, l1);
    std::getline(in, l2);
    { std::ofstream(dir / "bad.jsonl") << l1 << "\n" << l2.substr(0, l2.size() / 2) << "\n"; }
    try {
      read_log(dir / "bad.jsonl");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }

    // Well-formed JSON that breaks a record invariant is rejected too.
    auto broken = sessions;
    broken[0].queries[0].clicks = {9};
    nlohmann::json j = broken[0];
    { std::ofstream(dir / "invalid.jsonl") << j.dump() << "\n"; }
    CHECK_THROWS_AS(read_log(dir / "invalid.jsonl"), ParseError);
  }

  TEST_CASE("engagement context keeps the click and samples negatives") {
    const std::vector<SessionRecord> logs{four_item_session(false)};
    const auto spec = preset_spec("engagement");
    const auto ds = build_training_set(logs, spec, fit_corpus(logs, spec), {}, 1);
    REQUIRE(ds.size() == 1);
    const auto& ctx = ds.contexts[0];
    CHECK(ctx.items.size() == 4);  // one positive, all three negatives
    CHECK(ctx.context_weight == doctest::Approx(1.0));
    const auto* clicked = find_item(ctx, 12);
    REQUIRE(clicked);
    CHECK(clicked->label == 1.0);
    CHECK(clicked->logged_rank == 2);
    CHECK(clicked->clicked);
    for (const auto& it : ctx.items)
      if (it.item_id != 12) CHECK(it.label == 0.0);
  }

  TEST_CASE("negatives are capped") {
    const std::vector<SessionRecord> logs{four_item_session(false)};
    const auto spec = preset_spec("engagement");
    DatasetOptions options;
    options.negatives_per_context = 1;
    const auto ds = build_training_set(logs, spec, fit_corpus(logs, spec), options, 1);
    REQUIRE(ds.size() == 1);
    CHECK(ds.contexts[0].items.size() == 2);
    options.negatives_per_context = 0;
    CHECK_THROWS_AS(build_training_set(logs, spec, fit_corpus(logs, spec), options, 1),
                    ConfigError);
  }

  TEST_CASE("sessions without success give no context") {
    const std::vector<SessionRecord> logs{make_session(1, {make_query(1, {1, 2, 3}, {})})};
    const auto spec = preset_spec("engagement");
    CHECK(build_training_set(logs, spec, fit_corpus(logs, spec), {}, 1).empty());
    const auto purchase = preset_spec("purchase");
    const std::vector<SessionRecord> clicked{four_item_session(false)};
    CHECK(build_training_set(clicked, purchase, {}, {}, 1).empty());
  }

  TEST_CASE("purchase labels give partial credit to clicks") {
    auto q1 = make_query(1, {1, 2, 3}, {0});
    auto q2 = make_query(2, {4, 2, 5}, {0, 1});
    const std::vector<SessionRecord> logs{make_session(1, {q1, q2}, PurchaseRecord{2, 10.0, 2})};
    const auto spec = preset_spec("purchase");
    const auto ds = build_training_set(logs, spec, fit_corpus(logs, spec), {}, 1);
    // Item 2 was retrieved in both queries: all-touch splits the purchase.
    REQUIRE(ds.size() == 2);
    // Weights are self-normalized over the dataset.
    CHECK(ds.contexts[0].context_weight + ds.contexts[1].context_weight == doctest::Approx(1.0));
    const auto& last = ds.contexts[1];
    CHECK(last.query_id == 2);
    CHECK(find_item(last, 2)->label == 1.0);
    CHECK(find_item(last, 4)->label == doctest::Approx(0.2));
  }

  TEST_CASE("an unimpressed purchased item still enters the all-touch context") {
    auto q1 = make_query(1, {1, 2, 3}, {}, {9});
    auto q2 = make_query(2, {9, 4, 5}, {0});
    const std::vector<SessionRecord> logs{make_session(1, {q1, q2}, PurchaseRecord{9, 10.0, 2})};
    const auto spec = preset_spec("purchase");
    const auto ds = build_training_set(logs, spec, fit_corpus(logs, spec), {}, 1);
    REQUIRE(ds.size() == 2);
    const auto& first = ds.contexts[0];
    CHECK(first.query_id == 1);
    const auto* bought = find_item(first, 9);
    REQUIRE(bought);
    CHECK(bought->label == 1.0);
    CHECK_FALSE(bought->impressed);
    CHECK_FALSE(bought->logged_rank.has_value());
    CHECK(first.items.size() == 4);
  }

  TEST_CASE("last touch gives a single context") {
    auto q1 = make_query(1, {1, 2, 3}, {0});
    auto q2 = make_query(2, {4, 2, 5}, {1});
    const std::vector<SessionRecord> logs{make_session(1, {q1, q2}, PurchaseRecord{2, 10.0, 2})};
    auto spec = preset_spec("purchase");
    spec.attribution = AttributionScheme::LastTouch;
    const auto ds = build_training_set(logs, spec, {}, {}, 1);
    REQUIRE(ds.size() == 1);
    CHECK(ds.contexts[0].query_id == 2);
  }

  TEST_CASE("eval sets keep every retrieved candidate") {
    SimConfig config;
    config.n_items = 300;
    const auto cat = sample_catalog(config.n_items, config.n_buckets, 1, config);
    const auto logs = records_of(simulate_corpus(SimPolicy::random(), cat, config, 300, 3));
    const auto spec = preset_spec("engagement");
    const auto ds = build_eval_set(logs, spec, fit_corpus(logs, spec));
    REQUIRE_FALSE(ds.empty());
    for (const auto& ctx : ds.contexts) CHECK(ctx.items.size() == 25);

    const auto purchase = preset_spec("purchase");
    const auto pds = build_eval_set(logs, purchase, fit_corpus(logs, purchase));
    for (const auto& ctx : pds.contexts)
      for (const auto& it : ctx.items) CHECK((it.label == 0.0 || it.label == 1.0));
  }

  TEST_CASE("dataset construction is deterministic and round trips") {
    std::mt19937_64 rng(9);
    std::vector<SessionRecord> logs;
    for (int i = 1; i <= 300; ++i) logs.push_back(testing::random_session(i, rng));
    for (const auto& name : preset_names()) {
      const auto spec = preset_spec(name);
      const auto fits = fit_corpus(logs, spec);
      const auto a = build_training_set(logs, spec, fits, {}, 4);
      const auto b = build_training_set(logs, spec, fits, {}, 4);
      CHECK(a.contexts == b.contexts);
      testing::TempDir dir("ds");
      write_dataset(a, dir / "ds.jsonl");
      const auto [tag, contexts] = read_dataset(dir / "ds.jsonl");
      CHECK(tag == spec.tag());
      CHECK(contexts == a.contexts);
    }
  }

  TEST_CASE("a dataset file without a header is rejected") {
    testing::TempDir dir("nohdr");
    { std::ofstream(dir / "ds.jsonl"); }
    CHECK_THROWS_AS(read_dataset(dir / "ds.jsonl"), ParseError);
  }

  TEST_CASE("soft labels replace click labels") {
    auto logs = std::vector<SessionRecord>{four_item_session(false)};
    std::map<SessionId, std::map<ItemId, double>> oracle{{1, {{11, 0.1}, {12, 0.9}, {13, 0.3}, {14, 0.0}}}};
    auto spec = preset_spec("engagement");
    spec.label_source = LabelSource::Soft;
    CHECK_THROWS_AS(build_training_set(logs, spec, {}, {}, 1), std::invalid_argument);
    attach_soft_labels(logs, oracle);
    const auto ds = build_training_set(logs, spec, {}, {}, 1);
    REQUIRE(ds.size() == 1);
    CHECK(find_item(ds.contexts[0], 12)->label == doctest::Approx(0.9));
  }
}
