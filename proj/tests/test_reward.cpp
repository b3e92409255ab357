#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"
#include "marketrank/error.hpp"
#include "marketrank/reward.hpp"
#include "marketrank/sim.hpp"

using namespace marketrank;
using testing::make_query;
using testing::make_session;

namespace {

SessionRecord purchase_at(SessionId id, double price) {
  auto q = make_query(1, {id * 10, id * 10 + 1}, {0});
  q.candidates[0].price = price;
  return make_session(id, {q}, PurchaseRecord{id * 10, price, 1});
}

std::vector<SessionRecord> priced(const std::vector<double>& prices) {
  std::vector<SessionRecord> out;
  for (std::size_t i = 0; i < prices.size(); ++i)
    out.push_back(purchase_at(static_cast<SessionId>(i + 1), prices[i]));
  return out;
}

// Three queries; item 7 retrieved in q1 (not shown) and q3 (clicked, bought).
SessionRecord three_query_session() {
  auto q1 = make_query(1, {1, 2}, {0}, {7});
  auto q2 = make_query(2, {3, 4}, {});
  auto q3 = make_query(3, {7, 5}, {0});
  return make_session(1, {q1, q2, q3}, PurchaseRecord{7, 10.0, 3});
}

}  // namespace

TEST_SUITE("reward") {
  TEST_CASE("log discount") {
    CHECK(rank_discount(1) == doctest::Approx(1.0));
    CHECK(rank_discount(2) == doctest::Approx(0.6309297536));
    CHECK(rank_discount(3) == doctest::Approx(0.5));
    CHECK(rank_discount(7) == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS(rank_discount(0));
    const auto d = RankDiscount::log_discount();
    for (int r = 1; r < 40; ++r) CHECK(d(r) == rank_discount(r));
  }

  TEST_CASE("power discount extends past its table") {
    const auto d = RankDiscount::power(1.0, 5);
    CHECK(d(5) == doctest::Approx(0.2));
    CHECK(d(20) == doctest::Approx(0.05));
  }

  TEST_CASE("propensity fit") {
    // Flat CTR over ranks gives exponent 0.
    std::vector<SessionRecord> flat;
    for (int i = 1; i <= 10; ++i) flat.push_back(make_session(i, {make_query(1, {1, 2, 3, 4}, {0, 1, 2, 3})}));
    CHECK(fit_propensity_curve(flat).exponent() == doctest::Approx(0.0).epsilon(1e-12));

    // CTR exactly 1/r over ranks 1, 2, 4.
    std::vector<SessionRecord> inverse;
    SessionId id = 1;
    for (int i = 0; i < 4; ++i) {
      std::vector<int> clicks{0};
      if (i % 2 == 0) clicks.push_back(1);
      if (i == 0) clicks.push_back(3);
      inverse.push_back(make_session(id++, {make_query(1, {1, 2, 3, 4}, clicks)}));
    }
    CHECK(fit_propensity_curve(inverse).exponent() == doctest::Approx(1.0));

    std::vector<SessionRecord> one_rank{make_session(1, {make_query(1, {1, 2}, {0})})};
    CHECK_THROWS_AS(fit_propensity_curve(one_rank), FitError);
    CHECK_THROWS_AS(fit_propensity_curve(std::vector<SessionRecord>{}), FitError);
  }

  TEST_CASE("presets") {
    CHECK(preset_spec("engagement").kind == RewardKind::EngagementCount);
    CHECK(preset_spec("engagement").attribution == AttributionScheme::LastTouch);
    CHECK(preset_spec("purchase").kind == RewardKind::PurchaseCount);
    CHECK(preset_spec("purchase").attribution == AttributionScheme::AllTouch);
    CHECK(preset_spec("revenue").kind == RewardKind::Revenue);
    for (const auto& name : preset_names()) {
      const auto s = preset_spec(name);
      CHECK(s.clipping_cap == 10.0);
      CHECK(s.self_normalize);
      CHECK(s.label_source == LabelSource::Clicks);
    }
    try {
      preset_spec("clicks");
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      const std::string what = e.what();
      CHECK(what.find("engagement") != std::string::npos);
      CHECK(what.find("revenue") != std::string::npos);
    }
    CHECK(preset_spec("purchase").tag() != preset_spec("revenue").tag());
    auto custom = preset_spec("purchase");
    custom.attribution = AttributionScheme::LastTouch;
    CHECK(custom.tag() != preset_spec("purchase").tag());
  }

  TEST_CASE("enum names round trip") {
    for (auto k : {RewardKind::EngagementCount, RewardKind::PurchaseCount, RewardKind::Revenue})
      CHECK(parse_reward_kind(to_string(k)) == k);
    for (auto a : {AttributionScheme::LastTouch, AttributionScheme::AllTouch,
                   AttributionScheme::MarkovMultiTouch})
      CHECK(parse_attribution(to_string(a)) == a);
    for (auto l : {LabelSource::Clicks, LabelSource::Soft}) CHECK(parse_label_source(to_string(l)) == l);
    CHECK_THROWS_AS(parse_attribution("first_touch"), ConfigError);
  }

  TEST_CASE("success events") {
    const auto s = three_query_session();
    CHECK(success_event(s, RewardKind::PurchaseCount)->item_id == 7);
    const auto eng = success_event(s, RewardKind::EngagementCount);
    CHECK(eng->item_id == 7);
    CHECK(eng->query_id == 3);
    const auto none = make_session(2, {make_query(1, {1, 2}, {})});
    CHECK_FALSE(success_event(none, RewardKind::EngagementCount));
    CHECK_FALSE(success_event(none, RewardKind::Revenue));
  }

  TEST_CASE("last touch and all touch") {
    const auto s = three_query_session();
    const auto last = attribute(s, 7, AttributionScheme::LastTouch);
    CHECK(last.size() == 1);
    CHECK(last.at(3) == 1.0);
    const auto all = attribute(s, 7, AttributionScheme::AllTouch);
    CHECK(all.size() == 2);
    CHECK(all.at(1) == doctest::Approx(0.5));
    CHECK(all.at(3) == doctest::Approx(0.5));
    CHECK_THROWS(attribute(s, 7, AttributionScheme::MarkovMultiTouch));
  }

  TEST_CASE("markov attribution") {
    std::mt19937_64 rng(2);
    std::vector<SessionRecord> logs;
    for (int i = 1; i <= 400; ++i) logs.push_back(testing::random_session(i, rng));
    const auto m = MarkovAttributionModel::fit(logs, RewardKind::PurchaseCount);
    const double p = m.conversion_probability();
    CHECK(p > 0.0);
    CHECK(p < 1.0);
    for (int st = 0; st < MarkovAttributionModel::kTransient; ++st) {
      CHECK(m.removal_effect(st) >= 0.0);
      CHECK(m.removal_effect(st) <= 1.0);
    }
    for (const auto& s : logs) {
      if (!s.purchase) continue;
      const auto d = attribute(s, s.purchase->item_id, AttributionScheme::MarkovMultiTouch, &m);
      double total = 0.0;
      for (const auto& [q, w] : d) {
        CHECK(w > 0.0);
        CHECK(q <= s.purchase->query_id);
        total += w;
      }
      CHECK(total == doctest::Approx(1.0));
    }
    CHECK(MarkovAttributionModel::state_of(true, 0, 3) != MarkovAttributionModel::state_of(false, 0, 3));
    CHECK(MarkovAttributionModel::state_of(true, 0, 3) != MarkovAttributionModel::state_of(true, 2, 3));

    // Nothing converts: no effects, last touch fallback.
    std::vector<SessionRecord> cold{make_session(1, {make_query(1, {1, 2}, {0})})};
    const auto c = MarkovAttributionModel::fit(cold, RewardKind::PurchaseCount);
    CHECK(c.conversion_probability() == 0.0);
    CHECK(c.removal_effect(0) == 0.0);
  }

  TEST_CASE("value buckets cut the revenue curve") {
    const auto logs = priced({10, 10, 100, 100});
    const auto b = fit_value_buckets(logs, 2);
    REQUIRE(b.size() == 2);
    CHECK(b.boundaries == std::vector<double>{100.0});
    CHECK(b.revenue_share[0] == doctest::Approx(20.0 / 220.0));
    CHECK(b.revenue_share[1] == doctest::Approx(200.0 / 220.0));
    CHECK(b.converting_session_count == std::vector<int>{2, 2});
    CHECK(b.bucket_of(5.0) == 0);
    CHECK(b.bucket_of(100.0) == 1);
    CHECK(b.bucket_of(1e9) == 1);

    auto spec = preset_spec("revenue");
    spec.n_value_buckets = 2;
    CHECK(session_value(logs[2], spec, &b) == doctest::Approx(100.0 / 220.0));
    CHECK(session_value(logs[0], spec, &b) == doctest::Approx(10.0 / 220.0));
    CHECK_THROWS_AS(session_value(logs[0], spec, nullptr), std::invalid_argument);
  }

  TEST_CASE("value buckets merge on tied prices and need enough purchases") {
    const auto tied = fit_value_buckets(priced({50, 50, 50, 50, 50}), 5);
    CHECK(tied.size() == 1);
    CHECK(tied.revenue_share[0] == doctest::Approx(1.0));
    CHECK_THROWS_AS(fit_value_buckets(priced({1, 2}), 5), FitError);
    CHECK_THROWS_AS(fit_value_buckets(priced({1, 2}), 0), ConfigError);
  }

  TEST_CASE("session value and context weight") {
    const auto engaged = make_session(1, {make_query(1, {1, 2}, {1})});
    const auto idle = make_session(2, {make_query(1, {1, 2}, {})});
    const auto bought = three_query_session();
    const auto eng = preset_spec("engagement");
    const auto pur = preset_spec("purchase");
    CHECK(session_value(engaged, eng, nullptr) == 1.0);
    CHECK(session_value(idle, eng, nullptr) == 0.0);
    CHECK(session_value(engaged, pur, nullptr) == 0.0);
    CHECK(session_value(bought, pur, nullptr) == 1.0);

    const auto all = attribute(bought, 7, AttributionScheme::AllTouch);
    CHECK(context_weight(bought, 1, pur, nullptr, all).value == doctest::Approx(0.5));
    CHECK(context_weight(bought, 2, pur, nullptr, all).value == 0.0);

    auto capped = pur;
    capped.clipping_cap = 0.25;
    CHECK(context_weight(bought, 3, capped, nullptr, all).value == doctest::Approx(0.25));
  }

  TEST_CASE("clipping and self-normalization") {
    CHECK(clip_weight(12.0, 10.0) == 10.0);
    CHECK(clip_weight(3.0, 10.0) == 3.0);
    CHECK(clip_weight(12.0, std::nullopt) == 12.0);
    const auto n = normalize_weights(std::vector<double>{1.0, 3.0, 0.0});
    CHECK(n == std::vector<double>{0.25, 0.75, 0.0});
    CHECK_THROWS_AS(normalize_weights(std::vector<double>{0.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(normalize_weights(std::vector<double>{1.0, -1.0}), std::invalid_argument);
  }

  TEST_CASE("per-query reward") {
    const std::vector<double> rel{0.0, 1.0, 0.0};
    const std::vector<std::size_t> best{1, 0, 2}, worst{0, 2, 1};
    const auto d = RankDiscount::log_discount();
    CHECK(per_query_expected_reward(best, rel, d, true) == doctest::Approx(1.0));
    CHECK(per_query_expected_reward(worst, rel, d, true) == doctest::Approx(0.5));
    CHECK(per_query_expected_reward(worst, rel, d, false) == doctest::Approx(0.5));
    const std::vector<double> zero{0.0, 0.0, 0.0};
    CHECK(per_query_expected_reward(best, zero, d, true) == 0.0);
    CHECK_THROWS_AS(per_query_expected_reward(std::vector<std::size_t>{}, std::vector<double>{}, d, true),
                    std::invalid_argument);
    CHECK_THROWS_AS(per_query_expected_reward(best, std::vector<double>{1.0}, d, true), DimensionError);

    const std::vector<double> graded{3.0, 2.0, 1.0};
    const std::vector<std::size_t> id{0, 1, 2};
    CHECK(ideal_dcg(graded, d) == doctest::Approx(3.0 + 2.0 * rank_discount(2) + 0.5));
    CHECK(dcg(id, graded, d) == doctest::Approx(ideal_dcg(graded, d)));
  }

  TEST_CASE("debiased labels") {
    TrainingContext ctx;
    ContextItem top, deep, unseen, idle;
    top.label = 1.0, top.clicked = true, top.logged_rank = 1, top.impressed = true;
    deep.label = 1.0, deep.clicked = true, deep.logged_rank = 4, deep.impressed = true;
    unseen.label = 1.0;
    idle.label = 0.0, idle.logged_rank = 2, idle.impressed = true;
    ctx.items = {top, deep, unseen, idle};
    const auto p = RankDiscount::power(1.0);
    const auto labels = debias_labels(ctx, p);
    CHECK(labels == std::vector<double>{1.0, 4.0, 1.0, 0.0});
    CHECK(debias_labels(ctx, p, 2.0)[1] == 2.0);
    ctx.items[0].logged_rank.reset();
    CHECK_THROWS_AS(debias_labels(ctx, p), std::invalid_argument);
  }

  TEST_CASE("serialized fits round trip") {
    const auto b = fit_value_buckets(priced({3, 9, 27, 81, 243}), 3);
    nlohmann::json jb = b;
    const auto b2 = jb.get<ValueBuckets>();
    CHECK(b2.boundaries == b.boundaries);
    CHECK(b2.revenue_share == b.revenue_share);

    const auto d = RankDiscount::power(0.8, 12);
    nlohmann::json jd = d;
    const auto d2 = jd.get<RankDiscount>();
    for (int r = 1; r < 30; ++r) CHECK(d2(r) == d(r));
    nlohmann::json jl = RankDiscount::log_discount();
    CHECK(jl.get<RankDiscount>().kind() == RankDiscount::Kind::LogDiscount);
  }
}
