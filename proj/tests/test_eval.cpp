#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "marketrank/error.hpp"
#include "marketrank/eval.hpp"
#include "marketrank/sim.hpp"

using namespace marketrank;
using testing::make_query;
using testing::make_session;

namespace {

ScoringFunction linear_with(std::vector<double> params) {
  auto f = ScoringFunction::linear(params.size() - 1);
  std::copy(params.begin(), params.end(), f.parameters().begin());
  return f;
}

// Small simulated marketplace shared by the tests below.
struct Market {
  SimConfig config;
  ItemCatalog catalog;
  std::vector<SimulatedSession> sessions;
  std::vector<SessionRecord> logs;

  explicit Market(std::size_t n, const SimPolicy& logging = SimPolicy::random()) {
    config.n_items = 300;
    catalog = sample_catalog(config.n_items, config.n_buckets, 1, config);
    sessions = simulate_corpus(logging, catalog, config, n, 77);
    logs = records_of(sessions);
  }

  std::size_t input_dim() const { return config.item_feature_dim() + SimConfig::kContextFeatureDim; }

  Dataset eval_set(const std::string& name) const {
    const auto spec = preset_spec(name);
    return build_eval_set(logs, spec, fit_corpus(logs, spec));
  }
};

// Ranks a context by the hidden true relevance of each item.
Ranker truth_ranker(const Market& m) {
  std::map<SessionId, const SimulatedSession*> by_id;
  for (const auto& s : m.sessions) by_id[s.record.session_id] = &s;
  return [by_id](const TrainingContext& c) {
    const auto& rel = by_id.at(c.session_id)->true_relevance;
    std::vector<double> scores;
    std::vector<ItemId> ids;
    for (const auto& it : c.items) {
      scores.push_back(rel.at(it.item_id));
      ids.push_back(it.item_id);
    }
    return argsort_scores(scores, ids);
  };
}

Ranker shuffled_ranker(std::uint64_t seed) {
  return [seed](const TrainingContext& c) {
    std::vector<std::size_t> order(c.items.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c.session_id), static_cast<std::uint64_t>(c.query_id)));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
  };
}

std::string first_line(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("metric names") {
    for (auto m : {Metric::ExpClicks, Metric::ExpPurchases, Metric::ExpRevenue}) {
      CHECK(parse_metric(to_string(m)) == m);
      CHECK(metric_of(reward_kind_of(m)) == m);
    }
    CHECK_THROWS_AS(parse_metric("ExpViews"), ConfigError);
  }

  TEST_CASE("hand-built contexts: logged-optimal order and a reversal") {
    // One clicked item at logged rank 1 of two.
    const std::vector<SessionRecord> logs{make_session(1, {make_query(1, {5, 6}, {0})})};
    const auto spec = preset_spec("engagement");
    const auto ds = build_eval_set(logs, spec, {});
    REQUIRE(ds.size() == 1);
    CHECK(counterfactual_metric(ds, Ranker(logged_order), spec).value == doctest::Approx(1.0));
    const Ranker reversed = [](const TrainingContext&) { return std::vector<std::size_t>{1, 0}; };
    CHECK(counterfactual_metric(ds, reversed, spec).value == doctest::Approx(0.6309297536));
  }

  TEST_CASE("empty eval sets and spec mismatches are rejected") {
    const auto spec = preset_spec("engagement");
    Dataset empty;
    empty.spec = spec;
    CHECK_THROWS_AS(counterfactual_metric(empty, Ranker(logged_order), spec), std::invalid_argument);
    const std::vector<SessionRecord> logs{make_session(1, {make_query(1, {5, 6}, {0})})};
    const auto ds = build_eval_set(logs, spec, {});
    CHECK_THROWS_AS(counterfactual_metric(ds, Ranker(logged_order), preset_spec("purchase")),
                    SpecMismatchError);
    CHECK_THROWS_AS(require_spec("engagement:x", spec), SpecMismatchError);
    CHECK_NOTHROW(require_spec(spec.tag(), spec));
  }

  TEST_CASE("the logged order scores its own weighted DCG") {
    const Market m(600);
    const auto spec = preset_spec("engagement");
    const auto ds = m.eval_set("engagement");
    EvalOptions options;
    const auto est = counterfactual_metric(ds, Ranker(logged_order), spec, options);
    // Independent computation: debiased labels in logged slot order over the
    // ideal order, weighted by context weight.
    double num = 0.0, den = 0.0;
    for (const auto& c : ds.contexts) {
      std::vector<std::pair<int, double>> ranked;  // logged rank, label
      std::vector<double> all;
      for (const auto& it : c.items) {
        const double y = it.clicked ? std::min(10.0, it.label * std::log2(1.0 + *it.logged_rank)) : it.label;
        all.push_back(y);
        if (it.logged_rank) ranked.emplace_back(*it.logged_rank, y);
      }
      std::sort(ranked.begin(), ranked.end());
      double value = 0.0;
      for (const auto& [r, y] : ranked) value += y / std::log2(1.0 + r);
      std::sort(all.rbegin(), all.rend());
      double ideal = 0.0;
      for (std::size_t r = 0; r < all.size(); ++r) ideal += all[r] / std::log2(2.0 + r);
      num += c.context_weight * (ideal > 0 ? value / ideal : 0.0);
      den += c.context_weight;
    }
    CHECK(est.value == doctest::Approx(num / den).epsilon(1e-12));
    CHECK(est.ci_low <= est.value);
    CHECK(est.ci_high >= est.value);
    CHECK(est.n_contexts == ds.size());
  }

  TEST_CASE("a policy against itself has zero lift") {
    const Market m(500);
    const auto spec = preset_spec("engagement");
    const auto ds = m.eval_set("engagement");
    const auto p = policy_ranker(Policy(ScoringFunction::mlp1(m.input_dim(), 4, 2)));
    for (const auto& row : segment_lift(ds, p, p, spec)) {
      REQUIRE(row.lift.has_value());
      CHECK(*row.lift == 0.0);
      CHECK(row.ci_low == 0.0);
      CHECK(row.ci_high == 0.0);
    }
  }

  TEST_CASE("the relevance oracle beats a shuffle in every segment") {
    const Market m(3000);
    const auto spec = preset_spec("engagement");
    const auto ds = m.eval_set("engagement");
    const auto rows = segment_lift(ds, truth_ranker(m), shuffled_ranker(5), spec);
    REQUIRE(rows.size() == 1 + static_cast<std::size_t>(m.config.n_buckets));
    CHECK_FALSE(rows[0].bucket.has_value());
    for (const auto& row : rows) {
      REQUIRE(row.lift.has_value());
      CHECK(*row.lift > 0.0);
      CHECK(row.ci_low > 0.0);
    }
  }

  TEST_CASE("bootstrap intervals are reproducible") {
    const Market m(400);
    const auto spec = preset_spec("engagement");
    const auto ds = m.eval_set("engagement");
    EvalOptions options;
    options.seed = 9;
    const auto a = counterfactual_metric(ds, shuffled_ranker(1), spec, options);
    options.threads = 3;
    const auto b = counterfactual_metric(ds, shuffled_ranker(1), spec, options);
    CHECK(a.ci_low == b.ci_low);
    CHECK(a.ci_high == b.ci_high);
  }

  TEST_CASE("alpha sweep") {
    const Market m(2000);
    const auto eng = m.eval_set("engagement");
    const auto pur = m.eval_set("purchase");
    const auto fa = ScoringFunction::mlp1(m.input_dim(), 4, 11);
    const auto fe = ScoringFunction::mlp1(m.input_dim(), 4, 12);
    const std::map<Metric, const Dataset*> sets{{Metric::ExpClicks, &eng}, {Metric::ExpPurchases, &pur}};
    EvalOptions options;
    options.bootstrap_replicates = 200;

    const auto grid = default_alpha_grid();
    REQUIRE(grid.size() == 11);
    const auto curve = alpha_sweep(fa, fe, grid, sets, eng, options);
    const std::size_t per_alpha = 2 * (1 + static_cast<std::size_t>(m.config.n_buckets));
    CHECK(curve.rows.size() == 11 * per_alpha);
    CHECK_FALSE(curve.rows[0].bucket.has_value());

    // alpha = 0 is the baseline.
    for (const auto& r : curve.rows)
      if (r.alpha == 0.0 && r.lift) CHECK(*r.lift == 0.0);

    // Endpoints coincide with each component evaluated alone.
    const auto pa = counterfactual_metric(eng, Policy(fa), eng.spec, options);
    const auto pe = counterfactual_metric(eng, Policy(fe), eng.spec, options);
    CHECK(curve.find(0.0, Metric::ExpClicks)->estimate == doctest::Approx(pa.value));
    CHECK(curve.find(1.0, Metric::ExpClicks)->estimate == doctest::Approx(pe.value));

    const std::vector<double> ends{0.0, 1.0};
    const auto short_curve = alpha_sweep(fa, fe, ends, sets, eng, options);
    CHECK(short_curve.rows.size() == 2 * per_alpha);
    CHECK(short_curve.find(1.0, Metric::ExpPurchases, 2)->estimate ==
          curve.find(1.0, Metric::ExpPurchases, 2)->estimate);

    // A small alpha step moves few rankings.
    const auto p0 = policy_ranker(mix(fa, fe, 0.5, eng));
    const auto p1 = policy_ranker(mix(fa, fe, 0.505, eng));
    const auto far = policy_ranker(mix(fa, fe, 1.0, eng));
    CHECK(ranking_disagreement(eng, p0, p1).mean_discordant_pairs <
          ranking_disagreement(eng, p0, far).mean_discordant_pairs);
    CHECK(ranking_disagreement(eng, p0, p1).mean_discordant_pairs < 0.02);
    CHECK(ranking_disagreement(eng, p0, p0).contexts_differing == 0.0);

    const std::map<Metric, const Dataset*> wrong{{Metric::ExpPurchases, &eng}};
    CHECK_THROWS_AS(alpha_sweep(fa, fe, ends, wrong, eng, options), SpecMismatchError);
  }

  TEST_CASE("alpha grids are validated") {
    CHECK_NOTHROW(validate_alpha_grid(default_alpha_grid()));
    CHECK_THROWS_AS(validate_alpha_grid(std::vector<double>{}), ConfigError);
    CHECK_THROWS_AS(validate_alpha_grid(std::vector<double>{0.5, 0.2}), ConfigError);
    CHECK_THROWS_AS(validate_alpha_grid(std::vector<double>{0.0, 1.5}), ConfigError);
    CHECK_THROWS_AS(validate_alpha_grid(std::vector<double>{0.3, 0.3}), ConfigError);
  }

  TEST_CASE("IPW of the logging policy recovers the logged click rate") {
    const Market m(800, SimPolicy::retrieval(SimConfig{}));
    const auto logging = Policy(linear_with([&] {
      std::vector<double> w(m.input_dim() + 1, 0.0);
      w[0] = 1.0;
      return w;
    }()));
    double clicks = 0.0, queries = 0.0;
    for (const auto& s : m.logs)
      for (const auto& q : s.queries) {
        clicks += static_cast<double>(q.clicks.size());
        queries += 1.0;
      }
    const double ipw = ipw_expected_clicks(m.logs, logging, RankDiscount::power(1.0), 10);
    CHECK(ipw == doctest::Approx(clicks / queries).epsilon(1e-12));
    CHECK_THROWS(ipw_expected_clicks(std::vector<SessionRecord>{}, logging, RankDiscount::power(1.0), 10));
  }

  TEST_CASE("CSV outputs carry their headers") {
    const Market m(600);
    const auto eng = m.eval_set("engagement");
    const auto fa = ScoringFunction::mlp1(m.input_dim(), 3, 1);
    const auto fe = ScoringFunction::mlp1(m.input_dim(), 3, 2);
    EvalOptions options;
    options.bootstrap_replicates = 50;
    const std::vector<double> grid{0.0, 1.0};
    const auto curve = alpha_sweep(fa, fe, grid, {{Metric::ExpClicks, &eng}}, eng, options);
    testing::TempDir dir("csv");
    write_sweep_csv(curve, dir / "sweep.csv");
    CHECK(first_line(dir / "sweep.csv") == "alpha,metric,bucket,estimate,lift,ci_low,ci_high");
    const auto lifts = segment_lift(eng, policy_ranker(Policy(fa)), policy_ranker(Policy(fe)), eng.spec, options);
    write_segments_csv(lifts, dir / "segments.csv");
    CHECK(first_line(dir / "segments.csv") == "metric,bucket,estimate_a,estimate_b,lift,ci_low,ci_high");
    std::ifstream in(dir / "sweep.csv");
    std::size_t lines = 0;
    for (std::string l; std::getline(in, l);) ++lines;
    CHECK(lines == 1 + curve.rows.size());
  }
}
