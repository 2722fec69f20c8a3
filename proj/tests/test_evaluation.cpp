#include <cmath>

#include "doctest.h"
#include "spade/errors.hpp"
#include "spade/evaluation.hpp"
#include "test_support.hpp"

using namespace spade;
using spade::test::make_record;
using spade::test::OracleScope;
using spade::test::oracle_wql;

TEST_SUITE("evaluation") {

TEST_CASE("metric scope names") {
  CHECK(MetricScope{}.name() == "all/all");
  CHECK(MetricScope{SeriesScope::PeakSeries, HorizonScope::Peak}.name() == "peak_series/peak");
  CHECK(MetricScope{SeriesScope::All, HorizonScope::PostPeak}.name() == "all/post_peak");
}

TEST_CASE("eval points classify peak and post-peak windows") {
  SeriesRecord r = make_record("A", {1, 1, 9, 1, 1, 1, 1}, {0, 0, 1, 0, 0, 0, 0});
  const EvalSet eval = build_eval_set({r}, {{1, 1}}, 0, 0, 2);
  REQUIRE(eval.series.size() == 1);
  const EvalSeries& es = eval.series[0];
  CHECK(es.in_peak_set);
  REQUIRE(es.points.size() == 6);  // t in [0, 5], window {t+1}
  auto point = [&](int t) {
    for (const EvalPoint& p : es.points)
      if (p.t == t) return p;
    REQUIRE(false);
    return EvalPoint{};
  };
  CHECK(point(1).is_peak);        // window {2}
  CHECK(!point(1).is_post_peak);
  CHECK(point(2).is_post_peak);   // window {3}, first period after the run
  CHECK(point(3).is_post_peak);   // window {4}, second and last within W=2
  CHECK(!point(4).is_peak);
  CHECK(!point(4).is_post_peak);  // window {5} is past the post-peak stretch
  CHECK(point(0).target == 1.0);
  CHECK(point(1).target == 9.0);
}

TEST_CASE("post-peak periods follow maximal runs only") {
  // two adjacent peaks form one run; the window starts after the run ends
  SeriesRecord r = make_record("A", {1, 1, 1, 1, 1, 1}, {1, 1, 0, 0, 0, 0});
  const EvalSet eval = build_eval_set({r}, {{1, 1}}, 0, 0, 2);
  const EvalSeries& es = eval.series[0];
  for (const EvalPoint& p : es.points) {
    const int target_period = p.t + 1;
    if (target_period == 1) CHECK(p.is_peak);
    if (target_period == 2 || target_period == 3) CHECK(p.is_post_peak);
    if (target_period >= 4) {
      CHECK(!p.is_peak);
      CHECK(!p.is_post_peak);
    }
  }

  // separate runs each cast their own shadow; peak periods stay peaks
  SeriesRecord r2 = make_record("B", {1, 1, 1, 1}, {1, 0, 1, 0});
  const EvalSet e2 = build_eval_set({r2}, {{1, 1}}, 0, 0, 1);
  for (const EvalPoint& p : e2.series[0].points) {
    const int u = p.t + 1;
    if (u == 1) CHECK(p.is_post_peak);  // after the first run
    if (u == 2) CHECK(p.is_peak);       // the second peak, peak wins
    if (u == 3) CHECK(p.is_post_peak);  // after the second run
  }

  // a run ending at the last period casts no shadow at all
  SeriesRecord r3 = make_record("C", {1, 1, 9}, {0, 0, 1});
  const EvalSet e3 = build_eval_set({r3}, {{1, 1}}, 0, 0, 4);
  for (const EvalPoint& p : e3.series[0].points) CHECK(!p.is_post_peak);
}

TEST_CASE("negative period ranges count from the end") {
  SeriesRecord r = make_record("A", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  const EvalSet eval = build_eval_set({r}, {{1, 1}}, -3, 0, 4);
  REQUIRE(eval.series[0].points.size() == 3);  // windows {7}, {8}, {9}
  CHECK(eval.series[0].points.front().t == 6);
  CHECK(eval.series[0].points.back().t == 8);
  CHECK(eval.series[0].points.back().target == 10.0);

  // straddling windows are excluded: span 2 windows must fit entirely
  const EvalSet spans = build_eval_set({r}, {{1, 2}}, -3, 0, 4);
  REQUIRE(spans.series[0].points.size() == 2);  // {7,8} and {8,9}
  CHECK(spans.series[0].points.front().t == 6);

  CHECK_THROWS_AS(build_eval_set({r}, {{1, 1}}, 0, 0, 0), ConfigError);
  CHECK_THROWS_AS(build_eval_set({r}, {{1, 1}}, 5, 2, 4), DataError);
  CHECK_THROWS_AS(build_eval_set({r}, {{1, 1}}, 0, 11, 4), DataError);
  CHECK_THROWS_AS(build_eval_set({r}, {}, 0, 0, 4), ConfigError);
}

TEST_CASE("wql worked example and input checks") {
  SeriesRecord r = make_record("A", {1, 2});
  const EvalSet eval = build_eval_set({r}, {{1, 1}}, 0, 0, 4);

  ForecastGrid grid;
  grid.quantiles = {0.5};
  grid.horizons = {{1, 1}};
  SeriesForecast f;
  f.series_id = "A";
  f.t_begin = 0;
  f.t_count = 1;
  f.values = {1.0};
  grid.series.push_back(f);

  // QL(2, 1, .5) = .5, demand sum 2
  CHECK(wql(eval, grid, 0.5, MetricScope{}) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS_AS(wql(eval, grid, 0.9, MetricScope{}), ConfigError);  // quantile not in grid

  ForecastGrid missing = grid;
  missing.series[0].series_id = "B";
  CHECK_THROWS_AS(wql(eval, missing, 0.5, MetricScope{}), DataError);

  CHECK(relative_wql(2.0, 4.0) == 0.5);
  CHECK_THROWS_AS(relative_wql(1.0, 0.0), DataError);
}

TEST_CASE("wql is invariant under rescaling demand and forecasts") {
  Rng rng(404);
  const auto records = spade::test::random_corpus(rng, 4, 18);
  const std::vector<HorizonSpec> hs = {{1, 1}, {2, 2}};
  const ForecastGrid grid = spade::test::random_grid(rng, records, hs, {0.5, 0.9});
  const EvalSet eval = build_eval_set(records, hs, 0, 0, 3);

  std::vector<SeriesRecord> scaled = records;
  for (SeriesRecord& r : scaled)
    for (double& v : r.demand) v *= 37.0;
  ForecastGrid scaled_grid = grid;
  for (SeriesForecast& f : scaled_grid.series)
    for (double& v : f.values) v *= 37.0;
  const EvalSet scaled_eval = build_eval_set(scaled, hs, 0, 0, 3);

  for (double q : {0.5, 0.9}) {
    const double a = wql(eval, grid, q, MetricScope{});
    const double b = wql(scaled_eval, scaled_grid, q, MetricScope{});
    CHECK(spade::test::close(a, b, 1e-12, 1e-12));
  }
}

TEST_CASE("wql matches the brute force oracle on random corpora") {
  const std::vector<std::pair<MetricScope, OracleScope>> scopes = {
      {MetricScope{SeriesScope::All, HorizonScope::All}, {false, OracleScope::kAll}},
      {MetricScope{SeriesScope::PeakSeries, HorizonScope::All}, {true, OracleScope::kAll}},
      {MetricScope{SeriesScope::All, HorizonScope::Peak}, {false, OracleScope::kPeak}},
      {MetricScope{SeriesScope::All, HorizonScope::PostPeak}, {false, OracleScope::kPostPeak}},
      {MetricScope{SeriesScope::PeakSeries, HorizonScope::Peak}, {true, OracleScope::kPeak}},
  };
  int compared = 0;
  int empty = 0;
  for (int rep = 0; rep < 100; ++rep) {
    Rng rng(9000 + static_cast<std::uint64_t>(rep));
    const auto records = spade::test::random_corpus(rng, 5, 20);
    const auto hs = spade::test::random_horizons(rng, 3);
    const ForecastGrid grid = spade::test::random_grid(rng, records, hs, {0.5, 0.9});
    const int W = 1 + static_cast<int>(rng.below(4));
    const int begin = rep % 2 == 0 ? 0 : -6;  // alternate full range and suffix
    const EvalSet eval = build_eval_set(records, hs, begin, 0, W);

    for (const auto& [scope, oscope] : scopes) {
      for (double q : {0.5, 0.9}) {
        const auto expect = oracle_wql(records, grid, hs, q, oscope, begin, 0, W);
        if (!expect) {
          CHECK_THROWS_AS(wql(eval, grid, q, scope), DataError);
          ++empty;
        } else {
          CHECK(spade::test::close(wql(eval, grid, q, scope), *expect, 1e-12, 1e-12));
          ++compared;
        }
      }
    }
    // the two convenience wrappers pick the documented scopes
    const auto pe = oracle_wql(records, grid, hs, 0.9, {true, OracleScope::kPeak}, begin, 0, W);
    if (pe) CHECK(spade::test::close(wql_pe(eval, grid, 0.9), *pe, 1e-12, 1e-12));
    const auto ppe = oracle_wql(records, grid, hs, 0.9, {false, OracleScope::kPostPeak}, begin, 0, W);
    if (ppe) CHECK(spade::test::close(wql_ppe(eval, grid, 0.9), *ppe, 1e-12, 1e-12));
  }
  CHECK(compared > 400);  // the corpora genuinely exercised the scopes
  CHECK(empty > 0);       // and some scopes came up empty along the way
}

TEST_CASE("peak and post-peak points partition cleanly") {
  Rng rng(515);
  for (int rep = 0; rep < 30; ++rep) {
    const auto records = spade::test::random_corpus(rng, 4, 20, 0.25);
    const EvalSet eval = build_eval_set(records, {{1, 1}, {2, 1}}, 0, 0, 3);
    for (const EvalSeries& es : eval.series) {
      for (const EvalPoint& p : es.points) {
        CHECK(!(p.is_peak && p.is_post_peak));
      }
    }
  }
}

TEST_CASE("wql ignores record order") {
  Rng rng(626);
  const auto records = spade::test::random_corpus(rng, 5, 16, 0.3);
  const auto hs = std::vector<HorizonSpec>{{1, 1}};
  const ForecastGrid grid = spade::test::random_grid(rng, records, hs, {0.5});

  std::vector<SeriesRecord> reversed(records.rbegin(), records.rend());
  const EvalSet a = build_eval_set(records, hs, 0, 0, 2);
  const EvalSet b = build_eval_set(reversed, hs, 0, 0, 2);
  CHECK(spade::test::close(wql(a, grid, 0.5, MetricScope{}), wql(b, grid, 0.5, MetricScope{}),
                           1e-12, 1e-12));
}

TEST_CASE("empty scopes fail loudly with the scope name") {
  Rng rng(1);
  SeriesRecord clean = make_record("A", {1, 2, 3, 4, 5, 6});
  const EvalSet eval = build_eval_set({clean}, {{1, 1}}, 0, 0, 4);
  ForecastGrid grid = spade::test::random_grid(rng, {clean}, {{1, 1}}, {0.5, 0.9});
  CHECK_THROWS_WITH_AS(wql_pe(eval, grid, 0.5), doctest::Contains("peak"), DataError);
  CHECK_THROWS_WITH_AS(wql_ppe(eval, grid, 0.5), doctest::Contains("post_peak"), DataError);

  // zero demand in scope is rejected rather than dividing by zero
  SeriesRecord zeros = make_record("Z", {0, 0, 0, 0});
  const EvalSet zeval = build_eval_set({zeros}, {{1, 1}}, 0, 0, 4);
  const ForecastGrid zgrid = spade::test::random_grid(rng, {zeros}, {{1, 1}}, {0.5});
  CHECK_THROWS_WITH_AS(wql(zeval, zgrid, 0.5, MetricScope{}), doctest::Contains("zero"), DataError);
}

TEST_CASE("ablation grid aggregates per-seed metrics against the control") {
  SynthConfig sc;
  sc.n_series = 6;
  sc.periods = 30;
  const auto corpus = contaminate(synthesize_corpus(sc), 0.08, 12).records;

  AblationConfig ac;
  ac.variants = {Variant::Original, Variant::MaskedConvOnly};
  ac.seeds = {1, 2};
  ac.model.variant = Variant::Full;  // per-cell override decides what runs
  ac.model.conv_layers = 2;
  ac.model.conv_filters = 3;
  ac.model.kernel_size = 3;
  ac.model.static_hidden = 3;
  ac.model.future_hidden = 3;
  ac.model.agnostic_hidden = 6;
  ac.model.specific_hidden = 3;
  ac.model.attention_dim = 4;
  ac.model.attention_heads = 2;
  ac.model.horizons = {{1, 1}};
  ac.train.epochs = 1;
  ac.train.context_length = 6;
  ac.train.validation_periods = 6;
  ac.ppe_window = 3;

  const MetricReport report = ablation_grid(corpus, ac);
  CHECK(report.variants == ac.variants);
  CHECK(report.seeds == ac.seeds);
  REQUIRE(report.cells.size() == 2);

  for (Variant v : ac.variants) {
    const auto& cells = report.cells.at(v);
    REQUIRE(cells.size() == 6);  // 3 scopes x 2 quantiles
    for (const auto& [key, cell] : cells) {
      REQUIRE(cell.per_seed.size() == 2);
      const double mean = (cell.per_seed[0] + cell.per_seed[1]) / 2.0;
      CHECK(cell.mean == doctest::Approx(mean).epsilon(1e-12));
      double var = 0.0;
      for (double x : cell.per_seed) var += (x - mean) * (x - mean);
      const double sd = std::sqrt(var / 1.0);
      CHECK(cell.ci_half_width == doctest::Approx(1.96 * sd / std::sqrt(2.0)).epsilon(1e-9));
    }
  }

  const MetricKey k50{HorizonScope::All, 0.5};
  const double omean = report.cells.at(Variant::Original).at(k50).mean;
  const double mmean = report.cells.at(Variant::MaskedConvOnly).at(k50).mean;
  CHECK(report.cells.at(Variant::Original).at(k50).diff_vs_original_pct == 0.0);
  CHECK(report.cells.at(Variant::MaskedConvOnly).at(k50).diff_vs_original_pct ==
        doctest::Approx((mmean / omean - 1.0) * 100.0).epsilon(1e-9));

  // worker pool scheduling must not change any number
  AblationConfig threaded = ac;
  threaded.jobs = 2;
  const MetricReport again = ablation_grid(corpus, threaded);
  for (Variant v : ac.variants) {
    const auto& a = report.cells.at(v);
    const auto& b = again.cells.at(v);
    for (const auto& [key, cell] : a) {
      CHECK(b.at(key).per_seed == cell.per_seed);
      CHECK(b.at(key).mean == cell.mean);
    }
  }

  AblationConfig no_control = ac;
  no_control.variants = {Variant::MaskedConvOnly};
  CHECK_THROWS_AS(ablation_grid(corpus, no_control), ConfigError);
  AblationConfig no_seeds = ac;
  no_seeds.seeds = {};
  CHECK_THROWS_AS(ablation_grid(corpus, no_seeds), ConfigError);
}

}  // TEST_SUITE
