#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "spade/data.hpp"
#include "spade/errors.hpp"
#include "spade/rng.hpp"
#include "test_support.hpp"

using namespace spade;
using spade::test::make_record;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("spade_data_" + name);
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("csv round trip preserves every field") {
  std::vector<SeriesRecord> records;
  records.push_back(make_record("A01", {1.5, 0.0, 1.0 / 3.0, 7.25}, {0, 1, 0, 0}));
  records.push_back(make_record("B02", {2.0, 3.0, 4.0, 5.5}, {0, 0, 0, 1}));
  records[1].static_features = {1.0, -0.125};

  const auto path = temp_path("roundtrip.csv");
  save_csv(path.string(), records, 2015, 1);
  const std::vector<SeriesRecord> loaded = load_csv(path.string());

  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].series_id == records[i].series_id);
    CHECK(loaded[i].demand == records[i].demand);  // shortest-repr doubles survive exactly
    CHECK(loaded[i].peak_indicator == records[i].peak_indicator);
    CHECK(loaded[i].static_features == records[i].static_features);
    CHECK(loaded[i].covariate_names == records[i].covariate_names);
    CHECK(loaded[i].covariates == records[i].covariates);
  }
  std::filesystem::remove(path);
}

TEST_CASE("csv loader rejects malformed corpora") {
  const auto path = temp_path("bad.csv");

  write_text(path, "series_id,timestamp,peak_indicator\nA,2015-01-01,0\n");
  CHECK_THROWS_WITH_AS(load_csv(path.string()), doctest::Contains("demand"), DataError);

  write_text(path, "series_id,timestamp,demand,peak_indicator\n"
                   "A,2015-01-01,1,0\nA,2015-01-01,2,0\n");
  CHECK_THROWS_AS(load_csv(path.string()), DataError);  // duplicate month

  write_text(path, "series_id,timestamp,demand,peak_indicator\n"
                   "A,2015-01-01,1,0\nA,2015-03-01,2,0\n");
  CHECK_THROWS_WITH_AS(load_csv(path.string()), doctest::Contains("gap"), DataError);

  write_text(path, "series_id,timestamp,demand,peak_indicator\nA,2015-01-01,-1,0\n");
  CHECK_THROWS_AS(load_csv(path.string()), DataError);  // negative demand

  write_text(path, "series_id,timestamp,demand,peak_indicator\nA,2015-01-01,1,2\n");
  CHECK_THROWS_AS(load_csv(path.string()), DataError);  // indicator not 0/1

  write_text(path, "series_id,timestamp,demand,peak_indicator\nA,2015-01-01,1,0,9\n");
  CHECK_THROWS_AS(load_csv(path.string()), DataError);  // ragged row

  write_text(path, "series_id,timestamp,demand,peak_indicator\nA,not-a-month,1,0\n");
  CHECK_THROWS_AS(load_csv(path.string()), DataError);

  write_text(path, "");
  CHECK(load_csv(path.string()).empty());

  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_csv(path.string()), DataError);  // missing file
}

TEST_CASE("csv loader sorts rows and keeps series in first-appearance order") {
  const auto path = temp_path("shuffled.csv");
  write_text(path, "series_id,timestamp,demand,peak_indicator\n"
                   "B,2015-02-01,20,0\n"
                   "A,2015-02-01,2,1\n"
                   "B,2015-01-01,10,0\n"
                   "A,2015-01-01,1,0\n");
  const auto loaded = load_csv(path.string());
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].series_id == "B");
  CHECK(loaded[0].demand == std::vector<double>{10, 20});
  CHECK(loaded[1].series_id == "A");
  CHECK(loaded[1].peak_indicator == std::vector<int>{0, 1});
  std::filesystem::remove(path);
}

TEST_CASE("forward fill worked examples") {
  CHECK(forward_fill({1, 2, 9, 3}, {0, 0, 1, 0}) == std::vector<double>{1, 2, 2, 3});
  CHECK(forward_fill({9, 9, 1}, {1, 1, 0}) == std::vector<double>{0, 0, 1});
  CHECK(forward_fill({4, 5}, {0, 0}) == std::vector<double>{4, 5});
  CHECK(forward_fill({4, 5}, {1, 1}) == std::vector<double>{0, 0});
  CHECK_THROWS_AS(forward_fill({1.0, 2.0}, {0}), ShapeError);
}

TEST_CASE("forward fill properties hold on 1500 random cases") {
  Rng rng(2024);
  int filled_positions = 0;
  for (int rep = 0; rep < 1500; ++rep) {
    const int T = 1 + static_cast<int>(rng.below(24));
    std::vector<double> x(static_cast<std::size_t>(T));
    std::vector<int> m(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      x[static_cast<std::size_t>(t)] = rng.uniform(-5.0, 5.0);
      m[static_cast<std::size_t>(t)] = rng.uniform() < 0.4 ? 1 : 0;
      filled_positions += m[static_cast<std::size_t>(t)];
    }
    const std::vector<double> y = forward_fill(x, m);
    // exact per-position semantics
    REQUIRE(spade::test::ffill_result_ok(x, m, y));
    // idempotent: filling an already filled series changes nothing
    REQUIRE(forward_fill(y, m) == y);
    // masked values never leak: y must not depend on x at masked positions
    std::vector<double> poisoned = x;
    for (int t = 0; t < T; ++t) {
      if (m[static_cast<std::size_t>(t)] == 1) poisoned[static_cast<std::size_t>(t)] = 1e12;
    }
    REQUIRE(forward_fill(poisoned, m) == y);

    // matrix overload agrees with the vector overload row by row
    Tensor past(Shape{2, T});
    for (int t = 0; t < T; ++t) {
      past.at(0, t) = x[static_cast<std::size_t>(t)];
      past.at(1, t) = -2.0 * x[static_cast<std::size_t>(t)];
    }
    const Tensor filled = forward_fill(past, m);
    for (int t = 0; t < T; ++t) {
      REQUIRE(filled.at(0, t) == y[static_cast<std::size_t>(t)]);
    }
  }
  CHECK(filled_positions > 1000);  // the cases actually exercised masking
}

TEST_CASE("peak mask marks overlapping target windows") {
  SeriesRecord r = make_record("A", {1, 2, 3}, {0, 1, 0});
  const PeakMask m = build_peak_mask(r, {{1, 1}});
  CHECK(m.history == std::vector<int>{0, 1, 0});
  REQUIRE(m.horizon.shape == Shape{3, 1});
  CHECK(m.horizon.values == std::vector<double>{1, 0, 0});

  SeriesRecord r2 = make_record("B", {1, 2, 3, 4}, {0, 0, 1, 0});
  const PeakMask m2 = build_peak_mask(r2, {{1, 2}, {2, 1}});
  // h0 windows: {1,2},{2,3},{3,4}*,{4,5}* (overruns count as no overlap)
  CHECK(m2.horizon.at(0, 0) == 1.0);
  CHECK(m2.horizon.at(1, 0) == 1.0);
  CHECK(m2.horizon.at(2, 0) == 0.0);
  CHECK(m2.horizon.at(3, 0) == 0.0);
  // h1 windows: {2},{3},{4}*,{5}*
  CHECK(m2.horizon.at(0, 1) == 1.0);
  CHECK(m2.horizon.at(1, 1) == 0.0);
  CHECK(m2.horizon.at(2, 1) == 0.0);
}

TEST_CASE("horizon targets sum the window") {
  SeriesRecord r = make_record("A", {1, 2, 3, 4});
  CHECK(horizon_target(r, 0, {1, 1}) == 2.0);
  CHECK(horizon_target(r, 0, {1, 2}) == 5.0);
  CHECK(horizon_target(r, 0, {2, 2}) == 7.0);  // window {2, 3}
  CHECK(horizon_target(r, 2, {1, 1}) == 4.0);
  CHECK_THROWS_AS(horizon_target(r, 3, {1, 1}), DataError);
  CHECK_THROWS_AS(horizon_target(r, -1, {1, 1}), DataError);
}

TEST_CASE("contamination injects the right number of labeled peaks") {
  SynthConfig sc;
  sc.n_series = 4;
  sc.periods = 100;
  std::vector<SeriesRecord> clean = synthesize_corpus(sc);

  const ContaminationResult result = contaminate(clean, 0.03, 7);
  REQUIRE(result.records.size() == clean.size());
  REQUIRE(result.injected.size() == clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const auto& inj = result.injected[i];
    CHECK(inj.size() == 3);  // round(0.03 * 100)
    std::set<int> uniq(inj.begin(), inj.end());
    CHECK(uniq.size() == inj.size());
    CHECK(std::is_sorted(inj.begin(), inj.end()));

    const SeriesRecord& before = clean[i];
    const SeriesRecord& after = result.records[i];
    for (int t = 0; t < before.periods(); ++t) {
      const bool hit = uniq.count(t) > 0;
      CHECK(after.peak_indicator[static_cast<std::size_t>(t)] == (hit ? 1 : 0));
      if (hit) {
        CHECK(after.demand[static_cast<std::size_t>(t)] >=
              before.demand[static_cast<std::size_t>(t)]);  // additive |noise|
      } else {
        CHECK(after.demand[static_cast<std::size_t>(t)] ==
              before.demand[static_cast<std::size_t>(t)]);
      }
    }
  }

  // rates that round to zero peaks still inject one
  sc.periods = 24;
  const auto tiny = contaminate(synthesize_corpus(sc), 0.01, 7);
  for (const auto& inj : tiny.injected) CHECK(inj.size() == 1);

  // same seed, same result; different seed, different positions somewhere
  const ContaminationResult again = contaminate(clean, 0.03, 7);
  CHECK(again.injected == result.injected);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    CHECK(again.records[i].demand == result.records[i].demand);
  }
  CHECK(contaminate(clean, 0.03, 8).injected != result.injected);

  CHECK_THROWS_AS(contaminate(clean, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(contaminate(clean, 1.0, 1), ConfigError);
}

TEST_CASE("contaminating a constant series labels peaks without moving demand") {
  SeriesRecord flat = make_record("F", std::vector<double>(40, 5.0));
  const ContaminationResult result = contaminate({flat}, 0.05, 3);
  CHECK(result.injected[0].size() == 2);
  CHECK(result.records[0].demand == flat.demand);  // sample variance 0 -> |N(0,0)| = 0
  int ones = 0;
  for (int v : result.records[0].peak_indicator) ones += v;
  CHECK(ones == 2);
}

TEST_CASE("windowing matches the brute force oracle") {
  std::vector<SeriesRecord> records;
  records.push_back(make_record("A", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}));
  records.push_back(make_record("B", {2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24}));

  WindowConfig wc;
  wc.context_length = 4;
  wc.horizons = {{1, 1}, {2, 2}};
  wc.batch_size = 8;
  const auto batches = window(records, wc);
  REQUIRE(batches.size() == 1);
  const SampleBatch& b = batches[0];
  REQUIRE(b.series.size() == 2);
  for (const WindowedSeries& ws : b.series) {
    CHECK(ws.t_begin == 3);           // context_length - 1
    CHECK(ws.t_end == 12 - 4 + 1);    // T - max horizon end + 1
    const SeriesRecord& src = records[static_cast<std::size_t>(ws.record_index)];
    REQUIRE(ws.targets.shape == Shape{ws.t_end - ws.t_begin, 2});
    for (int t = ws.t_begin; t < ws.t_end; ++t) {
      for (int h = 0; h < 2; ++h) {
        CHECK(ws.targets.at(t - ws.t_begin, h) ==
              horizon_target(src, t, wc.horizons[static_cast<std::size_t>(h)]));
      }
    }
  }
}

TEST_CASE("windowing batches are rectangular and sized by batch_size") {
  std::vector<SeriesRecord> records;
  for (int i = 0; i < 5; ++i) {
    const int T = i < 3 ? 14 : 18;  // two different series lengths
    std::vector<double> d(static_cast<std::size_t>(T), 1.0 + i);
    records.push_back(make_record("S" + std::to_string(i), std::move(d)));
  }
  WindowConfig wc;
  wc.context_length = 6;
  wc.horizons = {{1, 1}};
  wc.batch_size = 2;
  const auto batches = window(records, wc);
  // 3 series of one extent (batches of 2+1) plus 2 of the other (one batch)
  REQUIRE(batches.size() == 3);
  std::size_t total = 0;
  for (const SampleBatch& b : batches) {
    REQUIRE(!b.series.empty());
    CHECK(b.series.size() <= 2);
    total += b.series.size();
    const int te = b.series.front().t_end;
    for (const WindowedSeries& ws : b.series) CHECK(ws.t_end == te);
  }
  CHECK(total == 5);

  // series shorter than context + max horizon end are an error, by name
  records.push_back(make_record("SHORTY", {1, 2, 3}));
  CHECK_THROWS_WITH_AS(window(records, wc), doctest::Contains("SHORTY"), DataError);
}

TEST_CASE("windowing respects period slicing") {
  SeriesRecord r = make_record("A", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  WindowConfig wc;
  wc.context_length = 3;
  wc.horizons = {{1, 1}};
  wc.period_begin = 0;
  wc.period_end = 6;  // train on the first 6 periods only
  const auto batches = window({r}, wc);
  REQUIRE(batches.size() == 1);
  const WindowedSeries& ws = batches[0].series[0];
  CHECK(ws.slice.periods() == 6);
  CHECK(ws.t_end == 6 - 2 + 1);
  CHECK(ws.targets.at(ws.t_end - 1 - ws.t_begin, 0) == 6.0);  // last target inside the slice
}

TEST_CASE("synthetic corpus is deterministic and prefix-stable") {
  SynthConfig sc;
  sc.n_series = 6;
  sc.periods = 36;
  const auto corpus = synthesize_corpus(sc);
  REQUIRE(corpus.size() == 6);
  for (const SeriesRecord& r : corpus) {
    CHECK(r.periods() == 36);
    CHECK(r.static_features.size() == 2);
    CHECK(r.static_features[0] == 1.0);
    REQUIRE(r.covariates.size() == 1);
    CHECK(r.covariate_names[0] == "month_phase");
    // the phase channel walks the 12-month cycle from a per-series offset
    const double phase0 = r.covariates[0][0];
    CHECK(phase0 >= 0.0);
    CHECK(phase0 < 1.0);
    for (int t = 0; t < r.periods(); ++t) {
      CHECK(r.demand[static_cast<std::size_t>(t)] > 0.0);
      CHECK(r.peak_indicator[static_cast<std::size_t>(t)] == 0);
      const double expected =
          static_cast<double>((static_cast<int>(phase0 * 12.0) + t) % 12) / 12.0;
      CHECK(r.covariates[0][static_cast<std::size_t>(t)] == expected);
    }
    // log level matches the demand scale
    CHECK(std::exp(r.static_features[1]) > 10.0);
    CHECK(std::exp(r.static_features[1]) < 300.0);
  }
  CHECK(corpus[0].series_id == "S0000");
  CHECK(corpus[5].series_id == "S0005");

  const auto again = synthesize_corpus(sc);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(again[i].demand == corpus[i].demand);
  }

  SynthConfig smaller = sc;
  smaller.n_series = 3;
  const auto prefix = synthesize_corpus(smaller);
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    CHECK(prefix[i].demand == corpus[i].demand);  // series i is independent of corpus size
    CHECK(prefix[i].static_features == corpus[i].static_features);
  }

  sc.n_series = 0;
  CHECK_THROWS_AS(synthesize_corpus(sc), ConfigError);
}

TEST_CASE("future tensor packs flags and window means") {
  SeriesRecord r = make_record("A", {1, 2, 3, 4}, {0, 0, 1, 0});
  r.covariates[0] = {0.0, 0.1, 0.2, 0.3};
  const std::vector<HorizonSpec> hs = {{1, 1}, {1, 2}};
  const Tensor f = future_tensor(r, hs, 4);
  REQUIRE(f.shape == Shape{2, 8});
  CHECK(future_channel_count(r) == 2);

  auto col = [&](int t, int h) { return t * 2 + h; };
  CHECK(f.at(0, col(1, 0)) == 1.0);  // window {2} hits the peak
  CHECK(f.at(0, col(0, 0)) == 0.0);
  CHECK(f.at(0, col(1, 1)) == 1.0);  // window {2,3}
  CHECK(f.at(1, col(0, 0)) == 0.1);
  CHECK(f.at(1, col(0, 1)) == doctest::Approx(0.15));
  CHECK(f.at(1, col(2, 0)) == 0.3);
  // overruns are zeroed, flag and covariates alike
  CHECK(f.at(0, col(3, 0)) == 0.0);
  CHECK(f.at(1, col(3, 0)) == 0.0);
  CHECK(f.at(1, col(3, 1)) == 0.0);
}

TEST_CASE("history covariates stack the indicator over the channels") {
  SeriesRecord r = make_record("A", {1, 2, 3}, {0, 1, 0});
  r.covariates[0] = {0.5, 0.6, 0.7};
  const Tensor h = history_covariates(r);
  REQUIRE(h.shape == Shape{2, 3});
  CHECK(h.values == std::vector<double>{0, 1, 0, 0.5, 0.6, 0.7});
}

TEST_CASE("record slicing") {
  SeriesRecord r = make_record("A", {1, 2, 3, 4, 5}, {0, 0, 1, 0, 0});
  const SeriesRecord s = slice_record(r, 1, 4);
  CHECK(s.demand == std::vector<double>{2, 3, 4});
  CHECK(s.peak_indicator == std::vector<int>{0, 1, 0});
  CHECK(s.covariates[0] == std::vector<double>(r.covariates[0].begin() + 1,
                                               r.covariates[0].begin() + 4));
  CHECK(s.static_features == r.static_features);
  CHECK(s.series_id == r.series_id);
  CHECK_THROWS_AS(slice_record(r, -1, 3), DataError);
  CHECK_THROWS_AS(slice_record(r, 3, 2), DataError);
  CHECK_THROWS_AS(slice_record(r, 0, 6), DataError);
}

}  // TEST_SUITE
