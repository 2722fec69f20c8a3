#include "spade/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <thread>

#include "spade/errors.hpp"
#include "spade/training.hpp"

namespace spade {

std::string MetricScope::name() const {
  std::string s = series == SeriesScope::All ? "all" : "peak_series";
  switch (horizons) {
    case HorizonScope::All: return s + "/all";
    case HorizonScope::Peak: return s + "/peak";
    case HorizonScope::PostPeak: return s + "/post_peak";
  }
  throw ConfigError("unknown horizon scope");
}

EvalSet build_eval_set(const std::vector<SeriesRecord>& records,
                       const std::vector<HorizonSpec>& horizons, int period_begin, int period_end,
                       int ppe_window) {
  if (horizons.empty()) throw ConfigError("evaluation needs at least one horizon");
  if (ppe_window < 1) throw ConfigError("ppe_window must be >= 1, got " + std::to_string(ppe_window));
  EvalSet eval;
  eval.horizons = horizons;
  eval.ppe_window = ppe_window;
  const int H = static_cast<int>(horizons.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const SeriesRecord& rec = records[i];
    const int T = rec.periods();
    const int begin = period_begin < 0 ? T + period_begin : period_begin;
    const int end = period_end <= 0 ? T + period_end : period_end;
    if (begin < 0 || begin >= end || end > T) {
      throw DataError("evaluation range [" + std::to_string(begin) + ", " + std::to_string(end) +
                      ") invalid for series " + rec.series_id + " with " + std::to_string(T) +
                      " periods");
    }

    // post-peak periods: the ppe_window periods after each maximal d=1 run,
    // excluding periods that are themselves peaks
    std::vector<char> is_ppe_period(static_cast<std::size_t>(T), 0);
    for (int t = 0; t < T; ++t) {
      const bool run_end = rec.peak_indicator[static_cast<std::size_t>(t)] == 1 &&
                           (t + 1 == T || rec.peak_indicator[static_cast<std::size_t>(t + 1)] == 0);
      if (!run_end) continue;
      for (int u = t + 1; u <= t + ppe_window && u < T; ++u) {
        if (rec.peak_indicator[static_cast<std::size_t>(u)] == 0) is_ppe_period[static_cast<std::size_t>(u)] = 1;
      }
    }

    EvalSeries es;
    es.record_index = static_cast<int>(i);
    es.series_id = rec.series_id;
    es.in_peak_set = std::any_of(rec.peak_indicator.begin(), rec.peak_indicator.end(),
                                 [](int d) { return d == 1; });
    for (int t = 0; t < T; ++t) {
      for (int h = 0; h < H; ++h) {
        const HorizonSpec& spec = horizons[static_cast<std::size_t>(h)];
        const int w_begin = t + spec.lead;
        const int w_end = t + spec.end_offset();
        if (w_begin < begin || w_end > end) continue;  // window must sit inside the range
        EvalPoint p;
        p.t = t;
        p.h = h;
        p.target = horizon_target(rec, t, spec);
        for (int u = w_begin; u < w_end; ++u) {
          if (rec.peak_indicator[static_cast<std::size_t>(u)] == 1) p.is_peak = true;
          if (is_ppe_period[static_cast<std::size_t>(u)]) p.is_post_peak = true;
        }
        if (p.is_peak) p.is_post_peak = false;  // peak wins over post-peak
        es.points.push_back(p);
      }
    }
    eval.series.push_back(std::move(es));
  }
  return eval;
}

namespace {

bool point_in_scope(const EvalSeries& series, const EvalPoint& p, const MetricScope& scope) {
  if (scope.series == SeriesScope::PeakSeries && !series.in_peak_set) return false;
  switch (scope.horizons) {
    case HorizonScope::All: return true;
    case HorizonScope::Peak: return p.is_peak;
    case HorizonScope::PostPeak: return p.is_post_peak;
  }
  return false;
}

int quantile_index(const ForecastGrid& grid, double q) {
  for (std::size_t i = 0; i < grid.quantiles.size(); ++i)
    if (grid.quantiles[i] == q) return static_cast<int>(i);
  throw ConfigError("quantile " + std::to_string(q) + " is not in the forecast grid");
}

}  // namespace

double wql(const EvalSet& eval, const ForecastGrid& grid, double q, const MetricScope& scope) {
  const int qi = quantile_index(grid, q);
  double loss_sum = 0.0;
  double demand_sum = 0.0;
  std::int64_t n = 0;
  for (const EvalSeries& es : eval.series) {
    const SeriesForecast* sf = grid.find(es.series_id);
    if (!sf) throw DataError("forecast grid is missing series " + es.series_id);
    for (const EvalPoint& p : es.points) {
      if (!point_in_scope(es, p, scope)) continue;
      const double y_hat = sf->at(p.t, p.h, qi, static_cast<int>(grid.horizons.size()),
                                  static_cast<int>(grid.quantiles.size()));
      loss_sum += quantile_loss(p.target, y_hat, q);
      demand_sum += p.target;
      ++n;
    }
  }
  if (n == 0) throw DataError("metric scope " + scope.name() + " matched no (t, h) pairs");
  if (demand_sum <= 0.0) {
    throw DataError("metric scope " + scope.name() + " has zero total demand; WQL undefined");
  }
  return loss_sum / demand_sum;
}

double wql_pe(const EvalSet& eval, const ForecastGrid& grid, double q) {
  return wql(eval, grid, q, MetricScope{SeriesScope::PeakSeries, HorizonScope::Peak});
}

double wql_ppe(const EvalSet& eval, const ForecastGrid& grid, double q) {
  return wql(eval, grid, q, MetricScope{SeriesScope::All, HorizonScope::PostPeak});
}

double relative_wql(double candidate, double reference) {
  if (!(reference > 0.0)) throw DataError("relative WQL needs a positive reference");
  return candidate / reference;
}

MetricReport ablation_grid(const std::vector<SeriesRecord>& dataset, const AblationConfig& config) {
  if (config.variants.empty()) throw ConfigError("ablation needs at least one variant");
  if (config.seeds.empty()) throw ConfigError("ablation needs at least one seed");
  if (std::find(config.variants.begin(), config.variants.end(), Variant::Original) ==
      config.variants.end()) {
    throw ConfigError("ablation requires the original control variant");
  }
  config.model.validate();
  config.train.validate();

  MetricReport report;
  report.variants = config.variants;
  report.seeds = config.seeds;
  report.ppe_window = config.ppe_window;
  report.quantiles = config.model.quantiles;

  const EvalSet eval = build_eval_set(dataset, config.model.horizons,
                                      -config.train.validation_periods, 0, config.ppe_window);

  struct Cell {
    Variant variant;
    std::uint64_t seed;
    // scope -> quantile -> value
    std::map<MetricKey, double> values;
  };
  std::vector<Cell> cells;
  for (Variant v : config.variants)
    for (std::uint64_t s : config.seeds) cells.push_back(Cell{v, s, {}});

  auto run_cell = [&](Cell& cell) {
    ModelConfig mc = config.model;
    mc.variant = cell.variant;
    TrainConfig tc = config.train;
    tc.seed = cell.seed;
    TrainResult result = train(dataset, mc, tc);
    ForecastGrid grid = result.model.forward(dataset);
    for (double q : config.model.quantiles) {
      cell.values[MetricKey{HorizonScope::All, q}] = wql(eval, grid, q, MetricScope{});
      cell.values[MetricKey{HorizonScope::Peak, q}] = wql_pe(eval, grid, q);
      cell.values[MetricKey{HorizonScope::PostPeak, q}] = wql_ppe(eval, grid, q);
    }
  };

  const int jobs = std::max(1, config.jobs);
  if (jobs == 1) {
    for (Cell& cell : cells) run_cell(cell);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::exception_ptr failure;
    auto worker = [&]() {
      for (;;) {
        std::size_t mine;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (failure || next >= cells.size()) return;
          mine = next++;
        }
        try {
          run_cell(cells[mine]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> threads;
    const int n_threads = std::min<int>(jobs, static_cast<int>(cells.size()));
    threads.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  // aggregation order is fixed by the (variant, seed) declaration order
  for (Variant v : config.variants) {
    std::map<MetricKey, MetricCell>& slot = report.cells[v];
    for (const Cell& cell : cells) {
      if (cell.variant != v) continue;
      for (const auto& [key, value] : cell.values) slot[key].per_seed.push_back(value);
    }
    for (auto& [key, mc] : slot) {
      const std::vector<double>& xs = mc.per_seed;
      double mean = 0.0;
      for (double x : xs) mean += x;
      mean /= static_cast<double>(xs.size());
      double var = 0.0;
      if (xs.size() > 1) {
        for (double x : xs) var += (x - mean) * (x - mean);
        var /= static_cast<double>(xs.size() - 1);
      }
      mc.mean = mean;
      mc.ci_half_width = 1.96 * std::sqrt(var) / std::sqrt(static_cast<double>(xs.size()));
    }
  }
  for (auto& [variant, slot] : report.cells) {
    for (auto& [key, mc] : slot) {
      const MetricCell& control = report.cells.at(Variant::Original).at(key);
      mc.diff_vs_original_pct =
          variant == Variant::Original || control.mean == 0.0
              ? 0.0
              : 100.0 * (mc.mean - control.mean) / control.mean;
    }
  }
  return report;
}

}  // namespace spade
