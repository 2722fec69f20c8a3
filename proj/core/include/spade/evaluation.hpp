#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spade/data.hpp"
#include "spade/model.hpp"
#include "spade/training.hpp"

namespace spade {

enum class SeriesScope { All, PeakSeries };
enum class HorizonScope { All, Peak, PostPeak };

struct MetricScope {
  SeriesScope series = SeriesScope::All;
  HorizonScope horizons = HorizonScope::All;

  std::string name() const;
};

// One scored (creation time, horizon) pair with its target and peak
// classification. A pair is Peak if any period of its target window has
// d = 1; PostPeak if it is not Peak and its window overlaps the ppe_window
// periods following a peak run.
struct EvalPoint {
  int t = 0;
  int h = 0;
  double target = 0.0;
  bool is_peak = false;
  bool is_post_peak = false;
};

struct EvalSeries {
  int record_index = 0;
  std::string series_id;
  bool in_peak_set = false;  // series has any d = 1
  std::vector<EvalPoint> points;
};

struct EvalSet {
  std::vector<EvalSeries> series;
  std::vector<HorizonSpec> horizons;
  int ppe_window = 4;
};

// Scores every (t, h) whose target window lies inside [period_begin,
// period_end). Windows straddling the boundary are skipped. Non-positive
// period_end and negative period_begin count from each record's end, so
// (-12, 0) scores the final 12 periods.
EvalSet build_eval_set(const std::vector<SeriesRecord>& records,
                       const std::vector<HorizonSpec>& horizons, int period_begin,
                       int period_end, int ppe_window);

// Weighted quantile loss: sum of pinball losses divided by sum of demand
// over the scoped (i, t, h) triples. Throws DataError when the scope is
// empty or its demand sums to zero.
double wql(const EvalSet& eval, const ForecastGrid& grid, double q, const MetricScope& scope);

double wql_pe(const EvalSet& eval, const ForecastGrid& grid, double q);
double wql_ppe(const EvalSet& eval, const ForecastGrid& grid, double q);

// candidate / reference; reference must be positive.
double relative_wql(double candidate, double reference);

struct MetricKey {
  HorizonScope scope = HorizonScope::All;
  double quantile = 0.5;
  auto operator<=>(const MetricKey&) const = default;
};

struct MetricCell {
  double mean = 0.0;
  double ci_half_width = 0.0;              // 1.96 * stdev / sqrt(seeds)
  double diff_vs_original_pct = 0.0;       // on seed means; 0 for the control
  std::vector<double> per_seed;
};

struct MetricReport {
  std::vector<Variant> variants;
  std::vector<std::uint64_t> seeds;
  int ppe_window = 4;
  std::vector<double> quantiles;
  std::map<Variant, std::map<MetricKey, MetricCell>> cells;
};

struct AblationConfig {
  std::vector<Variant> variants{Variant::Original, Variant::MaskedConvOnly, Variant::Full};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  ModelConfig model;
  TrainConfig train;
  int ppe_window = 4;
  int jobs = 1;
};

// Trains each (variant, seed) cell, evaluates P50/P90 x {Overall, Peak,
// PostPeak} on the validation split, and aggregates mean, 95% CI and the
// percentage difference vs the Original control. Cells may run on a small
// worker pool; aggregation order is fixed regardless of scheduling.
MetricReport ablation_grid(const std::vector<SeriesRecord>& dataset, const AblationConfig& config);

}  // namespace spade
