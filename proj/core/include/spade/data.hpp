#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spade/tensor.hpp"

namespace spade {

// A forecast target aggregates demand over `span` periods starting `lead`
// periods after the forecast-creation time.
struct HorizonSpec {
  int lead = 1;
  int span = 1;

  int end_offset() const { return lead + span; }  // first period past the window
  bool operator==(const HorizonSpec&) const = default;
};

// One time series: demand history, the causal peak-event indicator d,
// static features, and per-period known covariates (e.g. seasonal phase).
// Horizon-indexed views (targets, future tensor, peak mask) are derived
// from these on demand for a given horizon set.
struct SeriesRecord {
  std::string series_id;
  std::vector<double> demand;
  std::vector<int> peak_indicator;
  std::vector<double> static_features;           // leading entry is an intercept
  std::vector<std::string> covariate_names;
  std::vector<std::vector<double>> covariates;   // [channel][period]

  int periods() const { return static_cast<int>(demand.size()); }
};

struct PeakMask {
  std::vector<int> history;          // length T, history[t] = d_t
  Tensor horizon;                    // [T x H], 1 if the target window overlaps a peak
};

struct CsvSchema {
  std::string series_col = "series_id";
  std::string time_col = "timestamp";
  std::string demand_col = "demand";
  std::string indicator_col = "peak_indicator";
  std::string static_prefix = "static_";
  std::string future_prefix = "future_";
};

// Reads a fixed-frequency monthly corpus. Rows are grouped by series id,
// sorted by timestamp; duplicate or gapped timestamps are rejected.
std::vector<SeriesRecord> load_csv(const std::string& path, const CsvSchema& schema = {});
void save_csv(const std::string& path, const std::vector<SeriesRecord>& records,
              int start_year, int start_month, const CsvSchema& schema = {});

PeakMask build_peak_mask(const SeriesRecord& record, const std::vector<HorizonSpec>& horizons);

// Replaces masked columns with the most recent earlier unmasked column.
// Leading masked columns, which have no earlier unmasked observation, are
// filled with zeros.
Tensor forward_fill(const Tensor& past, const std::vector<int>& history_mask);
std::vector<double> forward_fill(const std::vector<double>& series,
                                 const std::vector<int>& history_mask);

struct ContaminationResult {
  std::vector<SeriesRecord> records;
  std::vector<std::vector<int>> injected;  // per series, injected period indices
};

// Injects max(1, round(rate*T)) peaks per series at uniformly chosen
// positions. Each receives additive |N(0, var_i)| noise where var_i is the
// series' sample variance, and becomes a peak-event indicator.
ContaminationResult contaminate(const std::vector<SeriesRecord>& records, double rate,
                                std::uint64_t seed);

struct WindowedSeries {
  int record_index = 0;
  SeriesRecord slice;
  int t_begin = 0;      // first forecast-creation time
  int t_end = 0;        // one past the last
  Tensor targets;       // [(t_end - t_begin) x H]
};

struct SampleBatch {
  std::vector<WindowedSeries> series;
  std::vector<HorizonSpec> horizons;
  int context_length = 0;

  int creation_times() const {
    return series.empty() ? 0 : series.front().t_end - series.front().t_begin;
  }
};

struct WindowConfig {
  int context_length = 24;
  std::vector<HorizonSpec> horizons;
  int batch_size = 32;
  int period_begin = 0;   // records are sliced to [period_begin, period_end)
  int period_end = -1;    // -1: up to each record's end
};

// Splits records into batches of whole-series slices sharing window
// boundaries. Targets are y[t][h] = sum of demand over the horizon window;
// creation times whose windows would run past the slice are excluded.
std::vector<SampleBatch> window(const std::vector<SeriesRecord>& records, const WindowConfig& config);

// Brute-force horizon target, used both by window() and as a convenience.
double horizon_target(const SeriesRecord& record, int t, const HorizonSpec& h);

struct SynthConfig {
  int n_series = 555;
  int periods = 228;
  std::uint64_t seed = 42;
  double level_low = 20.0;
  double level_high = 200.0;
  double season_amplitude = 0.3;
  double noise_sigma = 0.1;   // lognormal sigma; 0 disables noise
};

// Monthly seasonal corpus: level * (1 + a*sin(2*pi*(t+phase)/12)) * lognormal
// noise, deterministically seeded. Static features carry an intercept and
// the log level; one covariate channel carries the month phase.
std::vector<SeriesRecord> synthesize_corpus(const SynthConfig& config);

// Per-(t, h) known-future covariates packed for the model. Row 0 is the
// peak-overlap flag (any d=1 in the target window); remaining rows are the
// per-period covariates averaged over the window. Columns are (t * H + h)
// for t in [0, t_count). Windows past the end of the series are zero.
Tensor future_tensor(const SeriesRecord& record, const std::vector<HorizonSpec>& horizons,
                     int t_count);

// Per-period covariates seen by attention keys and values: row 0 is the
// peak indicator, remaining rows the raw covariate channels.
Tensor history_covariates(const SeriesRecord& record);

SeriesRecord slice_record(const SeriesRecord& record, int begin, int end);

int future_channel_count(const SeriesRecord& record);

}  // namespace spade
