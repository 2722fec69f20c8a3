#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spade/data.hpp"
#include "spade/graph.hpp"

namespace spade {

// Architecture variants. Full = masked convolution + peak attention;
// Original = neither. MqtLike approximates an attention-decoder baseline:
// unmasked attention over the whole history, no peak masking.
enum class Variant {
  Original,
  MaskedConvOnly,
  PeakAttentionOnly,
  Full,
  MqtLike,
};

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);
bool variant_fills_peaks(Variant v);
bool variant_has_attention(Variant v);

struct ModelConfig {
  Variant variant = Variant::Full;
  int past_channels = 1;
  int static_dim = 2;          // intercept + log level for synthetic corpora
  int covariate_channels = 1;  // phase channel for synthetic corpora

  int conv_layers = 6;
  int conv_filters = 8;
  int kernel_size = 8;
  int static_hidden = 8;
  int future_hidden = 12;
  int agnostic_hidden = 32;
  int specific_hidden = 8;
  int attention_dim = 16;
  int attention_heads = 4;
  bool series_scaling = true;

  std::vector<double> quantiles{0.5, 0.9};
  std::vector<HorizonSpec> horizons{{1, 1}, {2, 1}, {3, 1}};

  int max_horizon_end() const;
  int min_horizon_end() const;
  void validate() const;
};

// Restores the reference architecture widths (conv filters 30, kernel 32,
// static 30, future 50, decoders 100/20, 4 heads).
ModelConfig paper_scale(ModelConfig config);

// Predicted quantile values indexed by (series, creation time, horizon,
// quantile). Quantiles are sorted per (t, h) at inference so the grid is
// monotone in q.
struct SeriesForecast {
  std::string series_id;
  int t_begin = 0;
  int t_count = 0;
  std::vector<double> values;  // [t][h][q] row-major

  double at(int t, int h, int q, int n_h, int n_q) const {
    return values[(static_cast<std::size_t>(t - t_begin) * n_h + h) * n_q + q];
  }
};

struct ForecastGrid {
  std::vector<double> quantiles;
  std::vector<HorizonSpec> horizons;
  std::vector<SeriesForecast> series;

  const SeriesForecast* find(const std::string& series_id) const;
  double at(const std::string& series_id, int t, int h, int q) const;
};

class SpadeModel {
 public:
  SpadeModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  Variant variant() const { return config_.variant; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter*> parameter_ptrs();
  Parameter& parameter(const std::string& name);
  int parameter_count() const;  // trainable scalar count

  // This model's parameters registered as leaves of a graph, so several
  // series in one graph share the same weight nodes.
  struct Bound {
    std::vector<TensorRef> refs;  // parallel to parameters()
  };
  Bound bind(Graph& g) const;

  // Per-series forward pieces; exposed so tests can probe the internals.
  // `past` must already be scaled and, per variant, forward-filled.
  TensorRef encode_history(Graph& g, const Bound& b, TensorRef past) const;
  TensorRef encode_static(Graph& g, const Bound& b, TensorRef static_features) const;

  struct SeriesForward {
    std::vector<TensorRef> per_horizon;  // each [|Q| x t_count], true scale
    TensorRef delta{-1};                 // [|Q| x (t_count*H)] before horizon gather
    TensorRef attention_values{-1};      // [A x T], peak-attention value vectors
    TensorRef history_embedding{-1};     // [E x T]
    double scale = 1.0;
    int t_count = 0;
  };

  // Builds the forward graph for one record over creation times
  // [0, t_count). Windows running past the series end see zero covariates;
  // callers score only valid (t, h) pairs.
  SeriesForward forward_series(Graph& g, const Bound& b, const SeriesRecord& record,
                               int t_count, Variant variant) const;
  SeriesForward forward_series(Graph& g, const Bound& b, const SeriesRecord& record,
                               int t_count) const;

  // Inference over whole records: runs the graph, sorts quantiles per
  // (t, h), returns forecasts for every creation time whose smallest
  // horizon window fits in the record; (t, h) pairs whose window overruns
  // see zero future covariates, and callers score only valid pairs.
  ForecastGrid forward(const std::vector<SeriesRecord>& records) const;
  ForecastGrid forward(const std::vector<SeriesRecord>& records, Variant variant) const;

  double series_scale(const SeriesRecord& record, Variant variant) const;

  void save(const std::string& path) const;
  static SpadeModel load(const std::string& path);

  // FNV-1a over the little-endian parameter bytes, in registry order.
  std::string checksum() const;

 private:
  void build_parameters(std::uint64_t seed);
  Parameter& add_param(const std::string& name, Shape shape, std::uint64_t seed, int fan_in);

  ModelConfig config_;
  std::vector<Parameter> params_;
};

}  // namespace spade
