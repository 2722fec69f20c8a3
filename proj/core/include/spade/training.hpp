#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "spade/data.hpp"
#include "spade/graph.hpp"
#include "spade/model.hpp"

namespace spade {

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 10;
  int batch_size = 32;
  std::uint64_t seed = 42;
  int context_length = 24;
  int validation_periods = 12;

  void validate() const;
};

struct TrainReport {
  std::vector<double> epoch_loss;             // mean pinball per scored term
  std::map<double, double> validation_wql;    // per quantile, overall scope
  double wall_seconds = 0.0;
  std::string checksum;

  std::string to_jsonl() const;  // one JSON record per epoch plus a summary line
};

// q(y - yhat)+ + (1 - q)(yhat - y)+. Plain value form, used by metrics.
double quantile_loss(double y, double y_hat, double q);

// Multi-quantile objective over one batch: the sum over (q, i, t, h) of the
// pinball loss with demand and forecasts normalized by the horizon span.
// `predictions[i]` are the per-horizon output nodes for batch.series[i].
TensorRef objective(Graph& g, const SampleBatch& batch,
                    const std::vector<std::vector<TensorRef>>& predictions,
                    const std::vector<double>& quantiles);

struct TrainResult {
  SpadeModel model;
  TrainReport report;
};

// Seeded Adam training: epochs x shuffled whole-series batches of
// forward -> objective -> backward -> step. Aborts with diagnostics on a
// non-finite loss.
TrainResult train(const std::vector<SeriesRecord>& dataset, const ModelConfig& model_config,
                  const TrainConfig& train_config);

struct HyperGrid {
  std::vector<double> learning_rates{0.001, 0.0001};
  std::vector<int> epochs{10, 20, 30};
};

struct HyperCell {
  TrainConfig config;
  double validation_score = 0.0;  // P50 + P90 overall WQL
};

struct HyperSelection {
  TrainConfig best;
  std::vector<HyperCell> cells;
};

// Trains every grid point on the temporal split and returns the config
// minimizing validation P50+P90 WQL; ties broken by fewer epochs, then
// lower learning rate.
HyperSelection select_hyperparameters(const std::vector<SeriesRecord>& dataset,
                                      const ModelConfig& model_config, const TrainConfig& base,
                                      const HyperGrid& grid);

}  // namespace spade
