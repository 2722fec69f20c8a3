#include "spade/training.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <sstream>

#include "spade/adam.hpp"
#include "spade/errors.hpp"
#include "spade/evaluation.hpp"
#include "spade/rng.hpp"

namespace spade {

namespace {

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw NumericError("failed to format double");
  return std::string(buf, ptr);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (context_length < 1) throw ConfigError("context_length must be >= 1");
  if (validation_periods < 1) throw ConfigError("validation_periods must be >= 1");
}

std::string TrainReport::to_jsonl() const {
  std::ostringstream out;
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    out << "{\"epoch\":" << e << ",\"loss\":" << fmt(epoch_loss[e]) << "}\n";
  }
  out << "{\"validation_wql\":{";
  bool first = true;
  for (const auto& [q, v] : validation_wql) {
    if (!first) out << ',';
    first = false;
    out << '"' << fmt(q) << "\":" << fmt(v);
  }
  // wall_seconds stays out of the file so reruns are byte-identical
  out << "},\"checksum\":\"" << checksum << "\"}\n";
  return out.str();
}

double quantile_loss(double y, double y_hat, double q) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("quantile must lie in (0, 1), got " + std::to_string(q));
  const double diff = y - y_hat;
  return diff > 0.0 ? q * diff : (q - 1.0) * diff;
}

TensorRef objective(Graph& g, const SampleBatch& batch,
                    const std::vector<std::vector<TensorRef>>& predictions,
                    const std::vector<double>& quantiles) {
  if (predictions.size() != batch.series.size()) {
    throw ShapeError("objective got " + std::to_string(predictions.size()) +
                     " prediction sets for " + std::to_string(batch.series.size()) + " series");
  }
  if (quantiles.empty()) throw ConfigError("objective needs at least one quantile");
  const int H = static_cast<int>(batch.horizons.size());
  TensorRef total{-1};
  for (std::size_t i = 0; i < batch.series.size(); ++i) {
    const WindowedSeries& ws = batch.series[i];
    const std::vector<TensorRef>& per_horizon = predictions[i];
    if (static_cast<int>(per_horizon.size()) != H) {
      throw ShapeError("series " + ws.slice.series_id + " has " +
                       std::to_string(per_horizon.size()) + " horizon outputs; batch has " +
                       std::to_string(H) + " horizons");
    }
    const int n = ws.t_end - ws.t_begin;
    std::vector<int> cols(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) cols[static_cast<std::size_t>(k)] = ws.t_begin + k;
    for (int h = 0; h < H; ++h) {
      const Tensor& pred = g.value(per_horizon[static_cast<std::size_t>(h)]);
      if (pred.cols() < ws.t_end) {
        throw ShapeError("series " + ws.slice.series_id + " prediction covers " +
                         std::to_string(pred.cols()) + " creation times; targets need " +
                         std::to_string(ws.t_end));
      }
      Tensor targets(Shape{1, n});
      for (int k = 0; k < n; ++k) targets.values[static_cast<std::size_t>(k)] = ws.targets.at(k, h);
      TensorRef pred_cols = g.gather_cols(per_horizon[static_cast<std::size_t>(h)], cols);
      TensorRef pin = g.pinball(pred_cols, g.constant(std::move(targets)), quantiles);
      // demand and forecast normalized by the horizon span
      TensorRef term = g.sum(g.scale(pin, 1.0 / batch.horizons[static_cast<std::size_t>(h)].span));
      total = total.id < 0 ? term : g.add(total, term);
    }
  }
  if (total.id < 0) throw ShapeError("objective over an empty batch");
  return total;
}

TrainResult train(const std::vector<SeriesRecord>& dataset, const ModelConfig& model_config,
                  const TrainConfig& train_config) {
  const auto start = std::chrono::steady_clock::now();
  model_config.validate();
  train_config.validate();
  if (dataset.empty()) throw DataError("training dataset is empty");
  if (train_config.validation_periods < model_config.max_horizon_end()) {
    throw ConfigError("validation_periods (" + std::to_string(train_config.validation_periods) +
                      ") shorter than the largest horizon window (" +
                      std::to_string(model_config.max_horizon_end()) + ")");
  }

  // temporal split: earliest portion trains, the final stretch validates
  std::vector<SeriesRecord> train_records;
  train_records.reserve(dataset.size());
  for (const SeriesRecord& rec : dataset) {
    const int split = rec.periods() - train_config.validation_periods;
    if (split < 1) {
      throw DataError("series " + rec.series_id + " has no periods left to train after holding out " +
                      std::to_string(train_config.validation_periods));
    }
    train_records.push_back(slice_record(rec, 0, split));
  }

  WindowConfig wc;
  wc.context_length = train_config.context_length;
  wc.horizons = model_config.horizons;
  wc.batch_size = 1;
  std::vector<SampleBatch> per_series = window(train_records, wc);
  std::vector<WindowedSeries> pool;
  pool.reserve(per_series.size());
  for (SampleBatch& sb : per_series)
    for (WindowedSeries& ws : sb.series) pool.push_back(std::move(ws));

  SpadeModel model(model_config, train_config.seed);
  AdamOptimizer opt(model.parameter_ptrs(),
                    AdamConfig{train_config.learning_rate, 0.9, 0.999, 1e-8});

  TrainReport report;
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const int H = static_cast<int>(model_config.horizons.size());
  const int Q = static_cast<int>(model_config.quantiles.size());
  for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(train_config.seed, "epoch/" + std::to_string(epoch)));
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::int64_t terms = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(train_config.batch_size)) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(train_config.batch_size));
      SampleBatch batch;
      batch.horizons = model_config.horizons;
      batch.context_length = train_config.context_length;
      for (std::size_t j = at; j < end; ++j) batch.series.push_back(pool[order[j]]);

      Graph g;
      SpadeModel::Bound bound = model.bind(g);
      std::vector<std::vector<TensorRef>> predictions;
      predictions.reserve(batch.series.size());
      for (const WindowedSeries& ws : batch.series) {
        SpadeModel::SeriesForward fwd = model.forward_series(g, bound, ws.slice, ws.t_end);
        predictions.push_back(fwd.per_horizon);
      }
      TensorRef loss = objective(g, batch, predictions, model_config.quantiles);
      const double loss_value = g.value(loss).values[0];
      if (!std::isfinite(loss_value)) {
        std::string ids;
        for (const WindowedSeries& ws : batch.series) {
          if (!ids.empty()) ids += ", ";
          ids += ws.slice.series_id;
        }
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting " +
                           std::to_string(at) + " (series " + ids + ")");
      }
      opt.zero_grad();
      g.backward(loss);
      opt.step();

      loss_sum += loss_value;
      for (const WindowedSeries& ws : batch.series) {
        terms += static_cast<std::int64_t>(ws.t_end - ws.t_begin) * H * Q;
      }
    }
    report.epoch_loss.push_back(terms > 0 ? loss_sum / static_cast<double>(terms) : 0.0);
  }

  // validation: forecast the full records, score only windows inside the
  // held-out stretch
  EvalSet eval = build_eval_set(dataset, model_config.horizons, -train_config.validation_periods, 0,
                                4);
  ForecastGrid grid = model.forward(dataset);
  for (double q : model_config.quantiles) {
    report.validation_wql[q] = wql(eval, grid, q, MetricScope{});
  }

  report.checksum = model.checksum();
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return TrainResult{std::move(model), std::move(report)};
}

HyperSelection select_hyperparameters(const std::vector<SeriesRecord>& dataset,
                                      const ModelConfig& model_config, const TrainConfig& base,
                                      const HyperGrid& grid) {
  if (grid.learning_rates.empty() || grid.epochs.empty()) {
    throw ConfigError("hyperparameter grid must not be empty");
  }
  HyperSelection sel;
  bool have_best = false;
  double best_score = 0.0;
  for (double lr : grid.learning_rates) {
    for (int ep : grid.epochs) {
      HyperCell cell;
      cell.config = base;
      cell.config.learning_rate = lr;
      cell.config.epochs = ep;
      TrainResult result = train(dataset, model_config, cell.config);
      cell.validation_score = 0.0;
      for (const auto& [q, v] : result.report.validation_wql) cell.validation_score += v;
      sel.cells.push_back(cell);
      const bool better =
          !have_best || cell.validation_score < best_score ||
          (cell.validation_score == best_score &&
           (ep < sel.best.epochs || (ep == sel.best.epochs && lr < sel.best.learning_rate)));
      if (better) {
        sel.best = cell.config;
        best_score = cell.validation_score;
        have_best = true;
      }
    }
  }
  return sel;
}

}  // namespace spade
