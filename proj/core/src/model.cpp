#include "spade/model.hpp"

#include <algorithm>
#include <cmath>

#include "spade/errors.hpp"
#include "spade/rng.hpp"

namespace spade {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Original: return "original";
    case Variant::MaskedConvOnly: return "masked_conv_only";
    case Variant::PeakAttentionOnly: return "peak_attention_only";
    case Variant::Full: return "full";
    case Variant::MqtLike: return "mqt_like";
  }
  throw ConfigError("unknown variant");
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : {Variant::Original, Variant::MaskedConvOnly, Variant::PeakAttentionOnly,
                    Variant::Full, Variant::MqtLike}) {
    if (variant_name(v) == name) return v;
  }
  throw ConfigError("unknown variant '" + name +
                    "'; expected one of original, masked_conv_only, peak_attention_only, full, "
                    "mqt_like");
}

bool variant_fills_peaks(Variant v) {
  return v == Variant::MaskedConvOnly || v == Variant::Full;
}

bool variant_has_attention(Variant v) {
  return v == Variant::PeakAttentionOnly || v == Variant::Full || v == Variant::MqtLike;
}

int ModelConfig::max_horizon_end() const {
  int m = 0;
  for (const HorizonSpec& h : horizons) m = std::max(m, h.end_offset());
  return m;
}

int ModelConfig::min_horizon_end() const {
  int m = horizons.empty() ? 0 : horizons.front().end_offset();
  for (const HorizonSpec& h : horizons) m = std::min(m, h.end_offset());
  return m;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw ConfigError(std::string(what) + " must be >= 1, got " + std::to_string(v));
  };
  positive(past_channels, "past_channels");
  positive(static_dim, "static_dim");
  if (covariate_channels < 0) throw ConfigError("covariate_channels must be >= 0");
  positive(conv_layers, "conv_layers");
  positive(conv_filters, "conv_filters");
  positive(kernel_size, "kernel_size");
  positive(static_hidden, "static_hidden");
  positive(future_hidden, "future_hidden");
  positive(agnostic_hidden, "agnostic_hidden");
  positive(specific_hidden, "specific_hidden");
  positive(attention_dim, "attention_dim");
  positive(attention_heads, "attention_heads");
  if (attention_dim % attention_heads != 0) {
    throw ConfigError("attention_heads (" + std::to_string(attention_heads) +
                      ") must divide attention_dim (" + std::to_string(attention_dim) + ")");
  }
  if (quantiles.empty()) throw ConfigError("quantile set must not be empty");
  for (std::size_t i = 0; i < quantiles.size(); ++i) {
    if (!(quantiles[i] > 0.0 && quantiles[i] < 1.0)) {
      throw ConfigError("quantile must lie in (0, 1), got " + std::to_string(quantiles[i]));
    }
    if (i > 0 && !(quantiles[i] > quantiles[i - 1])) {
      throw ConfigError("quantiles must be strictly increasing");
    }
  }
  if (horizons.empty()) throw ConfigError("horizon set must not be empty");
  for (const HorizonSpec& h : horizons) {
    if (h.lead < 1 || h.span < 1) throw ConfigError("horizon lead and span must be >= 1");
  }
}

ModelConfig paper_scale(ModelConfig config) {
  config.conv_filters = 30;
  config.kernel_size = 32;
  config.static_hidden = 30;
  config.future_hidden = 50;
  config.agnostic_hidden = 100;
  config.specific_hidden = 20;
  config.attention_dim = 32;
  config.attention_heads = 4;
  return config;
}

const SeriesForecast* ForecastGrid::find(const std::string& series_id) const {
  for (const SeriesForecast& s : series)
    if (s.series_id == series_id) return &s;
  return nullptr;
}

double ForecastGrid::at(const std::string& series_id, int t, int h, int q) const {
  const SeriesForecast* s = find(series_id);
  if (!s) throw DataError("no forecast for series " + series_id);
  if (t < s->t_begin || t >= s->t_begin + s->t_count) {
    throw DataError("creation time " + std::to_string(t) + " outside forecast range of series " +
                    series_id);
  }
  return s->at(t, h, q, static_cast<int>(horizons.size()), static_cast<int>(quantiles.size()));
}

SpadeModel::SpadeModel(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  build_parameters(seed);
}

Parameter& SpadeModel::add_param(const std::string& name, Shape shape, std::uint64_t seed,
                                 int fan_in) {
  Tensor t(shape);
  Rng rng(derive_seed(seed, "init/" + name));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.values) v = rng.uniform(-bound, bound);
  params_.emplace_back(name, std::move(t));
  return params_.back();
}

void SpadeModel::build_parameters(std::uint64_t seed) {
  const ModelConfig& c = config_;
  const int Q = static_cast<int>(c.quantiles.size());
  const int H = static_cast<int>(c.horizons.size());
  const int hist_ch = 1 + c.covariate_channels;    // indicator + raw channels
  const int future_ch = 1 + c.covariate_channels;  // peak-overlap flag + window means

  for (int l = 0; l < c.conv_layers; ++l) {
    const int in = l == 0 ? c.past_channels : c.conv_filters;
    const std::string base = "conv/" + std::to_string(l) + "/";
    add_param(base + "w", Shape{c.conv_filters, in, c.kernel_size}, seed, in * c.kernel_size);
    add_param(base + "b", Shape{c.conv_filters, 1}, seed, in * c.kernel_size);
  }
  add_param("static/w", Shape{c.static_hidden, c.static_dim}, seed, c.static_dim);
  add_param("static/b", Shape{c.static_hidden, 1}, seed, c.static_dim);
  add_param("future/w", Shape{c.future_hidden, future_ch}, seed, future_ch);
  add_param("future/b", Shape{c.future_hidden, 1}, seed, future_ch);

  const int din = c.conv_filters + c.static_hidden + c.future_hidden;
  add_param("decoder/agnostic/w", Shape{c.agnostic_hidden, din}, seed, din);
  add_param("decoder/agnostic/b", Shape{c.agnostic_hidden, 1}, seed, din);
  for (int h = 0; h < H; ++h) {
    const std::string base = "decoder/horizon/" + std::to_string(h) + "/";
    add_param(base + "w1", Shape{c.specific_hidden, c.agnostic_hidden}, seed, c.agnostic_hidden);
    add_param(base + "b1", Shape{c.specific_hidden, 1}, seed, c.agnostic_hidden);
    add_param(base + "w2", Shape{Q, c.specific_hidden}, seed, c.specific_hidden);
    add_param(base + "b2", Shape{Q, 1}, seed, c.specific_hidden);
  }

  if (variant_has_attention(c.variant)) {
    const int A = c.attention_dim;
    const int q_in = c.conv_filters + future_ch;
    const int kv_in = c.conv_filters + hist_ch;
    auto mlp = [&](const std::string& base, int in) {
      add_param(base + "w1", Shape{A, in}, seed, in);
      add_param(base + "b1", Shape{A, 1}, seed, in);
      add_param(base + "w2", Shape{A, A}, seed, A);
      add_param(base + "b2", Shape{A, 1}, seed, A);
    };
    mlp("attn/q/", q_in);
    mlp("attn/k/", kv_in);
    mlp("attn/v/", kv_in);
    // biasless on purpose: zero context must map to exactly zero delta
    add_param("attn/delta/w1", Shape{A, A}, seed, A);
    add_param("attn/delta/w2", Shape{Q, A}, seed, A);
  }
}

std::vector<Parameter*> SpadeModel::parameter_ptrs() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (Parameter& p : params_) out.push_back(&p);
  return out;
}

Parameter& SpadeModel::parameter(const std::string& name) {
  for (Parameter& p : params_)
    if (p.name == name) return p;
  throw ConfigError("no parameter named " + name);
}

int SpadeModel::parameter_count() const {
  int total = 0;
  for (const Parameter& p : params_) total += p.size();
  return total;
}

SpadeModel::Bound SpadeModel::bind(Graph& g) const {
  Bound b;
  b.refs.reserve(params_.size());
  // bind() hands out weight nodes; the registry itself stays const, so the
  // cast is confined to this seam
  for (const Parameter& p : params_) b.refs.push_back(g.param(const_cast<Parameter&>(p)));
  return b;
}

namespace {

int param_index(const std::vector<Parameter>& params, const std::string& name) {
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i].name == name) return static_cast<int>(i);
  throw ConfigError("no parameter named " + name);
}

}  // namespace

TensorRef SpadeModel::encode_history(Graph& g, const Bound& b, TensorRef past) const {
  const Tensor& t = g.value(past);
  if (t.rows() != config_.past_channels) {
    throw ShapeError("history input has " + std::to_string(t.rows()) + " channels; model expects " +
                     std::to_string(config_.past_channels));
  }
  TensorRef x = past;
  for (int l = 0; l < config_.conv_layers; ++l) {
    const std::string base = "conv/" + std::to_string(l) + "/";
    const int wi = param_index(params_, base + "w");
    const int bi = param_index(params_, base + "b");
    const int dilation = 1 << l;
    x = g.add_bias(g.conv1d_causal(x, b.refs[static_cast<std::size_t>(wi)], dilation),
                   b.refs[static_cast<std::size_t>(bi)]);
    if (l + 1 < config_.conv_layers) x = g.relu(x);
  }
  return x;
}

TensorRef SpadeModel::encode_static(Graph& g, const Bound& b, TensorRef static_features) const {
  const Tensor& t = g.value(static_features);
  if (t.rows() != config_.static_dim || t.cols() != 1) {
    throw ShapeError("static input " + shape_str(t.shape) + " does not match expected [" +
                     std::to_string(config_.static_dim) + "x1]");
  }
  const int wi = param_index(params_, "static/w");
  const int bi = param_index(params_, "static/b");
  return g.relu(g.add_bias(g.matmul(b.refs[static_cast<std::size_t>(wi)], static_features),
                           b.refs[static_cast<std::size_t>(bi)]));
}

double SpadeModel::series_scale(const SeriesRecord& record, Variant variant) const {
  if (!config_.series_scaling) return 1.0;
  const std::vector<double>* demand = &record.demand;
  std::vector<double> filled;
  if (variant_fills_peaks(variant)) {
    // the scale must not see masked values, or shielding would leak
    filled = forward_fill(record.demand, record.peak_indicator);
    demand = &filled;
  }
  double mean = 0.0;
  for (double v : *demand) mean += v;
  if (!demand->empty()) mean /= static_cast<double>(demand->size());
  return std::max(mean, 1e-6);
}

SpadeModel::SeriesForward SpadeModel::forward_series(Graph& g, const Bound& b,
                                                     const SeriesRecord& record, int t_count) const {
  return forward_series(g, b, record, t_count, config_.variant);
}

SpadeModel::SeriesForward SpadeModel::forward_series(Graph& g, const Bound& b,
                                                     const SeriesRecord& record, int t_count,
                                                     Variant variant) const {
  const ModelConfig& c = config_;
  if (variant_has_attention(variant) && !variant_has_attention(c.variant)) {
    throw ConfigError("model was built without attention parameters; cannot run variant " +
                      variant_name(variant));
  }
  const int T = record.periods();
  const int H = static_cast<int>(c.horizons.size());
  const int Q = static_cast<int>(c.quantiles.size());
  if (t_count < 1 || t_count > T) {
    throw ShapeError("t_count " + std::to_string(t_count) + " invalid for series with " +
                     std::to_string(T) + " periods");
  }
  if (static_cast<int>(record.covariates.size()) != c.covariate_channels) {
    throw ShapeError("series " + record.series_id + " has " +
                     std::to_string(record.covariates.size()) + " covariate channels; model expects " +
                     std::to_string(c.covariate_channels));
  }
  if (static_cast<int>(record.static_features.size()) != c.static_dim) {
    throw ShapeError("series " + record.series_id + " has " +
                     std::to_string(record.static_features.size()) + " static features; model expects " +
                     std::to_string(c.static_dim));
  }
  if (c.past_channels != 1) {
    throw ConfigError("forward_series currently feeds the demand channel only; past_channels must be 1");
  }

  SeriesForward out;
  out.t_count = t_count;
  out.scale = series_scale(record, variant);

  // history input: demand over the full record, scaled, optionally filled
  std::vector<double> past_vals = record.demand;
  for (double& v : past_vals) v /= out.scale;
  if (variant_fills_peaks(variant)) past_vals = forward_fill(past_vals, record.peak_indicator);
  Tensor past(Shape{1, T}, past_vals);
  TensorRef past_ref = g.input(std::move(past), false);
  TensorRef e = encode_history(g, b, past_ref);
  out.history_embedding = e;

  Tensor stat(Shape{c.static_dim, 1}, record.static_features);
  TensorRef e_s = encode_static(g, b, g.input(std::move(stat), false));

  const int TH = t_count * H;
  TensorRef fut = g.constant(future_tensor(record, c.horizons, t_count));

  const int fw = param_index(params_, "future/w");
  const int fb = param_index(params_, "future/b");
  TensorRef fenc = g.relu(g.add_bias(g.matmul(b.refs[static_cast<std::size_t>(fw)], fut),
                                     b.refs[static_cast<std::size_t>(fb)]));

  std::vector<int> t_of_col(static_cast<std::size_t>(TH));
  for (int t = 0; t < t_count; ++t)
    for (int h = 0; h < H; ++h) t_of_col[static_cast<std::size_t>(t * H + h)] = t;
  TensorRef e_cols = g.gather_cols(e, t_of_col);

  TensorRef din = g.concat_rows({e_cols, g.tile_cols(e_s, TH), fenc});
  const int aw = param_index(params_, "decoder/agnostic/w");
  const int ab = param_index(params_, "decoder/agnostic/b");
  TensorRef ag = g.relu(g.add_bias(g.matmul(b.refs[static_cast<std::size_t>(aw)], din),
                                   b.refs[static_cast<std::size_t>(ab)]));

  // optional peak-attention skip connection
  TensorRef delta{-1};
  if (variant_has_attention(variant)) {
    std::vector<int> key_pos;
    if (variant == Variant::MqtLike) {
      key_pos.resize(static_cast<std::size_t>(T));
      for (int t = 0; t < T; ++t) key_pos[static_cast<std::size_t>(t)] = t;
    } else {
      for (int t = 0; t < T; ++t)
        if (record.peak_indicator[static_cast<std::size_t>(t)] != 0) key_pos.push_back(t);
    }
    if (!key_pos.empty()) {
      const int P = static_cast<int>(key_pos.size());
      TensorRef kv_in = g.concat_rows({e, g.constant(history_covariates(record))});
      auto mlp = [&](const std::string& base, TensorRef in) {
        const int w1 = param_index(params_, base + "w1");
        const int b1 = param_index(params_, base + "b1");
        const int w2 = param_index(params_, base + "w2");
        const int b2 = param_index(params_, base + "b2");
        TensorRef hid = g.relu(g.add_bias(g.matmul(b.refs[static_cast<std::size_t>(w1)], in),
                                          b.refs[static_cast<std::size_t>(b1)]));
        return g.add_bias(g.matmul(b.refs[static_cast<std::size_t>(w2)], hid),
                          b.refs[static_cast<std::size_t>(b2)]);
      };
      TensorRef k_full = mlp("attn/k/", kv_in);
      TensorRef v_full = mlp("attn/v/", kv_in);
      out.attention_values = v_full;
      TensorRef k = g.gather_cols(k_full, key_pos);
      TensorRef v = g.gather_cols(v_full, key_pos);
      TensorRef q = mlp("attn/q/", g.concat_rows({e_cols, fut}));

      // queries may use peaks at or before their creation time
      Tensor mask(Shape{TH, P});
      for (int col = 0; col < TH; ++col) {
        const int t = t_of_col[static_cast<std::size_t>(col)];
        for (int j = 0; j < P; ++j)
          if (key_pos[static_cast<std::size_t>(j)] <= t) mask.at(col, j) = 1.0;
      }
      TensorRef mask_ref = g.constant(std::move(mask));

      const int heads = c.attention_heads;
      const int dh = c.attention_dim / heads;
      std::vector<TensorRef> contexts;
      contexts.reserve(static_cast<std::size_t>(heads));
      for (int i = 0; i < heads; ++i) {
        TensorRef qi = g.slice_rows(q, i * dh, dh);
        TensorRef ki = g.slice_rows(k, i * dh, dh);
        TensorRef vi = g.slice_rows(v, i * dh, dh);
        TensorRef logits = g.scale(g.matmul(g.transpose(qi), ki), 1.0 / std::sqrt(static_cast<double>(dh)));
        TensorRef attn = g.softmax_masked(logits, mask_ref);
        contexts.push_back(g.matmul(vi, g.transpose(attn)));
      }
      TensorRef ctx = heads == 1 ? contexts.front() : g.concat_rows(contexts);

      const int dw1 = param_index(params_, "attn/delta/w1");
      const int dw2 = param_index(params_, "attn/delta/w2");
      delta = g.matmul(b.refs[static_cast<std::size_t>(dw2)],
                       g.relu(g.matmul(b.refs[static_cast<std::size_t>(dw1)], ctx)));

      if (variant != Variant::MqtLike) {
        // confine the adjustment to peak-overlapping windows
        const PeakMask pm = build_peak_mask(record, c.horizons);
        Tensor hm(Shape{Q, TH});
        for (int col = 0; col < TH; ++col) {
          const int t = t_of_col[static_cast<std::size_t>(col)];
          const int h = col % H;
          const double m = pm.horizon.at(t, h);
          for (int qi = 0; qi < Q; ++qi) hm.at(qi, col) = m;
        }
        delta = g.mul(delta, g.constant(std::move(hm)));
      }
      out.delta = delta;
    }
  }

  out.per_horizon.reserve(static_cast<std::size_t>(H));
  for (int h = 0; h < H; ++h) {
    std::vector<int> cols(static_cast<std::size_t>(t_count));
    for (int t = 0; t < t_count; ++t) cols[static_cast<std::size_t>(t)] = t * H + h;
    TensorRef agh = g.gather_cols(ag, cols);
    const std::string base = "decoder/horizon/" + std::to_string(h) + "/";
    const int w1 = param_index(params_, base + "w1");
    const int b1 = param_index(params_, base + "b1");
    const int w2 = param_index(params_, base + "w2");
    const int b2 = param_index(params_, base + "b2");
    TensorRef hid = g.relu(g.add_bias(g.matmul(b.refs[static_cast<std::size_t>(w1)], agh),
                                      b.refs[static_cast<std::size_t>(b1)]));
    TensorRef yh = g.add_bias(g.matmul(b.refs[static_cast<std::size_t>(w2)], hid),
                              b.refs[static_cast<std::size_t>(b2)]);
    if (delta.id >= 0) yh = g.add(yh, g.gather_cols(delta, cols));
    if (out.scale != 1.0) yh = g.scale(yh, out.scale);
    out.per_horizon.push_back(yh);
  }
  return out;
}

ForecastGrid SpadeModel::forward(const std::vector<SeriesRecord>& records) const {
  return forward(records, config_.variant);
}

ForecastGrid SpadeModel::forward(const std::vector<SeriesRecord>& records, Variant variant) const {
  ForecastGrid grid;
  grid.quantiles = config_.quantiles;
  grid.horizons = config_.horizons;
  const int H = static_cast<int>(config_.horizons.size());
  const int Q = static_cast<int>(config_.quantiles.size());
  const int min_end = config_.min_horizon_end();
  for (const SeriesRecord& rec : records) {
    const int T = rec.periods();
    if (T < min_end + 1) {
      throw DataError("series " + rec.series_id + " is too short to forecast: " +
                      std::to_string(T) + " periods");
    }
    const int t_count = T - min_end + 1;
    Graph g;
    Bound b = bind(g);
    SeriesForward fwd = forward_series(g, b, rec, t_count, variant);
    SeriesForecast sf;
    sf.series_id = rec.series_id;
    sf.t_begin = 0;
    sf.t_count = t_count;
    sf.values.resize(static_cast<std::size_t>(t_count) * H * Q);
    std::vector<double> buf(static_cast<std::size_t>(Q));
    for (int h = 0; h < H; ++h) {
      const Tensor& yh = g.value(fwd.per_horizon[static_cast<std::size_t>(h)]);
      if (!yh.all_finite()) {
        throw NumericError("non-finite forecast for series " + rec.series_id + " at horizon " +
                           std::to_string(h));
      }
      for (int t = 0; t < t_count; ++t) {
        for (int qi = 0; qi < Q; ++qi) buf[static_cast<std::size_t>(qi)] = yh.at(qi, t);
        std::sort(buf.begin(), buf.end());  // resolve quantile crossings
        for (int qi = 0; qi < Q; ++qi)
          sf.values[(static_cast<std::size_t>(t) * H + h) * Q + qi] = buf[static_cast<std::size_t>(qi)];
      }
    }
    grid.series.push_back(std::move(sf));
  }
  return grid;
}

}  // namespace spade
