#include "spade/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "spade/errors.hpp"
#include "spade/rng.hpp"

namespace spade {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw NumericError("failed to format double");
  return std::string(buf, ptr);
}

double parse_double(std::string_view s, const std::string& what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw DataError("non-numeric " + what + ": '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

// months since year 0 for a fixed monthly calendar
int parse_month_key(std::string_view ts, const std::string& path) {
  // accepts YYYY-MM or YYYY-MM-DD
  if (ts.size() < 7 || ts[4] != '-') {
    throw DataError(path + ": timestamp '" + std::string(ts) + "' is not an ISO-8601 month or date");
  }
  int year = 0, month = 0;
  auto r1 = std::from_chars(ts.data(), ts.data() + 4, year);
  auto r2 = std::from_chars(ts.data() + 5, ts.data() + 7, month);
  bool day_ok = ts.size() == 7 || (ts.size() == 10 && ts[7] == '-');
  if (r1.ec != std::errc{} || r2.ec != std::errc{} || !day_ok || month < 1 || month > 12) {
    throw DataError(path + ": timestamp '" + std::string(ts) + "' is not an ISO-8601 month or date");
  }
  return year * 12 + (month - 1);
}

std::string format_month(int key) {
  const int year = key / 12;
  const int month = key % 12 + 1;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-01", year, month);
  return buf;
}

}  // namespace

std::vector<SeriesRecord> load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) return {};  // empty file: no series
  const std::vector<std::string> header = split_csv_line(line);

  auto find_col = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw DataError(path + ": missing column '" + name + "'");
  };
  const int c_series = find_col(schema.series_col);
  const int c_time = find_col(schema.time_col);
  const int c_demand = find_col(schema.demand_col);
  const int c_ind = find_col(schema.indicator_col);

  std::vector<int> static_cols;
  std::vector<int> future_cols;
  std::vector<std::string> covariate_names;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].rfind(schema.static_prefix, 0) == 0) static_cols.push_back(static_cast<int>(i));
    if (header[i].rfind(schema.future_prefix, 0) == 0) {
      future_cols.push_back(static_cast<int>(i));
      covariate_names.push_back(header[i].substr(schema.future_prefix.size()));
    }
  }

  struct Row {
    int month = 0;
    double demand = 0.0;
    int indicator = 0;
    std::vector<double> future;
  };
  struct Accum {
    std::vector<Row> rows;
    std::vector<double> statics;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Accum> by_series;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
    }
    const std::string& sid = f[static_cast<std::size_t>(c_series)];
    auto it = by_series.find(sid);
    if (it == by_series.end()) {
      order.push_back(sid);
      it = by_series.emplace(sid, Accum{}).first;
      for (int c : static_cols)
        it->second.statics.push_back(parse_double(f[static_cast<std::size_t>(c)], header[static_cast<std::size_t>(c)]));
    }
    Row row;
    row.month = parse_month_key(f[static_cast<std::size_t>(c_time)], path);
    row.demand = parse_double(f[static_cast<std::size_t>(c_demand)], schema.demand_col);
    if (row.demand < 0.0) {
      throw DataError(path + ":" + std::to_string(line_no) + ": negative demand for series " + sid);
    }
    const double ind = parse_double(f[static_cast<std::size_t>(c_ind)], schema.indicator_col);
    if (ind != 0.0 && ind != 1.0) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + schema.indicator_col +
                      " must be 0 or 1, got " + f[static_cast<std::size_t>(c_ind)]);
    }
    row.indicator = static_cast<int>(ind);
    for (int c : future_cols)
      row.future.push_back(parse_double(f[static_cast<std::size_t>(c)], header[static_cast<std::size_t>(c)]));
    it->second.rows.push_back(std::move(row));
  }

  std::vector<SeriesRecord> records;
  records.reserve(order.size());
  for (const std::string& sid : order) {
    Accum& acc = by_series[sid];
    std::stable_sort(acc.rows.begin(), acc.rows.end(),
                     [](const Row& a, const Row& b) { return a.month < b.month; });
    for (std::size_t i = 1; i < acc.rows.size(); ++i) {
      const int gap = acc.rows[i].month - acc.rows[i - 1].month;
      if (gap == 0) {
        throw DataError(path + ": series " + sid + " has duplicate timestamp " +
                        format_month(acc.rows[i].month));
      }
      if (gap != 1) {
        throw DataError(path + ": series " + sid + " has a gap before " +
                        format_month(acc.rows[i].month) + "; fixed monthly frequency required");
      }
    }
    SeriesRecord rec;
    rec.series_id = sid;
    rec.static_features = acc.statics;
    rec.covariate_names = covariate_names;
    rec.covariates.assign(covariate_names.size(), {});
    for (const Row& row : acc.rows) {
      rec.demand.push_back(row.demand);
      rec.peak_indicator.push_back(row.indicator);
      for (std::size_t ch = 0; ch < covariate_names.size(); ++ch)
        rec.covariates[ch].push_back(row.future[ch]);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_csv(const std::string& path, const std::vector<SeriesRecord>& records, int start_year,
              int start_month, const CsvSchema& schema) {
  if (start_month < 1 || start_month > 12) throw ConfigError("start_month must be in [1, 12]");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  std::size_t n_static = 0;
  for (const SeriesRecord& r : records) n_static = std::max(n_static, r.static_features.size());
  out << schema.series_col << ',' << schema.time_col << ',' << schema.demand_col << ','
      << schema.indicator_col;
  for (std::size_t i = 0; i < n_static; ++i) out << ',' << schema.static_prefix << i;
  if (!records.empty())
    for (const std::string& name : records.front().covariate_names)
      out << ',' << schema.future_prefix << name;
  out << '\n';
  const int base = start_year * 12 + (start_month - 1);
  for (const SeriesRecord& r : records) {
    if (!records.empty() && r.covariate_names != records.front().covariate_names) {
      throw DataError("series " + r.series_id + " has a different covariate set; cannot share one header");
    }
    for (int t = 0; t < r.periods(); ++t) {
      out << r.series_id << ',' << format_month(base + t) << ',' << fmt_double(r.demand[static_cast<std::size_t>(t)])
          << ',' << r.peak_indicator[static_cast<std::size_t>(t)];
      for (std::size_t i = 0; i < n_static; ++i) {
        out << ',' << (i < r.static_features.size() ? fmt_double(r.static_features[i]) : "0");
      }
      for (const auto& ch : r.covariates) out << ',' << fmt_double(ch[static_cast<std::size_t>(t)]);
      out << '\n';
    }
  }
  if (!out) throw DataError("failed while writing " + path);
}

PeakMask build_peak_mask(const SeriesRecord& record, const std::vector<HorizonSpec>& horizons) {
  if (horizons.empty()) throw ConfigError("peak mask needs at least one horizon");
  const int T = record.periods();
  if (static_cast<int>(record.peak_indicator.size()) != T) {
    throw DataError("series " + record.series_id + " peak indicator length " +
                    std::to_string(record.peak_indicator.size()) + " does not match demand length " +
                    std::to_string(T));
  }
  PeakMask mask;
  mask.history = record.peak_indicator;
  const int H = static_cast<int>(horizons.size());
  mask.horizon = Tensor(Shape{T, H});
  for (int t = 0; t < T; ++t) {
    for (int h = 0; h < H; ++h) {
      const HorizonSpec& spec = horizons[static_cast<std::size_t>(h)];
      if (t + spec.end_offset() > T) continue;  // window overruns: stays 0
      int any = 0;
      for (int u = t + spec.lead; u < t + spec.end_offset(); ++u)
        any |= record.peak_indicator[static_cast<std::size_t>(u)];
      mask.horizon.at(t, h) = static_cast<double>(any);
    }
  }
  return mask;
}

std::vector<double> forward_fill(const std::vector<double>& series,
                                 const std::vector<int>& history_mask) {
  if (series.size() != history_mask.size()) {
    throw ShapeError("forward_fill mask length " + std::to_string(history_mask.size()) +
                     " does not match series length " + std::to_string(series.size()));
  }
  std::vector<double> out(series.size(), 0.0);
  double last = 0.0;  // leading masked values fall back to zero
  for (std::size_t t = 0; t < series.size(); ++t) {
    if (history_mask[t] == 0) last = series[t];
    out[t] = last;
  }
  return out;
}

Tensor forward_fill(const Tensor& past, const std::vector<int>& history_mask) {
  if (past.shape.size() != 2) throw ShapeError("forward_fill expects a matrix, got " + shape_str(past.shape));
  const int C = past.rows(), T = past.cols();
  if (static_cast<int>(history_mask.size()) != T) {
    throw ShapeError("forward_fill mask length " + std::to_string(history_mask.size()) +
                     " does not match " + std::to_string(T) + " columns");
  }
  Tensor out(past.shape);
  for (int c = 0; c < C; ++c) {
    double last = 0.0;
    for (int t = 0; t < T; ++t) {
      if (history_mask[static_cast<std::size_t>(t)] == 0) last = past.at(c, t);
      out.at(c, t) = last;
    }
  }
  return out;
}

ContaminationResult contaminate(const std::vector<SeriesRecord>& records, double rate,
                                std::uint64_t seed) {
  if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("contamination rate must lie in (0, 1)");
  ContaminationResult result;
  result.records = records;
  result.injected.resize(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    SeriesRecord& rec = result.records[i];
    const int T = rec.periods();
    if (T < 2) throw DataError("series " + rec.series_id + " needs at least 2 observations to contaminate");
    double mean = 0.0;
    for (double v : rec.demand) mean += v;
    mean /= T;
    double var = 0.0;
    for (double v : rec.demand) var += (v - mean) * (v - mean);
    var /= (T - 1);
    const int count = std::max(1, static_cast<int>(std::llround(rate * T)));
    Rng rng(derive_seed(seed, "contaminate/" + rec.series_id));
    std::vector<int> positions(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) positions[static_cast<std::size_t>(t)] = t;
    rng.shuffle(positions);
    positions.resize(static_cast<std::size_t>(count));
    std::sort(positions.begin(), positions.end());
    for (int p : positions) {
      rec.demand[static_cast<std::size_t>(p)] += std::abs(rng.normal(0.0, std::sqrt(var)));
      rec.peak_indicator[static_cast<std::size_t>(p)] = 1;
    }
    result.injected[i] = std::move(positions);
  }
  return result;
}

double horizon_target(const SeriesRecord& record, int t, const HorizonSpec& h) {
  if (h.lead < 1 || h.span < 1) throw ConfigError("horizon lead and span must be >= 1");
  if (t < 0 || t + h.end_offset() > record.periods()) {
    throw DataError("horizon window [" + std::to_string(t + h.lead) + ", " +
                    std::to_string(t + h.end_offset()) + ") overruns series " + record.series_id);
  }
  double total = 0.0;
  for (int u = t + h.lead; u < t + h.end_offset(); ++u) total += record.demand[static_cast<std::size_t>(u)];
  return total;
}

SeriesRecord slice_record(const SeriesRecord& record, int begin, int end) {
  if (begin < 0 || end > record.periods() || begin >= end) {
    throw DataError("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                    ") out of range for series " + record.series_id + " with " +
                    std::to_string(record.periods()) + " periods");
  }
  SeriesRecord out;
  out.series_id = record.series_id;
  out.demand.assign(record.demand.begin() + begin, record.demand.begin() + end);
  out.peak_indicator.assign(record.peak_indicator.begin() + begin, record.peak_indicator.begin() + end);
  out.static_features = record.static_features;
  out.covariate_names = record.covariate_names;
  for (const auto& ch : record.covariates)
    out.covariates.emplace_back(ch.begin() + begin, ch.begin() + end);
  return out;
}

std::vector<SampleBatch> window(const std::vector<SeriesRecord>& records, const WindowConfig& config) {
  if (config.context_length < 1) throw ConfigError("context_length must be >= 1");
  if (config.horizons.empty()) throw ConfigError("windowing needs at least one horizon");
  if (config.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  int max_end = 0;
  for (const HorizonSpec& h : config.horizons) {
    if (h.lead < 1 || h.span < 1) throw ConfigError("horizon lead and span must be >= 1");
    max_end = std::max(max_end, h.end_offset());
  }
  const int H = static_cast<int>(config.horizons.size());

  // group by shared creation-time range so every batch is rectangular
  std::map<int, std::vector<WindowedSeries>> by_extent;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const SeriesRecord& rec = records[i];
    const int pe = config.period_end < 0 ? rec.periods() : config.period_end;
    if (config.period_begin < 0 || config.period_begin >= pe || pe > rec.periods()) {
      throw DataError("period range [" + std::to_string(config.period_begin) + ", " +
                      std::to_string(pe) + ") invalid for series " + rec.series_id);
    }
    WindowedSeries ws;
    ws.record_index = static_cast<int>(i);
    ws.slice = slice_record(rec, config.period_begin, pe);
    const int T = ws.slice.periods();
    if (T < config.context_length + max_end) {
      throw DataError("series " + rec.series_id + " has " + std::to_string(T) +
                      " periods in range; needs at least " +
                      std::to_string(config.context_length + max_end));
    }
    ws.t_begin = config.context_length - 1;
    ws.t_end = T - max_end + 1;
    const int n = ws.t_end - ws.t_begin;
    ws.targets = Tensor(Shape{n, H});
    for (int k = 0; k < n; ++k)
      for (int h = 0; h < H; ++h)
        ws.targets.at(k, h) = horizon_target(ws.slice, ws.t_begin + k, config.horizons[static_cast<std::size_t>(h)]);
    by_extent[ws.t_end].push_back(std::move(ws));
  }

  std::vector<SampleBatch> batches;
  for (auto& [extent, group] : by_extent) {
    for (std::size_t at = 0; at < group.size(); at += static_cast<std::size_t>(config.batch_size)) {
      SampleBatch batch;
      batch.horizons = config.horizons;
      batch.context_length = config.context_length;
      const std::size_t end = std::min(group.size(), at + static_cast<std::size_t>(config.batch_size));
      for (std::size_t j = at; j < end; ++j) batch.series.push_back(std::move(group[j]));
      batches.push_back(std::move(batch));
    }
  }
  return batches;
}

std::vector<SeriesRecord> synthesize_corpus(const SynthConfig& config) {
  if (config.n_series < 1) throw ConfigError("n_series must be >= 1");
  if (config.periods < 24) throw ConfigError("synthetic corpus needs at least 24 periods");
  if (!(config.level_low > 0.0) || config.level_high < config.level_low) {
    throw ConfigError("synthetic level range must satisfy 0 < low <= high");
  }
  std::vector<SeriesRecord> records;
  records.reserve(static_cast<std::size_t>(config.n_series));
  for (int i = 0; i < config.n_series; ++i) {
    // per-series seeding keeps series i identical across corpus sizes
    Rng rng(derive_seed(config.seed, "synth/series/" + std::to_string(i)));
    const double level = rng.uniform(config.level_low, config.level_high);
    const int phase = static_cast<int>(rng.below(12));
    SeriesRecord rec;
    char sid[16];
    std::snprintf(sid, sizeof(sid), "S%04d", i);
    rec.series_id = sid;
    rec.static_features = {1.0, std::log(level)};
    rec.covariate_names = {"month_phase"};
    rec.covariates.resize(1);
    rec.demand.reserve(static_cast<std::size_t>(config.periods));
    for (int t = 0; t < config.periods; ++t) {
      const int month = (t + phase) % 12;
      double v = level * (1.0 + config.season_amplitude *
                                    std::sin(2.0 * std::numbers::pi * month / 12.0));
      if (config.noise_sigma > 0.0) v *= std::exp(rng.normal(0.0, config.noise_sigma));
      rec.demand.push_back(v);
      rec.peak_indicator.push_back(0);
      rec.covariates[0].push_back(month / 12.0);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

int future_channel_count(const SeriesRecord& record) {
  return 1 + static_cast<int>(record.covariates.size());
}

Tensor future_tensor(const SeriesRecord& record, const std::vector<HorizonSpec>& horizons,
                     int t_count) {
  if (horizons.empty()) throw ConfigError("future tensor needs at least one horizon");
  if (t_count < 1) throw ShapeError("future tensor needs t_count >= 1");
  const int H = static_cast<int>(horizons.size());
  const int T = record.periods();
  const int C = static_cast<int>(record.covariates.size());
  Tensor out(Shape{1 + C, t_count * H});
  for (int t = 0; t < t_count; ++t) {
    for (int h = 0; h < H; ++h) {
      const HorizonSpec& spec = horizons[static_cast<std::size_t>(h)];
      if (t + spec.end_offset() > T) continue;  // window overruns: column stays zero
      const int col = t * H + h;
      int any = 0;
      for (int u = t + spec.lead; u < t + spec.end_offset(); ++u)
        any |= record.peak_indicator[static_cast<std::size_t>(u)];
      out.at(0, col) = static_cast<double>(any);
      for (int ch = 0; ch < C; ++ch) {
        double acc = 0.0;
        for (int u = t + spec.lead; u < t + spec.end_offset(); ++u)
          acc += record.covariates[static_cast<std::size_t>(ch)][static_cast<std::size_t>(u)];
        out.at(1 + ch, col) = acc / spec.span;
      }
    }
  }
  return out;
}

Tensor history_covariates(const SeriesRecord& record) {
  const int T = record.periods();
  const int C = static_cast<int>(record.covariates.size());
  Tensor out(Shape{1 + C, T});
  for (int t = 0; t < T; ++t) out.at(0, t) = static_cast<double>(record.peak_indicator[static_cast<std::size_t>(t)]);
  for (int ch = 0; ch < C; ++ch)
    for (int t = 0; t < T; ++t) out.at(1 + ch, t) = record.covariates[static_cast<std::size_t>(ch)][static_cast<std::size_t>(t)];
  return out;
}

}  // namespace spade
