#include "cli.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "spade/data.hpp"
#include "spade/errors.hpp"
#include "spade/evaluation.hpp"
#include "spade/model.hpp"
#include "spade/plot.hpp"
#include "spade/report.hpp"
#include "spade/training.hpp"

namespace spade::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw NumericError("failed to format double");
  return std::string(buf, ptr);
}

// flat dotted-key configuration, defaults overridden by file then --set
json default_config() {
  json c = json::object();
  c["seed"] = 42;
  c["jobs"] = 1;
  c["out"] = "out";

  c["io.dataset"] = "";
  c["io.checkpoint"] = "";

  c["data.n_series"] = 555;
  c["data.periods"] = 228;
  c["data.rate"] = 0.03;
  c["data.start_year"] = 1998;
  c["data.start_month"] = 1;
  c["data.level_low"] = 20.0;
  c["data.level_high"] = 200.0;
  c["data.season_amplitude"] = 0.3;
  c["data.noise_sigma"] = 0.1;

  c["model.variant"] = "full";
  c["model.past_channels"] = 1;
  c["model.static_dim"] = -1;         // -1: take from the dataset
  c["model.covariate_channels"] = -1;  // -1: take from the dataset
  c["model.conv_layers"] = 6;
  c["model.conv_filters"] = 8;
  c["model.kernel_size"] = 8;
  c["model.static_hidden"] = 8;
  c["model.future_hidden"] = 12;
  c["model.agnostic_hidden"] = 32;
  c["model.specific_hidden"] = 8;
  c["model.attention_dim"] = 16;
  c["model.attention_heads"] = 4;
  c["model.series_scaling"] = true;
  c["model.quantiles"] = json::array({0.5, 0.9});
  c["model.horizons"] = json::array({json::array({1, 1}), json::array({2, 1}), json::array({3, 1})});

  c["train.learning_rate"] = 1e-3;
  c["train.epochs"] = 10;
  c["train.batch_size"] = 32;
  c["train.context_length"] = 24;
  c["train.validation_periods"] = 12;

  c["eval.ppe_window"] = 4;

  c["ablate.variants"] = json::array({"original", "masked_conv_only", "full"});
  c["ablate.seeds"] = json::array({1, 2, 3, 4, 5});

  c["plot.series"] = "";
  c["plot.lead"] = 1;
  c["plot.width"] = 960;
  c["plot.height"] = 380;
  return c;
}

struct Options {
  std::string config_path;
  std::string out;
  std::vector<std::string> sets;
  bool paper = false;
  bool seed_given = false;
  std::uint64_t seed = 0;
  bool jobs_given = false;
  int jobs = 1;
};

json resolve_config(const Options& opt) {
  json cfg = default_config();
  if (!opt.config_path.empty()) {
    std::ifstream in(opt.config_path);
    if (!in) throw DataError("cannot open config " + opt.config_path);
    json file = json::parse(in, nullptr, false);
    if (file.is_discarded()) throw ConfigError(opt.config_path + " is not valid JSON");
    if (!file.is_object()) throw ConfigError(opt.config_path + " must hold a JSON object");
    for (const auto& [key, value] : file.items()) {
      if (!cfg.contains(key)) throw ConfigError("unknown config key '" + key + "' in " + opt.config_path);
      cfg[key] = value;
    }
  }
  for (const std::string& kv : opt.sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    if (!cfg.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;  // bare strings stay strings
    cfg[key] = value;
  }
  if (!opt.out.empty()) cfg["out"] = opt.out;
  if (opt.seed_given) cfg["seed"] = opt.seed;
  if (opt.jobs_given) cfg["jobs"] = opt.jobs;
  return cfg;
}

int get_int(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw ConfigError(key + " must be an integer");
  }
  return v.get<int>();
}

std::uint64_t get_u64(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw ConfigError(key + " must be an integer");
  }
  const auto signed_value = v.get<std::int64_t>();
  if (signed_value < 0) throw ConfigError(key + " must be non-negative");
  return static_cast<std::uint64_t>(signed_value);
}

double get_double(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  if (!v.is_number()) throw ConfigError(key + " must be a number");
  return v.get<double>();
}

bool get_bool(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  if (!v.is_boolean()) throw ConfigError(key + " must be true or false");
  return v.get<bool>();
}

std::string get_string(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  if (!v.is_string()) throw ConfigError(key + " must be a string");
  return v.get<std::string>();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  for (char c : s) {
    if (c == ',') {
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      item += c;
    }
  }
  if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> get_quantiles(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  std::vector<double> out;
  if (v.is_array()) {
    for (const json& q : v) {
      if (!q.is_number()) throw ConfigError(key + " entries must be numbers");
      out.push_back(q.get<double>());
    }
  } else if (v.is_string()) {
    for (const std::string& item : split_list(v.get<std::string>())) {
      double q = 0.0;
      auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), q);
      if (ec != std::errc{} || ptr != item.data() + item.size()) {
        throw ConfigError(key + ": '" + item + "' is not a number");
      }
      out.push_back(q);
    }
  } else {
    throw ConfigError(key + " must be an array or a comma list");
  }
  return out;
}

std::vector<HorizonSpec> get_horizons(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  std::vector<HorizonSpec> out;
  if (v.is_array()) {
    for (const json& h : v) {
      if (!h.is_array() || h.size() != 2) {
        throw ConfigError(key + " entries must be [lead, span] pairs");
      }
      out.push_back(HorizonSpec{h.at(0).get<int>(), h.at(1).get<int>()});
    }
  } else if (v.is_string()) {
    for (const std::string& item : split_list(v.get<std::string>())) {
      const std::size_t colon = item.find(':');
      if (colon == std::string::npos) {
        throw ConfigError(key + ": '" + item + "' is not lead:span");
      }
      try {
        out.push_back(HorizonSpec{std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1))});
      } catch (const std::exception&) {
        throw ConfigError(key + ": '" + item + "' is not lead:span");
      }
    }
  } else {
    throw ConfigError(key + " must be an array of pairs or a lead:span comma list");
  }
  return out;
}

std::vector<std::string> get_string_list(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  if (v.is_array()) {
    std::vector<std::string> out;
    for (const json& s : v) {
      if (!s.is_string()) throw ConfigError(key + " entries must be strings");
      out.push_back(s.get<std::string>());
    }
    return out;
  }
  if (v.is_string()) return split_list(v.get<std::string>());
  throw ConfigError(key + " must be an array of strings or a comma list");
}

std::vector<std::uint64_t> get_seed_list(const json& cfg, const std::string& key) {
  const json& v = cfg.at(key);
  std::vector<std::uint64_t> out;
  if (v.is_array()) {
    for (const json& s : v) {
      if (!s.is_number_integer() && !s.is_number_unsigned()) {
        throw ConfigError(key + " entries must be integers");
      }
      out.push_back(s.get<std::uint64_t>());
    }
    return out;
  }
  if (v.is_string()) {
    for (const std::string& item : split_list(v.get<std::string>())) {
      std::uint64_t s = 0;
      auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), s);
      if (ec != std::errc{} || ptr != item.data() + item.size()) {
        throw ConfigError(key + ": '" + item + "' is not an integer");
      }
      out.push_back(s);
    }
    return out;
  }
  throw ConfigError(key + " must be an array of integers or a comma list");
}

ModelConfig model_config_from(const json& cfg, bool paper,
                              const std::vector<SeriesRecord>* dataset) {
  ModelConfig mc;
  mc.variant = variant_from_name(get_string(cfg, "model.variant"));
  mc.past_channels = get_int(cfg, "model.past_channels");
  mc.static_dim = get_int(cfg, "model.static_dim");
  mc.covariate_channels = get_int(cfg, "model.covariate_channels");
  if (dataset && !dataset->empty()) {
    if (mc.static_dim < 0) mc.static_dim = static_cast<int>(dataset->front().static_features.size());
    if (mc.covariate_channels < 0) {
      mc.covariate_channels = static_cast<int>(dataset->front().covariates.size());
    }
  }
  if (mc.static_dim < 0 || mc.covariate_channels < 0) {
    throw ConfigError("model.static_dim and model.covariate_channels need explicit values without a dataset");
  }
  mc.conv_layers = get_int(cfg, "model.conv_layers");
  mc.conv_filters = get_int(cfg, "model.conv_filters");
  mc.kernel_size = get_int(cfg, "model.kernel_size");
  mc.static_hidden = get_int(cfg, "model.static_hidden");
  mc.future_hidden = get_int(cfg, "model.future_hidden");
  mc.agnostic_hidden = get_int(cfg, "model.agnostic_hidden");
  mc.specific_hidden = get_int(cfg, "model.specific_hidden");
  mc.attention_dim = get_int(cfg, "model.attention_dim");
  mc.attention_heads = get_int(cfg, "model.attention_heads");
  mc.series_scaling = get_bool(cfg, "model.series_scaling");
  mc.quantiles = get_quantiles(cfg, "model.quantiles");
  mc.horizons = get_horizons(cfg, "model.horizons");
  if (paper) mc = paper_scale(mc);
  mc.validate();
  return mc;
}

TrainConfig train_config_from(const json& cfg) {
  TrainConfig tc;
  tc.learning_rate = get_double(cfg, "train.learning_rate");
  tc.epochs = get_int(cfg, "train.epochs");
  tc.batch_size = get_int(cfg, "train.batch_size");
  tc.seed = get_u64(cfg, "seed");
  tc.context_length = get_int(cfg, "train.context_length");
  tc.validation_periods = get_int(cfg, "train.validation_periods");
  tc.validate();
  return tc;
}

fs::path prepare_out(const json& cfg) {
  const fs::path out = get_string(cfg, "out");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << content;
  if (!f) throw DataError("failed while writing " + path.string());
}

void echo_config(const fs::path& out, const json& cfg, const std::string& command) {
  json echo = cfg;
  echo["command"] = command;
  write_file(out / "config.json", echo.dump(2) + "\n");
}

std::vector<SeriesRecord> load_dataset(const json& cfg) {
  const std::string path = get_string(cfg, "io.dataset");
  if (path.empty()) throw ConfigError("io.dataset must point to a corpus CSV");
  return load_csv(path);
}

int cmd_generate(const json& cfg) {
  SynthConfig sc;
  sc.n_series = get_int(cfg, "data.n_series");
  sc.periods = get_int(cfg, "data.periods");
  sc.seed = get_u64(cfg, "seed");
  sc.level_low = get_double(cfg, "data.level_low");
  sc.level_high = get_double(cfg, "data.level_high");
  sc.season_amplitude = get_double(cfg, "data.season_amplitude");
  sc.noise_sigma = get_double(cfg, "data.noise_sigma");
  const double rate = get_double(cfg, "data.rate");

  std::vector<SeriesRecord> clean = synthesize_corpus(sc);
  ContaminationResult result = contaminate(clean, rate, sc.seed);

  const fs::path out = prepare_out(cfg);
  save_csv((out / "corpus.csv").string(), result.records, get_int(cfg, "data.start_year"),
           get_int(cfg, "data.start_month"));
  json labels = json::object();
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    labels[result.records[i].series_id] = result.injected[i];
  }
  write_file(out / "labels.json", labels.dump(2) + "\n");
  json manifest;
  manifest["corpus"] = "corpus.csv";
  manifest["labels"] = "labels.json";
  manifest["n_series"] = sc.n_series;
  manifest["periods"] = sc.periods;
  manifest["rate"] = rate;
  manifest["seed"] = sc.seed;
  write_file(out / "manifest.json", manifest.dump(2) + "\n");
  echo_config(out, cfg, "generate");
  std::cout << "generated " << result.records.size() << " series x " << sc.periods << " periods -> "
            << (out / "corpus.csv").string() << "\n";
  return 0;
}

int cmd_train(const json& cfg, bool paper) {
  std::vector<SeriesRecord> dataset = load_dataset(cfg);
  const ModelConfig mc = model_config_from(cfg, paper, &dataset);
  const TrainConfig tc = train_config_from(cfg);
  TrainResult result = train(dataset, mc, tc);

  const fs::path out = prepare_out(cfg);
  result.model.save((out / "model.ckpt").string());
  write_file(out / "report.jsonl", result.report.to_jsonl());
  echo_config(out, cfg, "train");
  std::cout << "trained " << variant_name(mc.variant) << " for " << tc.epochs << " epochs in "
            << fmt(result.report.wall_seconds) << "s; checkpoint " << result.report.checksum
            << "\n";
  for (const auto& [q, v] : result.report.validation_wql) {
    std::cout << "validation wql p" << fmt(q * 100.0) << " = " << fmt(v) << "\n";
  }
  return 0;
}

int cmd_evaluate(const json& cfg) {
  std::vector<SeriesRecord> dataset = load_dataset(cfg);
  const std::string ckpt = get_string(cfg, "io.checkpoint");
  if (ckpt.empty()) throw ConfigError("io.checkpoint must point to a trained model");
  SpadeModel model = SpadeModel::load(ckpt);
  const int validation_periods = get_int(cfg, "train.validation_periods");
  const int ppe_window = get_int(cfg, "eval.ppe_window");

  const EvalSet eval = build_eval_set(dataset, model.config().horizons, -validation_periods, 0,
                                      ppe_window);
  const ForecastGrid grid = model.forward(dataset);

  json metrics;
  metrics["variant"] = variant_name(model.variant());
  metrics["ppe_window"] = ppe_window;
  metrics["validation_periods"] = validation_periods;
  std::ostringstream table;
  table << "scope        quantile  wql\n";
  table << "-----------  --------  ----------\n";
  struct Row {
    const char* label;
    MetricScope scope;
  };
  const Row rows[] = {
      {"overall", MetricScope{SeriesScope::All, HorizonScope::All}},
      {"peak", MetricScope{SeriesScope::PeakSeries, HorizonScope::Peak}},
      {"post_peak", MetricScope{SeriesScope::All, HorizonScope::PostPeak}},
  };
  for (const Row& row : rows) {
    json per_q = json::object();
    for (double q : model.config().quantiles) {
      const std::string label = "p" + fmt(std::round(q * 100.0));
      try {
        const double v = wql(eval, grid, q, row.scope);
        per_q[label] = v;
        table << row.label << std::string(13 - std::string(row.label).size(), ' ') << label
              << std::string(10 - label.size(), ' ') << fmt(v) << "\n";
      } catch (const DataError&) {
        // scope matched nothing on this corpus (e.g. no peaks): report null
        per_q[label] = nullptr;
        table << row.label << std::string(13 - std::string(row.label).size(), ' ') << label
              << std::string(10 - label.size(), ' ') << "-\n";
      }
    }
    metrics["scopes"][row.label] = per_q;
  }

  const fs::path out = prepare_out(cfg);
  write_file(out / "metrics.json", metrics.dump(2) + "\n");
  write_file(out / "metrics.txt", table.str());

  std::ostringstream fc;
  fc << "series_id,t,lead,span,quantile,value\n";
  const int n_h = static_cast<int>(grid.horizons.size());
  const int n_q = static_cast<int>(grid.quantiles.size());
  for (const SeriesForecast& sf : grid.series) {
    const SeriesRecord* rec = nullptr;
    for (const SeriesRecord& r : dataset) {
      if (r.series_id == sf.series_id) {
        rec = &r;
        break;
      }
    }
    for (int t = sf.t_begin; t < sf.t_begin + sf.t_count; ++t) {
      for (int h = 0; h < n_h; ++h) {
        if (rec && t + grid.horizons[static_cast<std::size_t>(h)].end_offset() > rec->periods()) {
          continue;  // window overruns: no usable forecast
        }
        for (int qi = 0; qi < n_q; ++qi) {
          fc << sf.series_id << ',' << t << ',' << grid.horizons[static_cast<std::size_t>(h)].lead
             << ',' << grid.horizons[static_cast<std::size_t>(h)].span << ','
             << fmt(grid.quantiles[static_cast<std::size_t>(qi)]) << ','
             << fmt(sf.at(t, h, qi, n_h, n_q)) << "\n";
        }
      }
    }
  }
  write_file(out / "forecasts.csv", fc.str());
  echo_config(out, cfg, "evaluate");
  std::cout << table.str();
  return 0;
}

int cmd_ablate(const json& cfg, bool paper) {
  std::vector<SeriesRecord> dataset = load_dataset(cfg);
  AblationConfig ac;
  ac.model = model_config_from(cfg, paper, &dataset);
  ac.train = train_config_from(cfg);
  ac.ppe_window = get_int(cfg, "eval.ppe_window");
  ac.jobs = get_int(cfg, "jobs");
  ac.seeds = get_seed_list(cfg, "ablate.seeds");
  if (ac.seeds.size() < 2) throw ConfigError("ablation needs at least 2 seeds");
  ac.variants.clear();
  for (const std::string& name : get_string_list(cfg, "ablate.variants")) {
    ac.variants.push_back(variant_from_name(name));
  }

  const MetricReport report = ablation_grid(dataset, ac);
  const fs::path out = prepare_out(cfg);
  write_file(out / "ablation.json", report_json(report));
  const std::string table = report_table(report);
  write_file(out / "ablation.txt", table);
  echo_config(out, cfg, "ablate");
  std::cout << table;
  return 0;
}

int cmd_plot(const json& cfg) {
  std::vector<SeriesRecord> dataset = load_dataset(cfg);
  const std::string ckpt = get_string(cfg, "io.checkpoint");
  if (ckpt.empty()) throw ConfigError("io.checkpoint must point to a trained model");
  SpadeModel model = SpadeModel::load(ckpt);

  std::vector<std::string> wanted;
  const std::string selector = get_string(cfg, "plot.series");
  if (selector.empty()) {
    if (dataset.empty()) throw DataError("dataset has no series to plot");
    wanted.push_back(dataset.front().series_id);
  } else {
    wanted = split_list(selector);
  }

  std::vector<SeriesRecord> selected;
  for (const std::string& sid : wanted) {
    bool found = false;
    for (const SeriesRecord& rec : dataset) {
      if (rec.series_id == sid) {
        selected.push_back(rec);
        found = true;
        break;
      }
    }
    if (!found) throw DataError("dataset has no series '" + sid + "'");
  }

  const ForecastGrid grid = model.forward(selected);
  PlotConfig pc;
  pc.lead = get_int(cfg, "plot.lead");
  pc.width = get_int(cfg, "plot.width");
  pc.height = get_int(cfg, "plot.height");
  const fs::path out = prepare_out(cfg);
  for (const SeriesRecord& rec : selected) {
    write_file(out / (rec.series_id + ".svg"), render_series_svg(rec, grid, pc));
  }
  echo_config(out, cfg, "plot");
  std::cout << "plotted " << selected.size() << " series -> " << out.string() << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"peak-aware multi-horizon quantile forecaster"};
  app.require_subcommand(1);
  app.fallthrough();

  Options opt;
  app.add_option("--config", opt.config_path, "JSON config with flat dotted keys");
  auto* seed_opt = app.add_option("--seed", opt.seed, "Override the run seed");
  app.add_option("--out", opt.out, "Output directory");
  auto* jobs_opt = app.add_option("--jobs", opt.jobs, "Worker pool size for ablation cells");
  app.add_option("--set", opt.sets, "Override one config key, key=value; repeatable");
  app.add_flag("--paper-scale", opt.paper, "Use the reference architecture widths");

  CLI::App* generate = app.add_subcommand("generate", "Synthesize and contaminate a corpus");
  CLI::App* train_cmd = app.add_subcommand("train", "Train one variant on a corpus");
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on the validation split");
  CLI::App* ablate = app.add_subcommand("ablate", "Run the variant x seed ablation grid");
  CLI::App* plot = app.add_subcommand("plot", "Render forecast-vs-actual SVG charts");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  opt.seed_given = seed_opt->count() > 0;
  opt.jobs_given = jobs_opt->count() > 0;

  try {
    const json cfg = resolve_config(opt);
    if (generate->parsed()) return cmd_generate(cfg);
    if (train_cmd->parsed()) return cmd_train(cfg, opt.paper);
    if (evaluate->parsed()) return cmd_evaluate(cfg);
    if (ablate->parsed()) return cmd_ablate(cfg, opt.paper);
    if (plot->parsed()) return cmd_plot(cfg);
    std::cerr << "no command given\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> full;
  full.reserve(args.size() + 1);
  full.push_back("spade");
  for (const std::string& a : args) full.push_back(a);
  std::vector<const char*> argv;
  argv.reserve(full.size());
  for (const std::string& a : full) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace spade::cli
