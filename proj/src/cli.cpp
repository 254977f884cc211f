#include "meteocast/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "meteocast/cmaes.hpp"
#include "meteocast/data.hpp"
#include "meteocast/errors.hpp"
#include "meteocast/explain.hpp"
#include "meteocast/hash.hpp"
#include "meteocast/power_api.hpp"
#include "meteocast/report.hpp"
#include "meteocast/synth.hpp"
#include "meteocast/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace meteo {

namespace {

std::string hex16(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json config_to_json(const RunConfig& c) {
  return json{
      {"latitude", c.latitude},
      {"longitude", c.longitude},
      {"train_start", c.train_start},
      {"train_end", c.train_end},
      {"test_start", c.test_start},
      {"test_end", c.test_end},
      {"series_csv", c.series_csv},
      {"output_dir", c.output_dir},
      {"endpoint", c.endpoint},
      {"checkpoint", c.checkpoint},
      {"seed", c.seed},
      {"max_gap_hours", c.max_gap_hours},
      {"n_threads", c.n_threads},
      {"hparams",
       {{"n_past", c.hparams.n_past},
        {"n_future", c.hparams.n_future},
        {"learning_rate", c.hparams.learning_rate},
        {"dropout_rate", c.hparams.dropout_rate},
        {"n_bilstm_layers", c.hparams.n_bilstm_layers},
        {"units_per_direction", c.hparams.units_per_direction},
        {"batch_size", c.hparams.batch_size}}},
      {"train",
       {{"max_epochs", c.max_epochs},
        {"patience", c.patience},
        {"validation_fraction", c.validation_fraction}}},
      {"tune",
       {{"budget", c.tune_budget},
        {"epochs", c.tune_epochs},
        {"patience", c.tune_patience},
        {"lambda", c.tune_lambda},
        {"sigma0", c.tune_sigma0}}},
      {"explain", {{"ig_samples", c.ig_samples}, {"ig_steps", c.ig_steps}}},
      {"leads", c.leads},
  };
}

void apply_hparams_json(const json& j, HParams& h) {
  for (const auto& [key, value] : j.items()) {
    if (key == "n_past") h.n_past = value.get<std::size_t>();
    else if (key == "n_future") h.n_future = value.get<std::size_t>();
    else if (key == "learning_rate") h.learning_rate = value.get<double>();
    else if (key == "dropout_rate") h.dropout_rate = value.get<double>();
    else if (key == "n_bilstm_layers") h.n_bilstm_layers = value.get<std::size_t>();
    else if (key == "units_per_direction") h.units_per_direction = value.get<std::size_t>();
    else if (key == "batch_size") h.batch_size = value.get<std::size_t>();
    else throw ConfigError("unknown config key \"hparams." + key + "\"");
  }
}

void apply_config_json(const json& j, RunConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "latitude") c.latitude = value.get<double>();
    else if (key == "longitude") c.longitude = value.get<double>();
    else if (key == "train_start") c.train_start = value.get<std::string>();
    else if (key == "train_end") c.train_end = value.get<std::string>();
    else if (key == "test_start") c.test_start = value.get<std::string>();
    else if (key == "test_end") c.test_end = value.get<std::string>();
    else if (key == "series_csv") c.series_csv = value.get<std::string>();
    else if (key == "output_dir") c.output_dir = value.get<std::string>();
    else if (key == "endpoint") c.endpoint = value.get<std::string>();
    else if (key == "checkpoint") c.checkpoint = value.get<std::string>();
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "max_gap_hours") c.max_gap_hours = value.get<std::size_t>();
    else if (key == "n_threads") c.n_threads = value.get<int>();
    else if (key == "hparams") apply_hparams_json(value, c.hparams);
    else if (key == "train") {
      for (const auto& [k2, v2] : value.items()) {
        if (k2 == "max_epochs") c.max_epochs = v2.get<std::size_t>();
        else if (k2 == "patience") c.patience = v2.get<std::size_t>();
        else if (k2 == "validation_fraction") c.validation_fraction = v2.get<double>();
        else throw ConfigError("unknown config key \"train." + k2 + "\"");
      }
    } else if (key == "tune") {
      for (const auto& [k2, v2] : value.items()) {
        if (k2 == "budget") c.tune_budget = v2.get<std::size_t>();
        else if (k2 == "epochs") c.tune_epochs = v2.get<std::size_t>();
        else if (k2 == "patience") c.tune_patience = v2.get<std::size_t>();
        else if (k2 == "lambda") c.tune_lambda = v2.get<std::size_t>();
        else if (k2 == "sigma0") c.tune_sigma0 = v2.get<double>();
        else throw ConfigError("unknown config key \"tune." + k2 + "\"");
      }
    } else if (key == "explain") {
      for (const auto& [k2, v2] : value.items()) {
        if (k2 == "ig_samples") c.ig_samples = v2.get<std::size_t>();
        else if (k2 == "ig_steps") c.ig_steps = v2.get<std::size_t>();
        else throw ConfigError("unknown config key \"explain." + k2 + "\"");
      }
    } else if (key == "leads") {
      c.leads = value.get<std::vector<int>>();
    } else if (key == "source_config_hash") {
      // Provenance stamp written into best_config.json; informational.
    } else {
      throw ConfigError("unknown config key \"" + key + "\"");
    }
  }
}

struct Paths {
  fs::path out;
  fs::path raw, clean;
  fs::path scalers, wtrain, wtest;
  fs::path ckpt, history;
  fs::path tune_log, best_cfg;
  fs::path metrics, lead_series;
  fs::path attention, imp_overall;
  std::array<fs::path, kNumFeatures> imp_curves;
  fs::path forecast, figures;
};

Paths make_paths(const RunConfig& cfg) {
  Paths p;
  p.out = cfg.output_dir;
  p.raw = p.out / "raw_series.csv";
  p.clean = p.out / "clean_series.csv";
  p.scalers = p.out / "scalers.json";
  p.wtrain = p.out / "windows_train.bin";
  p.wtest = p.out / "windows_test.bin";
  p.ckpt = cfg.checkpoint_path();
  p.history = p.out / "training_history.json";
  p.tune_log = p.out / "tune_log.csv";
  p.best_cfg = p.out / "best_config.json";
  p.metrics = p.out / "metrics.json";
  p.lead_series = p.out / "lead_series.csv";
  p.attention = p.out / "attention_profile.csv";
  p.imp_overall = p.out / "importance_overall.csv";
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    p.imp_curves[f] = p.out / (std::string("importance_") + kFeatureNames[f] + ".csv");
  }
  p.forecast = p.out / "forecast.csv";
  p.figures = p.out / "figures";
  return p;
}

void require_file(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) {
    throw ConfigError(p.string() + " not found; run `meteocast " + producer + "` first");
  }
}

std::string provenance(const RunConfig& cfg) {
  return "# config_hash: " + hex16(cfg.config_hash()) + "\n# seed: " + std::to_string(cfg.seed) +
         "\n";
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + p.string());
  f << text;
  if (!f) throw Error("short write to " + p.string());
  std::cout << "wrote " << p.string() << "\n";
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json read_json(const fs::path& p, const std::string& producer) {
  require_file(p, producer);
  try {
    return json::parse(read_text(p));
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

/// Parses a comma-separated table, skipping '#' comment lines; first
/// remaining line is the header.
std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_text(p));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
      if (ch == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    fields.push_back(cur);
    rows.push_back(std::move(fields));
  }
  return rows;
}

std::int64_t range_begin(const std::string& date) { return date_start_hour(parse_date(date)); }
std::int64_t range_end(const std::string& date) { return date_start_hour(parse_date(date)) + 24; }

SeriesTable filter_range(const SeriesTable& s, const std::string& start, const std::string& end) {
  const std::int64_t a = range_begin(start);
  const std::int64_t b = range_end(end);
  SeriesTable out;
  out.latitude = s.latitude;
  out.longitude = s.longitude;
  for (const SeriesRow& r : s.rows) {
    if (r.t >= a && r.t < b) out.rows.push_back(r);
  }
  return out;
}

void print_gap_report(const CleanReport& rep) {
  std::cout << "cleaning: interpolated " << rep.interpolated << " values, clamped " << rep.clamped
            << ", left missing " << rep.still_missing << " across " << rep.gaps.size()
            << " gap(s)\n";
  for (const auto& [feature, t, len] : rep.gaps) {
    std::cout << "  gap: " << kFeatureNames[feature] << " from " << format_iso_hour(t) << " for "
              << len << " h\n";
  }
}

/// The cleaned series for commands that can start from either a previous
/// fetch or a local CSV.
void check_series_csv(const RunConfig& cfg) {
  if (!cfg.series_csv.empty() && !fs::exists(cfg.series_csv)) {
    throw ConfigError("series_csv not found: " + cfg.series_csv);
  }
}

SeriesTable load_clean_series(const RunConfig& cfg, const Paths& paths, bool persist_clean) {
  if (fs::exists(paths.clean)) return load_series_csv(paths.clean.string());
  if (cfg.series_csv.empty()) {
    throw ConfigError(paths.clean.string() +
                      " not found; run `meteocast fetch` first or set series_csv");
  }
  check_series_csv(cfg);
  const SeriesTable raw = load_series_csv(cfg.series_csv);
  CleanReport rep;
  SeriesTable clean = clean_series(raw, cfg.max_gap_hours, &rep);
  print_gap_report(rep);
  if (persist_clean) {
    fs::create_directories(paths.out);
    save_series_csv(paths.clean.string(), clean);
    std::ofstream f(paths.clean, std::ios::app);
    f << provenance(cfg);
    std::cout << "wrote " << paths.clean.string() << "\n";
  }
  return clean;
}

std::array<Scaler, kNumFeatures> load_scalers_json(const fs::path& p) {
  const json j = read_json(p, "prepare");
  std::array<Scaler, kNumFeatures> out;
  const auto& arr = j.at("scalers");
  if (!arr.is_array() || arr.size() != kNumFeatures) {
    throw FormatError(p.string() + ": expected 3 scalers");
  }
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    out[f].feature = arr[f].at("feature").get<std::string>();
    out[f].min = arr[f].at("min").get<double>();
    out[f].max = arr[f].at("max").get<double>();
  }
  return out;
}

WindowSet load_windows_checked(const fs::path& p, const RunConfig& cfg) {
  require_file(p, "prepare");
  try {
    return load_window_cache(p.string(), cfg.data_hash());
  } catch (const FormatError& e) {
    throw ConfigError(std::string(e.what()) + "; run `meteocast prepare` again");
  }
}

ForecastNet load_checkpoint_checked(const Paths& paths) {
  require_file(paths.ckpt, "train");
  return load_checkpoint(paths.ckpt.string());
}

Tensor slice_window(const WindowSet& ws, std::size_t w) {
  const std::size_t T = ws.n_past + ws.n_future;
  Tensor x({T, kNumChannels});
  std::copy(ws.inputs.data() + w * T * kNumChannels,
            ws.inputs.data() + (w + 1) * T * kNumChannels, x.data());
  return x;
}

const std::array<const char*, 7> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                             "#9467bd", "#8c564b", "#e377c2"};

// ---------------------------------------------------------------------------
// Commands

int cmd_synth(const RunConfig& cfg) {
  SynthConfig sc;
  sc.latitude = cfg.latitude;
  sc.longitude = cfg.longitude;
  sc.seed = cfg.seed;
  Date first = parse_date(cfg.train_start);
  Date last = parse_date(cfg.test_end);
  sc.start_year = first.year;
  if (last.year < first.year) throw ConfigError("test_end precedes train_start");
  sc.n_years = static_cast<std::size_t>(last.year - first.year) + 1;
  const SeriesTable s = generate_synthetic_series(sc);
  const fs::path target =
      cfg.series_csv.empty() ? make_paths(cfg).out / "synthetic_series.csv" : fs::path(cfg.series_csv);
  fs::create_directories(target.parent_path().empty() ? fs::path(".") : target.parent_path());
  save_series_csv(target.string(), s);
  std::ofstream f(target, std::ios::app);
  f << provenance(cfg);
  std::cout << "wrote " << target.string() << " (" << s.rows.size() << " rows)\n";
  return 0;
}

int cmd_fetch(const RunConfig& cfg) {
  const Paths paths = make_paths(cfg);
  fs::create_directories(paths.out);

  SeriesTable raw;
  if (!cfg.series_csv.empty()) {
    check_series_csv(cfg);
    raw = load_series_csv(cfg.series_csv);
    std::cout << "loaded " << raw.rows.size() << " rows from " << cfg.series_csv << "\n";
  } else {
    FetchOptions opts;
    if (!cfg.endpoint.empty()) opts.endpoint = cfg.endpoint;
    opts.cache_dir = (paths.out / "cache").string();
    const Date start = parse_date(std::min(cfg.train_start, cfg.test_start));
    const Date end = parse_date(std::max(cfg.train_end, cfg.test_end));
    raw = fetch_power_hourly(cfg.latitude, cfg.longitude, start, end, opts);
    std::cout << "fetched " << raw.rows.size() << " rows\n";
  }

  save_series_csv(paths.raw.string(), raw);
  {
    std::ofstream f(paths.raw, std::ios::app);
    f << provenance(cfg);
  }
  std::cout << "wrote " << paths.raw.string() << "\n";

  CleanReport rep;
  const SeriesTable clean = clean_series(raw, cfg.max_gap_hours, &rep);
  print_gap_report(rep);
  save_series_csv(paths.clean.string(), clean);
  {
    std::ofstream f(paths.clean, std::ios::app);
    f << provenance(cfg);
  }
  std::cout << "wrote " << paths.clean.string() << "\n";
  return 0;
}

int cmd_prepare(const RunConfig& cfg) {
  const Paths paths = make_paths(cfg);
  fs::create_directories(paths.out);
  const SeriesTable clean = load_clean_series(cfg, paths, true);

  const SeriesTable train_tab = filter_range(clean, cfg.train_start, cfg.train_end);
  const SeriesTable test_tab = filter_range(clean, cfg.test_start, cfg.test_end);
  if (train_tab.rows.empty()) throw ConfigError("no rows inside the train range");
  if (test_tab.rows.empty()) throw ConfigError("no rows inside the test range");

  const auto scalers = fit_scalers(train_tab);
  const WindowSet wtrain =
      build_windows(train_tab, scalers, cfg.hparams.n_past, cfg.hparams.n_future);
  const WindowSet wtest = build_windows(test_tab, scalers, cfg.hparams.n_past, cfg.hparams.n_future);
  if (wtrain.count() == 0) throw ConfigError("train range too short for a single window");
  if (wtest.count() == 0) throw ConfigError("test range too short for a single window");

  json sj{{"version", 1},
          {"config_hash", hex16(cfg.config_hash())},
          {"seed", cfg.seed},
          {"scalers", json::array()}};
  for (const Scaler& s : scalers) {
    sj["scalers"].push_back({{"feature", s.feature}, {"min", s.min}, {"max", s.max}});
  }
  write_json(paths.scalers, sj);

  save_window_cache(paths.wtrain.string(), wtrain, cfg.data_hash());
  std::cout << "wrote " << paths.wtrain.string() << " (" << wtrain.count() << " windows, "
            << wtrain.dropped << " dropped)\n";
  save_window_cache(paths.wtest.string(), wtest, cfg.data_hash());
  std::cout << "wrote " << paths.wtest.string() << " (" << wtest.count() << " windows, "
            << wtest.dropped << " dropped)\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const Paths paths = make_paths(cfg);
  require_file(paths.scalers, "prepare");
  const WindowSet windows = load_windows_checked(paths.wtrain, cfg);
  const auto scalers = load_scalers_json(paths.scalers);
  if (scaler_hash(scalers) != windows.scalers) {
    throw ConfigError("scalers.json does not match the window cache; run `meteocast prepare` again");
  }

  ForecastNet net = build_model(cfg.hparams, cfg.seed);
  net.scalers = scalers;

  TrainConfig tc;
  tc.max_epochs = cfg.max_epochs;
  tc.patience = cfg.patience;
  tc.validation_fraction = cfg.validation_fraction;
  tc.seed = cfg.seed;
  tc.n_threads = cfg.n_threads;
  tc.on_epoch = [](std::size_t epoch, double train_loss, double val_loss) {
    std::printf("epoch %zu  train %.6f  val %.6f\n", epoch, train_loss, val_loss);
  };
  const TrainHistory hist = train(net, windows, tc);

  save_checkpoint(net, paths.ckpt.string());
  std::cout << "wrote " << paths.ckpt.string() << "\n";

  json hj{{"version", 1},
          {"config_hash", hex16(cfg.config_hash())},
          {"seed", cfg.seed},
          {"best_epoch", hist.best_epoch},
          {"early_stopped", hist.early_stopped},
          {"epochs", json::array()}};
  for (const EpochStats& e : hist.epochs) {
    hj["epochs"].push_back(
        {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  }
  write_json(paths.history, hj);
  return 0;
}

int cmd_tune(const RunConfig& cfg) {
  const Paths paths = make_paths(cfg);
  fs::create_directories(paths.out);
  const SeriesTable clean = load_clean_series(cfg, paths, true);
  const SeriesTable train_tab = filter_range(clean, cfg.train_start, cfg.train_end);
  if (train_tab.rows.empty()) throw ConfigError("no rows inside the train range");
  const auto scalers = fit_scalers(train_tab);

  const WindowProvider provider = [&](std::size_t n_past) {
    TuneData data;
    data.scalers = scalers;
    data.windows = build_windows(train_tab, scalers, n_past, cfg.hparams.n_future);
    return data;
  };

  TuneOptions opts;
  opts.base = cfg.hparams;
  opts.budget = cfg.tune_budget;
  opts.train_epochs = cfg.tune_epochs;
  opts.patience = cfg.tune_patience;
  opts.validation_fraction = cfg.validation_fraction;
  opts.seed = cfg.seed;
  opts.lambda = cfg.tune_lambda;
  opts.sigma0 = cfg.tune_sigma0;
  opts.n_threads = cfg.n_threads;
  opts.on_evaluation = [](const TuneRecord& rec) {
    const std::string suffix = rec.error.empty() ? "" : "  (" + rec.error + ")";
    std::printf("eval %zu  n_past %zu  lr %.5f  dropout %.4f  layers %zu  units %zu  J %.6f%s\n",
                rec.evaluation, rec.hparams.n_past, rec.hparams.learning_rate,
                rec.hparams.dropout_rate, rec.hparams.n_bilstm_layers,
                rec.hparams.units_per_direction, rec.objective, suffix.c_str());
  };

  const TuneResult result = tune_hyperparameters(default_search_space(), provider, opts);

  std::string log = provenance(cfg);
  log += "evaluation,n_past,learning_rate,dropout_rate,n_bilstm_layers,units_per_direction,"
         "objective,seconds,error\n";
  for (const TuneRecord& rec : result.log) {
    log += std::to_string(rec.evaluation) + ',' + std::to_string(rec.hparams.n_past) + ',' +
           num(rec.hparams.learning_rate) + ',' + num(rec.hparams.dropout_rate) + ',' +
           std::to_string(rec.hparams.n_bilstm_layers) + ',' +
           std::to_string(rec.hparams.units_per_direction) + ',' + num(rec.objective) + ',' +
           num(rec.seconds) + ',' + rec.error + '\n';
  }
  write_text(paths.tune_log, log);

  if (result.best_evaluation == 0) {
    throw TrainError("every tuning evaluation failed; see " + paths.tune_log.string());
  }
  RunConfig best = cfg;
  best.hparams = result.best;
  json bj = config_to_json(best);
  bj["source_config_hash"] = hex16(cfg.config_hash());
  write_json(paths.best_cfg, bj);
  std::printf("best evaluation %zu  J %.6f  n_past %zu  lr %.5f  dropout %.4f  layers %zu  units %zu\n",
              result.best_evaluation, result.best_objective, result.best.n_past,
              result.best.learning_rate, result.best.dropout_rate, result.best.n_bilstm_layers,
              result.best.units_per_direction);
  return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
  const Paths paths = make_paths(cfg);
  const ForecastNet net = load_checkpoint_checked(paths);
  const WindowSet windows = load_windows_checked(paths.wtest, cfg);

  const MetricsReport rep = evaluate(net, windows, cfg.n_threads);
  const LeadSeries series = extract_lead_time_series(net, windows, cfg.leads, cfg.n_threads);

  json mj{{"version", 1},
          {"config_hash", hex16(cfg.config_hash())},
          {"seed", cfg.seed},
          {"window_count", rep.window_count},
          {"leads", cfg.leads}};
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const std::string name = kFeatureNames[f];
    mj["mae"][name] = rep.mae[f];
    mj["mae_over_std"][name] = rep.mae_over_std[f];
    mj["data_min"][name] = rep.data_min[f];
    mj["data_max"][name] = rep.data_max[f];
    mj["data_mean"][name] = rep.data_mean[f];
    mj["data_std"][name] = rep.data_std[f];
  }
  mj["per_timestep"] = json::array();
  for (std::size_t k = 0; k < rep.per_timestep.dim(0); ++k) {
    mj["per_timestep"].push_back({rep.per_timestep.at2(k, 0), rep.per_timestep.at2(k, 1),
                                  rep.per_timestep.at2(k, 2)});
  }
  write_json(paths.metrics, mj);
  write_text(paths.lead_series, provenance(cfg) + csv_lead_series(series));

  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    std::printf("%-10s MAE %.4f  (%.1f%% of std %.4f)\n", kFeatureNames[f], rep.mae[f],
                100.0 * rep.mae_over_std[f], rep.data_std[f]);
  }
  return 0;
}

int cmd_explain(const RunConfig& cfg) {
  const Paths paths = make_paths(cfg);
  const ForecastNet net = load_checkpoint_checked(paths);
  const WindowSet windows = load_windows_checked(paths.wtest, cfg);
  if (windows.scalers != scaler_hash(net.scalers)) {
    throw ConfigError("checkpoint scalers do not match the test windows; run `meteocast prepare` "
                      "and `meteocast train` from one config");
  }

  const AttentionProfile profile = extract_attention_profile(net, windows, cfg.n_threads);
  write_text(paths.attention,
             provenance(cfg) + csv_attention_profile(profile, windows.n_past));

  const std::size_t count = windows.count();
  const std::size_t samples = std::min(cfg.ig_samples == 0 ? count : cfg.ig_samples, count);
  std::vector<Attribution> attributions;
  attributions.reserve(samples * kNumFeatures);
  const Tensor baseline({windows.n_past + windows.n_future, kNumChannels});
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t w = i * count / samples;  // even deterministic coverage
    const Tensor x = slice_window(windows, w);
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      attributions.push_back(
          integrated_gradients(net, x, baseline, IgTarget{f, {}}, cfg.ig_steps));
    }
  }
  const AttributionSummary summary = aggregate_attributions(attributions);

  write_text(paths.imp_overall, provenance(cfg) + csv_overall_importance(summary));
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    write_text(paths.imp_curves[f],
               provenance(cfg) + csv_importance_curves(summary, f, windows.n_past));
  }

  std::vector<std::size_t> order(kNumChannels);
  for (std::size_t c = 0; c < kNumChannels; ++c) order[c] = c;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return summary.overall.at(a) > summary.overall.at(b);
  });
  std::cout << "overall importance ranking:";
  for (std::size_t c : order) std::cout << " " << kChannelNames[c];
  std::cout << "\n";
  return 0;
}

int cmd_predict(const RunConfig& cfg) {
  const Paths paths = make_paths(cfg);
  const ForecastNet net = load_checkpoint_checked(paths);
  const SeriesTable clean = load_clean_series(cfg, paths, false);

  const auto [input, first_hour] =
      build_forecast_input(clean, net.scalers, net.hparams.n_past, net.hparams.n_future);
  RngStream rng(net.seed);
  const ForwardResult out = forward(net, input, false, rng, nullptr, cfg.n_threads);

  std::string csv = provenance(cfg) + "utc_timestamp,temp_c,irrad_wm2,relhum_pct\n";
  const std::size_t T = net.hparams.n_past + net.hparams.n_future;
  for (std::size_t k = net.hparams.n_past; k < T; ++k) {
    const std::int64_t t = first_hour + static_cast<std::int64_t>(k - net.hparams.n_past);
    csv += format_iso_hour(t);
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      double v = invert_minmax(net.scalers[f], out.predictions.at3(0, k, f));
      if (f == kChIrrad) v = std::max(0.0, v);
      if (f == kChRelhum) v = std::clamp(v, 0.0, 100.0);
      csv += ',';
      csv += num(v);
    }
    csv += '\n';
  }
  write_text(paths.forecast, csv);
  std::cout << "forecast horizon " << format_iso_hour(first_hour) << " .. "
            << format_iso_hour(first_hour + static_cast<std::int64_t>(net.hparams.n_future) - 1)
            << "\n";
  return 0;
}

double parse_csv_double(const std::string& field) {
  if (field.empty()) return std::nan("");
  return std::stod(field);
}

int cmd_report(const RunConfig& cfg) {
  const Paths paths = make_paths(cfg);
  const json metrics = read_json(paths.metrics, "evaluate");
  require_file(paths.lead_series, "evaluate");
  require_file(paths.attention, "explain");
  require_file(paths.imp_overall, "explain");
  for (std::size_t f = 0; f < kNumFeatures; ++f) require_file(paths.imp_curves[f], "explain");
  fs::create_directories(paths.figures);

  // Figure 2: per-timestep MAE.
  MetricsReport rep;
  const auto& pts = metrics.at("per_timestep");
  rep.per_timestep = Tensor({pts.size(), kNumFeatures});
  for (std::size_t k = 0; k < pts.size(); ++k) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      rep.per_timestep.at2(k, f) = pts[k][f].get<double>();
    }
  }
  write_text(paths.figures / "figure2_per_timestep_mae.csv",
             provenance(cfg) + csv_per_timestep_mae(rep));
  {
    SvgChart chart;
    chart.title = "Per-timestep MAE";
    chart.x_label = "lead (hours)";
    chart.y_label = "MAE (physical units)";
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      SvgSeries s;
      s.label = kFeatureNames[f];
      s.color = kPalette[f];
      for (std::size_t k = 0; k < pts.size(); ++k) {
        s.x.push_back(static_cast<double>(k + 1));
        s.y.push_back(rep.per_timestep.at2(k, f));
      }
      chart.series.push_back(std::move(s));
    }
    write_text(paths.figures / "figure2_per_timestep_mae.svg", render_line_chart(chart));
  }

  // Figure 3: truth vs leads, temperature panel; the CSV is the full table.
  write_text(paths.figures / "figure3_lead_series.csv", read_text(paths.lead_series));
  {
    const auto rows = read_csv(paths.lead_series);
    if (rows.size() < 2) throw FormatError(paths.lead_series.string() + ": no data rows");
    const auto& header = rows.front();
    SvgChart chart;
    chart.title = "Temperature: truth vs forecasts";
    chart.x_label = "hours since series start";
    chart.y_label = "temp_c";
    const std::size_t limit = std::min<std::size_t>(rows.size() - 1, 336);
    for (std::size_t col = 1; col < header.size(); ++col) {
      const std::string& name = header[col];
      if (name.find("temp_c") == std::string::npos) continue;
      SvgSeries s;
      s.label = name.substr(0, name.size() - std::string("_temp_c").size());
      s.color = kPalette[chart.series.size() % kPalette.size()];
      for (std::size_t i = 0; i < limit; ++i) {
        s.x.push_back(static_cast<double>(i));
        s.y.push_back(parse_csv_double(rows[i + 1][col]));
      }
      chart.series.push_back(std::move(s));
    }
    write_text(paths.figures / "figure3_lead_series.svg", render_line_chart(chart));
  }

  // Figure 4: attention profile with a +-1 std band.
  write_text(paths.figures / "figure4_attention.csv", read_text(paths.attention));
  {
    const auto rows = read_csv(paths.attention);
    if (rows.size() < 2) throw FormatError(paths.attention.string() + ": no data rows");
    SvgChart chart;
    chart.title = "Mean attention per input timestep";
    chart.x_label = "timestep relative to present";
    chart.y_label = "attention weight";
    SvgSeries mean, hi, lo;
    mean.label = "mean";
    mean.color = kPalette[0];
    hi.label = "mean + std";
    hi.color = "#aec7e8";
    lo.label = "mean - std";
    lo.color = "#aec7e8";
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const double x = std::stod(rows[i][0]);
      const double m = std::stod(rows[i][1]);
      const double sd = std::stod(rows[i][2]);
      mean.x.push_back(x);
      mean.y.push_back(m);
      hi.x.push_back(x);
      hi.y.push_back(m + sd);
      lo.x.push_back(x);
      lo.y.push_back(m - sd);
    }
    chart.series.push_back(std::move(hi));
    chart.series.push_back(std::move(lo));
    chart.series.push_back(std::move(mean));
    write_text(paths.figures / "figure4_attention.svg", render_line_chart(chart));
  }

  // Figure 5: overall importance bars.
  write_text(paths.figures / "figure5_importance_overall.csv", read_text(paths.imp_overall));
  {
    const auto rows = read_csv(paths.imp_overall);
    std::vector<std::string> labels;
    std::vector<double> values;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      labels.push_back(rows[i][0]);
      values.push_back(std::stod(rows[i][1]));
    }
    write_text(paths.figures / "figure5_importance_overall.svg",
               render_bar_chart("Overall input-channel importance", labels, values));
  }

  // Figures 6-8: importance curves per target.
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const std::string stem =
        "figure" + std::to_string(6 + f) + "_importance_" + kFeatureNames[f];
    write_text(paths.figures / (stem + ".csv"), read_text(paths.imp_curves[f]));
    const auto rows = read_csv(paths.imp_curves[f]);
    if (rows.size() < 2) throw FormatError(paths.imp_curves[f].string() + ": no data rows");
    SvgChart chart;
    chart.title = std::string("Attribution toward ") + kFeatureNames[f];
    chart.x_label = "timestep relative to present";
    chart.y_label = "mean |IG|";
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      SvgSeries s;
      s.label = kChannelNames[c];
      s.color = kPalette[c];
      for (std::size_t i = 1; i < rows.size(); ++i) {
        s.x.push_back(std::stod(rows[i][0]));
        s.y.push_back(std::stod(rows[i][c + 1]));
      }
      chart.series.push_back(std::move(s));
    }
    write_text(paths.figures / (stem + ".svg"), render_line_chart(chart));
  }
  return 0;
}

}  // namespace

void RunConfig::validate() const {
  if (latitude < -90.0 || latitude > 90.0) throw ConfigError("latitude out of range");
  if (longitude < -180.0 || longitude > 180.0) throw ConfigError("longitude out of range");
  std::int64_t train_a, train_b, test_a, test_b;
  try {
    train_a = range_begin(train_start);
    train_b = range_end(train_end);
    test_a = range_begin(test_start);
    test_b = range_end(test_end);
  } catch (const ParseError& e) {
    throw ConfigError(std::string("bad date: ") + e.what());
  }
  if (train_a >= train_b) throw ConfigError("train range runs backwards");
  if (test_a >= test_b) throw ConfigError("test range runs backwards");
  if (train_a < test_b && test_a < train_b) {
    throw ConfigError("train and test date ranges overlap");
  }
  hparams.validate();
  if (!(validation_fraction > 0.0 && validation_fraction < 0.5)) {
    throw ConfigError("validation_fraction must lie in (0, 0.5)");
  }
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (patience == 0) throw ConfigError("patience must be positive");
  if (n_threads < 1) throw ConfigError("n_threads must be positive");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  for (int lead : leads) {
    if (lead < 1 || static_cast<std::size_t>(lead) > hparams.n_future) {
      throw ConfigError("lead " + std::to_string(lead) + " outside 1..n_future");
    }
  }
  if (leads.empty()) throw ConfigError("leads must not be empty");
}

std::uint64_t RunConfig::config_hash() const {
  const std::string text = config_to_json(*this).dump();
  return fnv1a(text.data(), text.size());
}

std::uint64_t RunConfig::data_hash() const {
  const json j{{"latitude", latitude},       {"longitude", longitude},
               {"train_start", train_start}, {"train_end", train_end},
               {"test_start", test_start},   {"test_end", test_end},
               {"series_csv", series_csv},   {"max_gap_hours", max_gap_hours},
               {"n_past", hparams.n_past},   {"n_future", hparams.n_future}};
  const std::string text = j.dump();
  return fnv1a(text.data(), text.size());
}

std::string RunConfig::checkpoint_path() const {
  if (!checkpoint.empty()) return checkpoint;
  return (fs::path(output_dir) / "checkpoint.bin").string();
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  RunConfig cfg;
  try {
    apply_config_json(j, cfg);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  write_json(path, config_to_json(cfg));
}

int run_cli(int argc, const char* const* argv) {
  RunConfig cfg;

  // The config file must be applied before flag parsing so flags win;
  // find it with a pre-scan.
  try {
    for (int i = 1; i < argc; ++i) {
      const std::string arg = argv[i];
      if (arg == "--config" && i + 1 < argc) {
        cfg = load_run_config(argv[i + 1]);
        break;
      }
      if (arg.rfind("--config=", 0) == 0) {
        cfg = load_run_config(arg.substr(9));
        break;
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  if (const char* env = std::getenv("METEOCAST_POWER_ENDPOINT")) {
    if (*env != '\0') cfg.endpoint = env;
  }

  CLI::App app{"48-hour joint forecasting of temperature, irradiance, and relative humidity"};
  app.require_subcommand(1);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"fetch", "Download (or import) the hourly series and write raw + cleaned CSVs"},
      {"prepare", "Split train/test, fit scalers, build window caches"},
      {"train", "Train the forecasting network and write a checkpoint"},
      {"tune", "CMA-ES hyperparameter search over the training data"},
      {"evaluate", "Score the checkpoint on the test windows"},
      {"explain", "Attention profile and integrated-gradients importance"},
      {"predict", "48-hour forecast from the latest observed hours"},
      {"report", "Render figure CSV/SVG files from evaluate/explain artifacts"},
      {"synth", "Generate a seeded synthetic hourly series CSV"},
  };
  std::string config_dummy;
  for (const auto& [name, desc] : commands) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_dummy, "JSON config file; flags override its values");
    sub->add_option("--latitude", cfg.latitude, "Site latitude, degrees");
    sub->add_option("--longitude", cfg.longitude, "Site longitude, degrees");
    sub->add_option("--train-start", cfg.train_start, "Training range start, YYYY-MM-DD");
    sub->add_option("--train-end", cfg.train_end, "Training range end, inclusive");
    sub->add_option("--test-start", cfg.test_start, "Test range start");
    sub->add_option("--test-end", cfg.test_end, "Test range end, inclusive");
    sub->add_option("--series-csv", cfg.series_csv, "Local hourly CSV replacing the network fetch");
    sub->add_option("--output-dir,-o", cfg.output_dir, "Artifact directory");
    sub->add_option("--endpoint", cfg.endpoint, "POWER API base URL");
    sub->add_option("--checkpoint", cfg.checkpoint, "Checkpoint path override");
    sub->add_option("--seed", cfg.seed, "Master seed");
    sub->add_option("--max-gap-hours", cfg.max_gap_hours, "Longest gap repaired by interpolation");
    sub->add_option("--threads", cfg.n_threads, "Worker threads");
    sub->add_option("--n-past", cfg.hparams.n_past, "Historical input hours");
    sub->add_option("--n-future", cfg.hparams.n_future, "Forecast horizon hours");
    sub->add_option("--learning-rate", cfg.hparams.learning_rate, "Adam learning rate");
    sub->add_option("--dropout", cfg.hparams.dropout_rate, "Dropout rate");
    sub->add_option("--layers", cfg.hparams.n_bilstm_layers, "BiLSTM layers");
    sub->add_option("--units", cfg.hparams.units_per_direction, "LSTM units per direction");
    sub->add_option("--batch-size", cfg.hparams.batch_size, "Training batch size");
    sub->add_option("--max-epochs", cfg.max_epochs, "Training epoch cap");
    sub->add_option("--patience", cfg.patience, "Early-stopping patience");
    sub->add_option("--validation-fraction", cfg.validation_fraction,
                    "Chronological tail held out for validation");
    sub->add_option("--budget", cfg.tune_budget, "Tuning objective evaluations");
    sub->add_option("--tune-epochs", cfg.tune_epochs, "Epoch cap per tuning candidate");
    sub->add_option("--tune-patience", cfg.tune_patience, "Early-stopping patience while tuning");
    sub->add_option("--lambda", cfg.tune_lambda, "CMA-ES population size (0 = default)");
    sub->add_option("--sigma0", cfg.tune_sigma0, "CMA-ES initial step size");
    sub->add_option("--ig-samples", cfg.ig_samples, "Test windows sampled for attribution");
    sub->add_option("--ig-steps", cfg.ig_steps, "Integration path steps");
    sub->add_option("--leads", cfg.leads, "Leads for the forecast time series")->delimiter(',');
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    cfg.validate();
    if (command == "fetch") return cmd_fetch(cfg);
    if (command == "prepare") return cmd_prepare(cfg);
    if (command == "train") return cmd_train(cfg);
    if (command == "tune") return cmd_tune(cfg);
    if (command == "evaluate") return cmd_evaluate(cfg);
    if (command == "explain") return cmd_explain(cfg);
    if (command == "predict") return cmd_predict(cfg);
    if (command == "report") return cmd_report(cfg);
    if (command == "synth") return cmd_synth(cfg);
    throw ConfigError("unknown command " + command);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace meteo
