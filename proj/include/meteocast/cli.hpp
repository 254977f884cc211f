#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meteocast/model.hpp"

namespace meteo {

// Everything one run needs, assembled from defaults, an optional JSON
// config file, the METEOCAST_POWER_ENDPOINT environment variable, and
// command-line flags, in that order of increasing precedence.

struct RunConfig {
  double latitude = 37.98;
  double longitude = 23.73;
  std::string train_start = "2019-01-01";
  std::string train_end = "2022-12-31";
  std::string test_start = "2023-01-01";
  std::string test_end = "2023-12-31";
  std::string series_csv;   // local hourly CSV replacing the network fetch
  std::string output_dir = "out";
  std::string endpoint;     // POWER base URL; empty selects the default
  std::string checkpoint;   // empty derives <output_dir>/checkpoint.bin
  std::uint64_t seed = 0;
  std::size_t max_gap_hours = 6;
  int n_threads = 1;
  HParams hparams;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  double validation_fraction = 0.1;
  std::size_t tune_budget = 40;
  std::size_t tune_epochs = 15;
  std::size_t tune_patience = 5;
  std::size_t tune_lambda = 0;  // 0 selects the dimension-based default
  double tune_sigma0 = 0.25;
  std::size_t ig_samples = 64;
  std::size_t ig_steps = 64;
  std::vector<int> leads = {1, 25, 48};

  /// Field-range checks plus cross-field rules: dates parse, each range
  /// runs forward, train and test ranges are disjoint, a configured
  /// series_csv exists.
  void validate() const;

  /// Hash of the full effective configuration, stamped into artifacts.
  std::uint64_t config_hash() const;

  /// Hash of only the window-shaping fields; keys the window caches so a
  /// seed or training-schedule change does not force a re-prepare.
  std::uint64_t data_hash() const;

  std::string checkpoint_path() const;
};

/// JSON config file applied over defaults. Unknown keys are rejected.
RunConfig load_run_config(const std::string& path);

void save_run_config(const RunConfig& cfg, const std::string& path);

/// Full command-line surface; returns the process exit code
/// (0 success, 1 runtime failure, 2 invalid input or config).
int run_cli(int argc, const char* const* argv);

}  // namespace meteo
