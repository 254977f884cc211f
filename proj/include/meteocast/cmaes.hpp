#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "meteocast/model.hpp"
#include "meteocast/rng.hpp"
#include "meteocast/tensor.hpp"

namespace meteo {

// Covariance matrix adaptation evolution strategy (ask/tell form) with
// rank-one and rank-mu covariance updates and cumulative step-size
// adaptation, plus the hyperparameter-search driver built on it.

struct CmaesState {
  std::size_t n = 0;       // search dimension
  std::size_t lambda = 0;  // population size
  std::size_t mu = 0;      // parents used in recombination
  std::vector<double> mean;
  double sigma = 0.0;
  Tensor cov;  // [n, n], symmetric positive definite
  std::vector<double> path_sigma;
  std::vector<double> path_cov;
  std::vector<double> weights;  // mu positive recombination weights, sum 1
  double mu_eff = 0.0;
  double c_sigma = 0.0, d_sigma = 0.0;
  double c_cov_path = 0.0;  // c_c
  double c_rank_one = 0.0;  // c_1
  double c_rank_mu = 0.0;   // c_mu
  double chi_n = 0.0;       // E||N(0, I)||
  std::size_t generation = 0;
  RngStream rng{0};
};

/// lambda == 0 picks the default 4 + floor(3 ln n). Requires sigma0 > 0,
/// lambda >= 2, non-empty x0.
CmaesState cmaes_init(const std::vector<double>& x0, double sigma0, std::size_t lambda,
                      std::uint64_t seed);

/// Draws lambda candidates mean + sigma * N(0, C), sampled through the
/// eigendecomposition of C. Throws NumericError listing the eigenvalues
/// if C is not positive definite.
std::vector<std::vector<double>> cmaes_ask(CmaesState& state);

/// Standard update: mean moves to the weighted recombination of the mu
/// best candidates, evolution paths and C absorb the step, sigma adapts.
/// Non-finite fitnesses rank worst; ties break by candidate index. C is
/// re-symmetrized every generation.
void cmaes_tell(CmaesState& state, const std::vector<std::vector<double>>& candidates,
                const std::vector<double>& fitnesses);

// ---------------------------------------------------------------------------
// Hyperparameter search space

struct SearchDim {
  std::string name;
  double lower = 0.0;
  double upper = 1.0;
  bool log_scale = false;
  bool integer = false;  // rounded at evaluation only; the search is continuous
};

struct SearchSpace {
  std::vector<SearchDim> dims;

  std::size_t size() const { return dims.size(); }
  void validate() const;  // lower < upper, log dims positive
};

/// The tuned dimensions: n_past [8,168] int, learning_rate [1e-4,1e-1]
/// log, dropout [0,0.5], layers [1,4] int, units [4,64] int log.
SearchSpace default_search_space();

/// Physical value -> internal coordinate in [0, 1] (log dims through ln).
std::vector<double> space_to_internal(const SearchSpace& space, const std::vector<double>& values);

/// Internal -> physical, reflecting out-of-box coordinates back into
/// [0, 1] first. Integer dims stay continuous here.
std::vector<double> space_from_internal(const SearchSpace& space,
                                        const std::vector<double>& internal);

/// Applies named dimension values to a copy of base, rounding integer
/// dims. Unknown dimension names are a ConfigError.
HParams space_to_hparams(const SearchSpace& space, const std::vector<double>& values,
                         const HParams& base);

// ---------------------------------------------------------------------------
// Tuning driver

/// Validation objective: J = sum over features of (sum over forecast
/// steps of MAE in physical units) / feature range, range taken from the
/// training scalers. Lower is better; a perfect predictor scores 0.
double tuning_objective(const ForecastNet& net, const WindowSet& val_windows, int n_threads = 1);

struct TuneRecord {
  std::size_t evaluation = 0;   // 1-based
  std::vector<double> values;   // physical-space values, integer dims unrounded
  HParams hparams;              // as evaluated
  double objective = 0.0;       // +inf when the evaluation failed
  double seconds = 0.0;
  std::string error;            // failure reason when objective is +inf
};

struct TuneResult {
  HParams best;
  double best_objective = 0.0;
  std::size_t best_evaluation = 0;  // 0 when nothing finished
  std::vector<TuneRecord> log;
};

struct TuneData {
  WindowSet windows;  // training windows, chronological
  std::array<Scaler, kNumFeatures> scalers;
};

/// Windows rebuilt for a candidate n_past (n_future fixed by the base
/// hyperparameters); scalers must be the ones the windows were built with.
using WindowProvider = std::function<TuneData(std::size_t n_past)>;

struct TuneOptions {
  HParams base;                  // fields not searched are taken from here
  std::size_t budget = 40;       // objective evaluations
  std::size_t train_epochs = 15; // capped per-candidate training protocol
  std::size_t patience = 5;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  std::size_t lambda = 0;  // 0 = default
  double sigma0 = 0.25;    // in internal [0,1] coordinates
  int n_threads = 1;
  std::function<void(const TuneRecord&)> on_evaluation;
};

/// Searches the space with CMA-ES; every candidate is trained with the
/// capped protocol and scored on the chronological validation tail.
/// Candidates whose training fails score +inf (worst rank). Returns the
/// best rounded hyperparameters and the full evaluation log.
TuneResult tune_hyperparameters(const SearchSpace& space, const WindowProvider& provider,
                                const TuneOptions& opts);

}  // namespace meteo
