#include "meteocast/cmaes.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "meteocast/errors.hpp"
#include "meteocast/trainer.hpp"

namespace meteo {

namespace {

std::size_t default_lambda(std::size_t n) {
  return 4 + static_cast<std::size_t>(std::floor(3.0 * std::log(static_cast<double>(n))));
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

CmaesState cmaes_init(const std::vector<double>& x0, double sigma0, std::size_t lambda,
                      std::uint64_t seed) {
  if (x0.empty()) throw ConfigError("cmaes_init: empty initial point");
  if (!(sigma0 > 0.0)) throw ConfigError("cmaes_init: sigma0 must be positive");
  const std::size_t n = x0.size();
  if (lambda == 0) lambda = default_lambda(n);
  if (lambda < 2) throw ConfigError("cmaes_init: lambda must be at least 2");

  CmaesState s;
  s.n = n;
  s.lambda = lambda;
  s.mu = lambda / 2;
  s.mean = x0;
  s.sigma = sigma0;
  s.cov = Tensor({n, n});
  for (std::size_t i = 0; i < n; ++i) s.cov.at2(i, i) = 1.0;
  s.path_sigma.assign(n, 0.0);
  s.path_cov.assign(n, 0.0);

  s.weights.resize(s.mu);
  const double base = std::log((static_cast<double>(lambda) + 1.0) / 2.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < s.mu; ++i) {
    s.weights[i] = base - std::log(static_cast<double>(i + 1));
    sum += s.weights[i];
  }
  double sumsq = 0.0;
  for (double& w : s.weights) {
    w /= sum;
    sumsq += w * w;
  }
  s.mu_eff = 1.0 / sumsq;

  const double nd = static_cast<double>(n);
  s.c_sigma = (s.mu_eff + 2.0) / (nd + s.mu_eff + 5.0);
  s.d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((s.mu_eff - 1.0) / (nd + 1.0)) - 1.0) + s.c_sigma;
  s.c_cov_path = (4.0 + s.mu_eff / nd) / (nd + 4.0 + 2.0 * s.mu_eff / nd);
  s.c_rank_one = 2.0 / ((nd + 1.3) * (nd + 1.3) + s.mu_eff);
  s.c_rank_mu = std::min(1.0 - s.c_rank_one,
                         2.0 * (s.mu_eff - 2.0 + 1.0 / s.mu_eff) / ((nd + 2.0) * (nd + 2.0) + s.mu_eff));
  s.chi_n = std::sqrt(nd) * (1.0 - 1.0 / (4.0 * nd) + 1.0 / (21.0 * nd * nd));
  s.rng = RngStream(seed);
  return s;
}

namespace {

struct CovFactor {
  Tensor vectors;            // eigenvector columns
  std::vector<double> sqrt_values;
};

CovFactor factor_covariance(const Tensor& cov) {
  SymEig eig = sym_eig(cov);
  const std::size_t n = eig.values.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(eig.values.at(i) > 0.0)) {
      std::ostringstream msg;
      msg << "covariance is not positive definite; eigenvalues:";
      for (std::size_t j = 0; j < n; ++j) msg << ' ' << eig.values.at(j);
      throw NumericError(msg.str());
    }
  }
  CovFactor f;
  f.vectors = std::move(eig.vectors);
  f.sqrt_values.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.sqrt_values[i] = std::sqrt(eig.values.at(i));
  return f;
}

}  // namespace

std::vector<std::vector<double>> cmaes_ask(CmaesState& state) {
  if (state.n == 0) throw StateError("cmaes_ask on an uninitialized state");
  const CovFactor f = factor_covariance(state.cov);
  const std::size_t n = state.n;

  std::vector<std::vector<double>> candidates(state.lambda);
  std::vector<double> z(n);
  for (auto& x : candidates) {
    for (double& zi : z) zi = state.rng.next_normal();
    x.assign(state.mean.begin(), state.mean.end());
    // x = mean + sigma * B * diag(sqrt(d)) * z
    for (std::size_t i = 0; i < n; ++i) {
      double yi = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        yi += f.vectors.at2(i, j) * f.sqrt_values[j] * z[j];
      }
      x[i] += state.sigma * yi;
    }
  }
  return candidates;
}

void cmaes_tell(CmaesState& state, const std::vector<std::vector<double>>& candidates,
                const std::vector<double>& fitnesses) {
  if (state.n == 0) throw StateError("cmaes_tell on an uninitialized state");
  if (candidates.size() != state.lambda || fitnesses.size() != state.lambda) {
    throw ShapeError("cmaes_tell: expected " + std::to_string(state.lambda) +
                     " candidates and fitnesses, got " + std::to_string(candidates.size()) +
                     " and " + std::to_string(fitnesses.size()));
  }
  const std::size_t n = state.n;
  for (const auto& c : candidates) {
    if (c.size() != n) throw ShapeError("cmaes_tell: candidate dimension mismatch");
  }

  // Rank ascending; non-finite fitness counts as worst; ties keep
  // candidate order.
  std::vector<std::size_t> order(state.lambda);
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](std::size_t i) {
    return std::isfinite(fitnesses[i]) ? fitnesses[i] : std::numeric_limits<double>::infinity();
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

  // Steps of the mu best in sampling space: y_i = (x_i - mean) / sigma.
  std::vector<std::vector<double>> y(state.mu, std::vector<double>(n));
  for (std::size_t r = 0; r < state.mu; ++r) {
    const auto& x = candidates[order[r]];
    for (std::size_t i = 0; i < n; ++i) y[r][i] = (x[i] - state.mean[i]) / state.sigma;
  }
  std::vector<double> y_w(n, 0.0);
  for (std::size_t r = 0; r < state.mu; ++r) {
    for (std::size_t i = 0; i < n; ++i) y_w[i] += state.weights[r] * y[r][i];
  }

  // C^(-1/2) y_w through the eigendecomposition of the pre-update C.
  const CovFactor f = factor_covariance(state.cov);
  std::vector<double> tmp(n, 0.0);  // B^T y_w / sqrt(d)
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += f.vectors.at2(i, j) * y_w[i];
    tmp[j] = acc / f.sqrt_values[j];
  }
  std::vector<double> c_inv_sqrt_yw(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += f.vectors.at2(i, j) * tmp[j];
    c_inv_sqrt_yw[i] = acc;
  }

  for (std::size_t i = 0; i < n; ++i) state.mean[i] += state.sigma * y_w[i];

  const double cs = state.c_sigma;
  const double path_sigma_scale = std::sqrt(cs * (2.0 - cs) * state.mu_eff);
  for (std::size_t i = 0; i < n; ++i) {
    state.path_sigma[i] = (1.0 - cs) * state.path_sigma[i] + path_sigma_scale * c_inv_sqrt_yw[i];
  }

  const double gen1 = static_cast<double>(state.generation + 1);
  const double ps_norm = norm2(state.path_sigma);
  const double discount = std::sqrt(1.0 - std::pow(1.0 - cs, 2.0 * gen1));
  const bool h_sigma =
      ps_norm / discount < (1.4 + 2.0 / (static_cast<double>(n) + 1.0)) * state.chi_n;

  const double cc = state.c_cov_path;
  const double path_cov_scale = h_sigma ? std::sqrt(cc * (2.0 - cc) * state.mu_eff) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    state.path_cov[i] = (1.0 - cc) * state.path_cov[i] + path_cov_scale * y_w[i];
  }

  const double c1 = state.c_rank_one;
  const double cmu = state.c_rank_mu;
  const double stall = h_sigma ? 0.0 : cc * (2.0 - cc);  // variance loss compensation
  const double keep = 1.0 - c1 - cmu + c1 * stall;
  Tensor next({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double v = keep * state.cov.at2(i, j) + c1 * state.path_cov[i] * state.path_cov[j];
      for (std::size_t r = 0; r < state.mu; ++r) {
        v += cmu * state.weights[r] * y[r][i] * y[r][j];
      }
      next.at2(i, j) = v;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double v = 0.5 * (next.at2(i, j) + next.at2(j, i));
      next.at2(i, j) = v;
      next.at2(j, i) = v;
    }
  }
  state.cov = std::move(next);

  state.sigma *= std::exp((cs / state.d_sigma) * (ps_norm / state.chi_n - 1.0));
  state.generation += 1;
}

// ---------------------------------------------------------------------------

void SearchSpace::validate() const {
  if (dims.empty()) throw ConfigError("search space has no dimensions");
  for (const SearchDim& d : dims) {
    if (d.name.empty()) throw ConfigError("search dimension without a name");
    if (!(d.lower < d.upper)) {
      throw ConfigError("search dimension " + d.name + " needs lower < upper");
    }
    if (d.log_scale && !(d.lower > 0.0)) {
      throw ConfigError("log-scale dimension " + d.name + " needs a positive lower bound");
    }
  }
  for (std::size_t i = 0; i < dims.size(); ++i) {
    for (std::size_t j = i + 1; j < dims.size(); ++j) {
      if (dims[i].name == dims[j].name) {
        throw ConfigError("duplicate search dimension " + dims[i].name);
      }
    }
  }
}

SearchSpace default_search_space() {
  SearchSpace s;
  s.dims = {
      SearchDim{"n_past", 8.0, 168.0, false, true},
      SearchDim{"learning_rate", 1e-4, 1e-1, true, false},
      SearchDim{"dropout", 0.0, 0.5, false, false},
      SearchDim{"layers", 1.0, 4.0, false, true},
      SearchDim{"units", 4.0, 64.0, true, true},
  };
  return s;
}

std::vector<double> space_to_internal(const SearchSpace& space, const std::vector<double>& values) {
  if (values.size() != space.size()) throw ShapeError("space_to_internal: dimension mismatch");
  std::vector<double> u(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const SearchDim& d = space.dims[i];
    if (d.log_scale) {
      u[i] = (std::log(values[i]) - std::log(d.lower)) / (std::log(d.upper) - std::log(d.lower));
    } else {
      u[i] = (values[i] - d.lower) / (d.upper - d.lower);
    }
  }
  return u;
}

namespace {

double reflect01(double u) {
  double r = std::fmod(u, 2.0);
  if (r < 0.0) r += 2.0;
  return r <= 1.0 ? r : 2.0 - r;
}

}  // namespace

std::vector<double> space_from_internal(const SearchSpace& space,
                                        const std::vector<double>& internal) {
  if (internal.size() != space.size()) throw ShapeError("space_from_internal: dimension mismatch");
  std::vector<double> v(internal.size());
  for (std::size_t i = 0; i < internal.size(); ++i) {
    const SearchDim& d = space.dims[i];
    const double u = reflect01(internal[i]);
    if (d.log_scale) {
      v[i] = std::exp(std::log(d.lower) + u * (std::log(d.upper) - std::log(d.lower)));
    } else {
      v[i] = d.lower + u * (d.upper - d.lower);
    }
  }
  return v;
}

HParams space_to_hparams(const SearchSpace& space, const std::vector<double>& values,
                         const HParams& base) {
  if (values.size() != space.size()) throw ShapeError("space_to_hparams: dimension mismatch");
  HParams h = base;
  for (std::size_t i = 0; i < space.size(); ++i) {
    const SearchDim& d = space.dims[i];
    const double v = d.integer ? static_cast<double>(std::llround(values[i])) : values[i];
    if (d.name == "n_past") {
      h.n_past = static_cast<std::size_t>(v);
    } else if (d.name == "learning_rate") {
      h.learning_rate = v;
    } else if (d.name == "dropout") {
      h.dropout_rate = v;
    } else if (d.name == "layers") {
      h.n_bilstm_layers = static_cast<std::size_t>(v);
    } else if (d.name == "units") {
      h.units_per_direction = static_cast<std::size_t>(v);
    } else {
      throw ConfigError("unknown search dimension \"" + d.name + "\"");
    }
  }
  return h;
}

// ---------------------------------------------------------------------------

double tuning_objective(const ForecastNet& net, const WindowSet& val_windows, int n_threads) {
  MetricsReport rep = evaluate(net, val_windows, n_threads);
  double j = 0.0;
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const double range = net.scalers[f].max - net.scalers[f].min;
    if (!(range > 0.0)) throw ConfigError("degenerate feature range for " + net.scalers[f].feature);
    double steps = 0.0;
    for (std::size_t k = 0; k < val_windows.n_future; ++k) steps += rep.per_timestep.at2(k, f);
    j += steps / range;
  }
  return j;
}

TuneResult tune_hyperparameters(const SearchSpace& space, const WindowProvider& provider,
                                const TuneOptions& opts) {
  space.validate();
  if (!provider) throw ConfigError("tune_hyperparameters: no window provider");
  const std::size_t n = space.size();
  const std::size_t lambda = opts.lambda == 0 ? default_lambda(n) : opts.lambda;
  if (opts.budget < lambda) {
    throw ConfigError("budget " + std::to_string(opts.budget) + " is below lambda " +
                      std::to_string(lambda));
  }

  std::vector<double> center(n, 0.5);
  CmaesState state = cmaes_init(center, opts.sigma0, lambda, opts.seed);

  TuneResult result;
  result.best = opts.base;
  result.best_objective = std::numeric_limits<double>::infinity();

  std::size_t done = 0;
  while (done < opts.budget) {
    std::vector<std::vector<double>> candidates = cmaes_ask(state);
    const std::size_t batch = std::min(lambda, opts.budget - done);
    std::vector<double> fitnesses(lambda, std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < batch; ++k) {
      TuneRecord rec;
      rec.evaluation = ++done;
      rec.values = space_from_internal(space, candidates[k]);
      const auto start = std::chrono::steady_clock::now();
      try {
        HParams h = space_to_hparams(space, rec.values, opts.base);
        h.validate();
        rec.hparams = h;
        TuneData data = provider(h.n_past);
        ForecastNet net = build_model(h, opts.seed);
        net.scalers = data.scalers;
        TrainConfig cfg;
        cfg.max_epochs = opts.train_epochs;
        cfg.patience = opts.patience;
        cfg.validation_fraction = opts.validation_fraction;
        cfg.seed = opts.seed;
        cfg.n_threads = opts.n_threads;
        train(net, data.windows, cfg);
        const std::size_t count = data.windows.count();
        std::size_t n_val = static_cast<std::size_t>(
            std::floor(static_cast<double>(count) * cfg.validation_fraction));
        n_val = std::clamp<std::size_t>(n_val, 1, count - 1);
        WindowSet val = window_range(data.windows, count - n_val, count);
        rec.objective = tuning_objective(net, val, opts.n_threads);
      } catch (const Error& e) {
        rec.objective = std::numeric_limits<double>::infinity();
        rec.error = e.what();
      }
      rec.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      fitnesses[k] = rec.objective;
      if (rec.objective < result.best_objective) {
        result.best_objective = rec.objective;
        result.best = rec.hparams;
        result.best_evaluation = rec.evaluation;
      }
      if (opts.on_evaluation) opts.on_evaluation(rec);
      result.log.push_back(std::move(rec));
    }
    if (batch < lambda) break;  // budget exhausted mid-generation
    cmaes_tell(state, candidates, fitnesses);
  }
  return result;
}

}  // namespace meteo
